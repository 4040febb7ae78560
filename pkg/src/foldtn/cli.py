"""Command line driver: ``run``, ``compare``, ``sweep`` and ``reproduce``.

Every run writes its data as CSV (17 significant digits) next to a JSON
manifest that echoes the configuration, the code version, timestamps, the
per-step or per-column diagnostics file names and the final observables.
Manifests are written atomically; a failed run leaves a manifest with
``status: failed`` and the process exits nonzero after printing a JSON error
object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .continuum import (
    build_HL,
    dephasing_fixed_point_check,
    evolve_lambda_imag,
    ferro_doubled_hamiltonian,
    half_chain_entropy,
    product_projector,
    temporal_entropy_dense,
    trace_distance_to_mixed,
    evolve_lambda_real,
)
from .free_fermion import CouplingForm, Variant, growth_study
from .itebd import run_itebd
from .spin_models import IsingParams, LocalState, named_state
from .transverse import FixedPointPolicy, run_to_fixed_point, temporal_entropy

log = logging.getLogger("foldtn")

SCHEMA_VERSION = 1
ENGINES = ("itebd", "fold", "hybrid", "oracle-real", "oracle-imag", "fermion")

ITEBD_COLUMNS = ("t", "x_expect", "z_expect", "max_entropy", "discarded_weight_cum")
COLUMN_FIELDS = ("column", "max_bond", "x", "z", "identity_ratio", "identity_error", "infidelity",
                 "max_discarded", "temporal_entropy")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ComparisonError(ValueError):
    pass


@dataclass
class RunConfig:
    engine: str
    model: IsingParams = field(default_factory=IsingParams)
    init: str | list = "x_plus"
    chi: int | None = 64
    t_total: float = 2.0
    policy: dict = field(default_factory=dict)
    n_spins: int = 3
    fermion: dict = field(default_factory=dict)
    seed: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        if "engine" not in d:
            raise ConfigError("engine", "required")
        d = dict(d)
        model = d.get("model", {})
        try:
            d["model"] = model if isinstance(model, IsingParams) else IsingParams(**model)
        except (TypeError, ValueError) as exc:
            raise ConfigError("model", str(exc)) from None
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.engine not in ENGINES:
            raise ConfigError("engine", f"must be one of {ENGINES}")
        self.local_state()
        if self.engine in ("itebd", "fold", "hybrid", "oracle-real", "oracle-imag"):
            if not isinstance(self.t_total, (int, float)) or self.t_total <= 0:
                raise ConfigError("t_total", "must be a positive number")
        if self.engine in ("itebd", "fold", "hybrid"):
            try:
                self.model.steps_for(self.t_total)
            except ValueError as exc:
                raise ConfigError("t_total", str(exc)) from None
        if self.engine in ("itebd", "fold", "hybrid"):
            if self.chi is not None and (not isinstance(self.chi, int) or self.chi < 1):
                raise ConfigError("chi", "must be a positive integer")
            if self.engine == "itebd" and self.chi is None:
                raise ConfigError("chi", "required for itebd")
        if self.engine in ("fold", "hybrid"):
            try:
                self.fixed_point_policy()
            except (TypeError, ValueError) as exc:
                raise ConfigError("policy", str(exc)) from None
        if self.engine.startswith("oracle") and not 1 <= int(self.n_spins) <= 6:
            raise ConfigError("n_spins", "oracle runs support 1..6 spins")
        if self.engine == "fermion":
            allowed = {"n_half", "dt", "t_max", "variants", "coupling_form", "record_every"}
            for key in self.fermion:
                if key not in allowed:
                    raise ConfigError(f"fermion.{key}", "unknown field")
            try:
                for v in self.fermion.get("variants", []):
                    Variant(v)
                CouplingForm(self.fermion.get("coupling_form", "imag_hopping"))
            except ValueError as exc:
                raise ConfigError("fermion", str(exc)) from None

    def local_state(self) -> LocalState:
        try:
            if isinstance(self.init, str):
                return named_state(self.init)
            amps = [complex(*a) if isinstance(a, (list, tuple)) else complex(a) for a in self.init]
            return LocalState.from_amplitudes(amps)
        except (TypeError, ValueError) as exc:
            raise ConfigError("init", str(exc)) from None

    def fixed_point_policy(self) -> FixedPointPolicy:
        return FixedPointPolicy(**self.policy)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    cols = {}
    for k, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[k]) for r in data])
        except ValueError:
            cols[name] = np.array([r[k] for r in data])
    return cols


def write_json_atomic(path: Path, obj) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".manifest-", dir=path.parent)
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


# --- engines -----------------------------------------------------------------------

def _run_itebd(cfg: RunConfig, out: Path) -> dict:
    ts = run_itebd(cfg.model, cfg.t_total, cfg.chi, cfg.local_state())
    write_csv(out / "series.csv", ITEBD_COLUMNS, ts.rows())
    return {"files": ["series.csv"], "final": {"t": float(ts.t[-1]), "x": float(ts.x[-1]),
                                               "z": float(ts.z[-1]),
                                               "discarded_weight_cum": float(ts.discarded[-1])}}


def _run_transverse(cfg: RunConfig, out: Path) -> dict:
    policy = cfg.fixed_point_policy()
    res = run_to_fixed_point(cfg.model, cfg.t_total, cfg.chi, "normal" if cfg.engine == "fold" else "hybrid",
                             cfg.local_state(), policy)
    write_csv(out / "columns.csv", COLUMN_FIELDS,
              ([getattr(d, f) for f in COLUMN_FIELDS] for d in res.diagnostics))
    final = {
        "t": cfg.t_total, "x": res.x, "z": res.z, "x_imag": res.x_imag,
        "identity_error": res.identity_error, "fluctuation": res.fluctuation,
        "converged": res.converged, "columns": res.state.n_columns,
        "temporal_entropy": temporal_entropy(res.state),
    }
    # wall-clock timings live in the manifest so the CSV stays bitwise reproducible
    return {"files": ["columns.csv"], "final": final, "partial": not res.converged,
            "column_seconds": [d.seconds for d in res.diagnostics]}


def _time_grid(t_total: float, step: float) -> np.ndarray:
    n = max(1, int(round(t_total / step)))
    return np.linspace(0.0, t_total, n + 1)


def _run_oracle_real(cfg: RunConfig, out: Path) -> dict:
    hl = build_HL(cfg.model, cfg.n_spins)
    lam = product_projector(cfg.local_state().amplitudes, cfg.n_spins)
    rows = []
    grid = _time_grid(cfg.t_total, 0.5)
    for k, t in enumerate(grid):
        if k:
            lam = evolve_lambda_real(lam, hl, cfg.model.j_coupling, t - grid[k - 1]).value
        rows.append((t, temporal_entropy_dense(lam, lam), trace_distance_to_mixed(lam)))
    write_csv(out / "oracle_real.csv", ("t", "temporal_entropy", "trace_distance_to_mixed"), rows)
    return {"files": ["oracle_real.csv"],
            "final": {"t": cfg.t_total, "temporal_entropy": rows[-1][1],
                      "trace_distance_to_mixed": rows[-1][2]}}


def _run_oracle_imag(cfg: RunConfig, out: Path) -> dict:
    hl = build_HL(cfg.model, cfg.n_spins)
    lam = product_projector(cfg.local_state().amplitudes, cfg.n_spins)
    rows = []
    grid = _time_grid(cfg.t_total, 1.0)
    for k, t in enumerate(grid):
        if k:
            lam = evolve_lambda_imag(lam, hl, cfg.model.j_coupling, t - grid[k - 1]).value
        rows.append((t, temporal_entropy_dense(lam, lam)))
    w, v = np.linalg.eigh(ferro_doubled_hamiltonian(hl, cfg.model.j_coupling))
    ground = half_chain_entropy(v[:, 0], cfg.n_spins)
    write_csv(out / "oracle_imag.csv", ("tau", "temporal_entropy"), rows)
    return {"files": ["oracle_imag.csv"],
            "final": {"tau": cfg.t_total, "temporal_entropy": rows[-1][1],
                      "ferro_ground_state_entropy": ground, "ferro_ground_energy": float(w[0])}}


def _run_fermion(cfg: RunConfig, out: Path) -> dict:
    f = cfg.fermion
    variants = f.get("variants", ["uniform", "sign_flipped", "nonhermitian_tilde"])
    series = growth_study(int(f.get("n_half", 100)), float(f.get("t_max", cfg.t_total)),
                          float(f.get("dt", 0.05)), variants,
                          f.get("coupling_form", "imag_hopping"), int(f.get("record_every", 10)))
    files = []
    final = {}
    for v, s in series.items():
        name = f"fermion_{v.value}.csv"
        write_csv(out / name, ("t", "entropy"), zip(s.t, s.entropy))
        files.append(name)
        final[v.value] = float(s.entropy[-1])
    return {"files": files, "final": final}


_ENGINES = {
    "itebd": _run_itebd, "fold": _run_transverse, "hybrid": _run_transverse,
    "oracle-real": _run_oracle_real, "oracle-imag": _run_oracle_imag, "fermion": _run_fermion,
}


def run(cfg: RunConfig, out: Path) -> dict:
    """Execute one configuration into ``out``; returns the manifest (also written)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": SCHEMA_VERSION, "code_version": __version__,
                "config": cfg.to_dict(), "started": _now(), "status": "running"}
    t0 = time.perf_counter()
    try:
        result = _ENGINES[cfg.engine](cfg, out)
    except Exception as exc:
        manifest.update(status="failed", finished=_now(),
                        error={"type": type(exc).__name__, "message": str(exc)})
        write_json_atomic(out / "manifest.json", manifest)
        raise
    manifest.update(result)
    manifest.update(status="partial" if result.get("partial") else "ok", finished=_now(),
                    seconds=time.perf_counter() - t0)
    manifest.pop("partial", None)
    write_json_atomic(out / "manifest.json", manifest)
    return manifest


# --- compare -------------------------------------------------------------------------

def load_manifest(path) -> tuple[dict, Path]:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    with open(p) as fh:
        return json.load(fh), p.parent


def _point_value(man: dict, root: Path, t: float) -> dict:
    if man["config"]["engine"] == "itebd":
        s = read_csv(root / "series.csv")
        k = np.flatnonzero(np.abs(s["t"] - t) < 1e-9)
        if len(k) == 0:
            raise ComparisonError(f"time {t} not on the iTEBD grid")
        return {"x": float(s["x_expect"][k[0]]), "z": float(s["z_expect"][k[0]]), "identity_error": None}
    f = man["final"]
    if abs(f["t"] - t) > 1e-9:
        raise ComparisonError(f"run is at t={f['t']}, requested t={t}")
    return {"x": f["x"], "z": f["z"], "identity_error": f.get("identity_error")}


def compare(a: dict, root_a: Path, b: dict, root_b: Path) -> dict:
    """Observable differences between two runs (or a run and an iTEBD reference series)."""
    ea, eb = a["config"]["engine"], b["config"]["engine"]
    if ea == eb == "itebd":
        sa, sb = read_csv(root_a / "series.csv"), read_csv(root_b / "series.csv")
        n = min(len(sa["t"]), len(sb["t"]))
        if not np.allclose(sa["t"][:n], sb["t"][:n], atol=1e-9):
            raise ComparisonError("time grids differ")
        return {"kind": "series", "rows": n,
                "max_abs_dx": float(np.max(np.abs(sa["x_expect"][:n] - sb["x_expect"][:n]))),
                "max_abs_dz": float(np.max(np.abs(sa["z_expect"][:n] - sb["z_expect"][:n])))}
    t = a["final"]["t"] if ea != "itebd" else b["final"]["t"]
    va, vb = _point_value(a, root_a, t), _point_value(b, root_b, t)
    return {"kind": "point", "t": t, "engine_a": ea, "engine_b": eb,
            "chi_a": a["config"].get("chi"), "chi_b": b["config"].get("chi"),
            "abs_dx": abs(va["x"] - vb["x"]), "abs_dz": abs(va["z"] - vb["z"]),
            "identity_error_a": va["identity_error"], "identity_error_b": vb["identity_error"]}


# --- sweep ---------------------------------------------------------------------------

def expand_sweep(base: dict) -> list[dict]:
    """Cartesian product over every list under the ``sweep`` key."""
    base = dict(base)
    grid = base.pop("sweep", {})
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigError(f"sweep.{k}", "must be a nonempty list")
    runs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        d = dict(base)
        d.update(zip(keys, combo))
        runs.append(d)
    return runs


def _run_name(d: dict) -> str:
    parts = [d["engine"], str(d.get("init", "x_plus")), f"chi{d.get('chi')}", f"t{d.get('t_total')}"]
    return "_".join(p.replace("/", "-") for p in parts)


def _sweep_worker(args) -> dict:
    d, out = args
    cfg = RunConfig.from_dict(d)
    try:
        man = run(cfg, out)
    except Exception as exc:  # recorded in that run's manifest
        return {"dir": str(out), "status": "failed", "error": str(exc)}
    return {"dir": str(out), "status": man["status"], **{k: v for k, v in man["final"].items()
                                                          if isinstance(v, (int, float, bool))}}


def sweep(base: dict, out: Path, workers: int = 1) -> list[dict]:
    out = Path(out)
    runs = expand_sweep(base)
    for d in runs:
        RunConfig.from_dict(d)  # validate everything before starting
    jobs = [(d, out / _run_name(d)) for d in runs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    keys = sorted({k for r in results for k in r})
    write_csv(out / "sweep.csv", keys, ([r.get(k, "") for k in keys] for r in results))
    write_json_atomic(out / "sweep_manifest.json", {"schema_version": SCHEMA_VERSION,
                                                    "code_version": __version__, "runs": results})
    return results


# --- reproduce -----------------------------------------------------------------------

FIGURES = {
    "itebd-xminus": "iTEBD <X>, <Z> time series from |X->, several bond dimensions",
    "itebd-xplus": "iTEBD <X>, <Z> time series from |X+>, several bond dimensions",
    "error-xplus": "<X> and identity errors vs chi, normal and hybrid, from |X+>",
    "error-xminus": "<X> and identity errors vs chi, normal and hybrid, from |X->",
    "temporal-entropy": "temporal entanglement vs t for |X+> and |X->",
    "fermion-growth": "free-fermion middle-cut entropy vs t, three Hamiltonians",
}


def reproduce(fig: str, out: Path, chi: int | None = None, t_max: float | None = None,
              workers: int = 1) -> dict:
    """Data behind one figure at desk scale; ``chi``/``t_max`` scale it up."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if fig not in FIGURES:
        raise ConfigError("figure", f"unknown figure id; choose from {sorted(FIGURES)}")
    if fig.startswith("itebd-"):
        init = "x_minus" if fig.endswith("xminus") else "x_plus"
        top = chi or 128
        base = {"engine": "itebd", "init": init, "t_total": t_max or 14.0,
                "sweep": {"chi": sorted({max(8, top // 4), max(8, top // 2), top})}}
        results = sweep(base, out, workers)
    elif fig.startswith("error-"):
        init = "x_minus" if fig.endswith("xminus") else "x_plus"
        top = chi or 32
        times = [2.0, 4.0] if t_max is None else [t for t in (2.0, 4.0, 6.0) if t <= t_max]
        chis = sorted({max(4, top // 4), max(4, top // 2), top})
        base = {"engine": "fold", "init": init, "sweep": {"engine": ["fold", "hybrid"],
                                                         "chi": chis, "t_total": times}}
        results = sweep(base, out, workers)
        ref = sweep({"engine": "itebd", "init": init, "chi": 4 * top, "t_total": max(times)},
                    out / "reference", 1)
        series = read_csv(Path(ref[0]["dir"]) / "series.csv")
        rows = []
        for r in results:
            man, _ = load_manifest(r["dir"])
            t = man["final"]["t"]
            k = int(np.argmin(np.abs(series["t"] - t)))
            rows.append((t, man["config"]["chi"], man["config"]["engine"], man["final"]["x"],
                         abs(man["final"]["x"] - series["x_expect"][k]), man["final"]["identity_error"]))
        rows.sort(key=lambda r: (r[0], r[2], r[1]))
        write_csv(out / "errors.csv", ("t", "chi", "engine", "x", "abs_dx", "identity_error"), rows)
    elif fig == "temporal-entropy":
        top = chi or 32
        stop = t_max or 4.0
        times = [float(t) for t in np.arange(1.0, stop + 1e-9, 1.0)]
        base = {"engine": "hybrid", "chi": top,
                "sweep": {"init": ["x_plus", "x_minus"], "t_total": times}}
        results = sweep(base, out, workers)
    else:
        cfg = RunConfig.from_dict({"engine": "fermion", "t_total": t_max or 40.0,
                                   "fermion": {"n_half": chi or 100}})
        results = [run(cfg, out / "fermion")["final"]]
    man = {"schema_version": SCHEMA_VERSION, "code_version": __version__, "figure": fig,
           "description": FIGURES[fig], "runs": results, "finished": _now()}
    write_json_atomic(out / "figure_manifest.json", man)
    return man


# --- entry point ---------------------------------------------------------------------

def _load_config(args) -> dict:
    d: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("--config", str(exc)) from None
    for key, val in (("engine", args.engine), ("chi", args.chi), ("t_total", args.t), ("init", args.init)):
        if val is not None:
            d[key] = val
    return d


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="foldtn", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--chi", type=int)
        p.add_argument("--t", type=float, help="total time")
        p.add_argument("--engine", choices=ENGINES)
        p.add_argument("--init", help="x_plus or x_minus")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")

    common(sub.add_parser("run", help="execute one configuration"))
    common(sub.add_parser("sweep", help="expand list-valued 'sweep' entries and run them all"))
    cp = sub.add_parser("compare", help="observable differences between two runs")
    cp.add_argument("a")
    cp.add_argument("b")
    cp.add_argument("--out", help="write the report as JSON here")
    rp = sub.add_parser("reproduce", help="regenerate the data behind a figure")
    rp.add_argument("figure", choices=sorted(FIGURES))
    rp.add_argument("--out", required=True)
    rp.add_argument("--chi", type=int)
    rp.add_argument("--t", type=float)
    rp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            man = run(RunConfig.from_dict(_load_config(args)), Path(args.out))
            print(json.dumps({"status": man["status"], "final": man["final"]}, default=_json_default))
        elif args.command == "sweep":
            res = sweep(_load_config(args), Path(args.out), args.threads)
            print(json.dumps({"status": "ok", "runs": len(res)}))
        elif args.command == "compare":
            ma, ra = load_manifest(args.a)
            mb, rb = load_manifest(args.b)
            report = compare(ma, ra, mb, rb)
            if args.out:
                write_json_atomic(Path(args.out), report)
            print(json.dumps(report, default=_json_default))
        else:
            reproduce(args.figure, Path(args.out), args.chi, args.t, args.threads)
            print(json.dumps({"status": "ok", "figure": args.figure}))
    except ConfigError as exc:
        print(json.dumps({"error": "config", "field": exc.field, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
