from __future__ import annotations

import json

import numpy as np
import pytest

from foldtn.cli import (
    ComparisonError,
    ConfigError,
    RunConfig,
    compare,
    expand_sweep,
    load_manifest,
    main,
    read_csv,
    run,
    sweep,
)


def write_config(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_itebd_run_writes_series_and_manifest(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--engine", "itebd", "--chi", "64", "--t", "2", "--out", str(out)]) == 0
    s = read_csv(out / "series.csv")
    assert len(s["t"]) == 20
    assert s["t"][-1] == pytest.approx(2.0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok"
    for key in ("schema_version", "code_version", "config", "started", "finished", "final"):
        assert key in man
    assert man["config"]["model"]["dt"] == 0.1


def test_csv_round_trips_doubles(tmp_path):
    run(RunConfig.from_dict({"engine": "itebd", "chi": 8, "t_total": 0.5}), tmp_path)
    text = (tmp_path / "series.csv").read_text().splitlines()
    vals = [float(v) for v in text[1].split(",")]
    assert all(format(v, ".17g") == raw for v, raw in zip(vals, text[1].split(",")))


@pytest.mark.parametrize("cfg,field", [
    ({"chi": 8}, "engine"),
    ({"engine": "nope"}, "engine"),
    ({"engine": "itebd", "t_total": 1.05}, "t_total"),
    ({"engine": "itebd", "chi": 0}, "chi"),
    ({"engine": "itebd", "colour": 1}, "colour"),
    ({"engine": "hybrid", "policy": {"observable_tol": -1}}, "policy"),
    ({"engine": "itebd", "init": "y_plus"}, "init"),
    ({"engine": "fermion", "fermion": {"n": 4}}, "fermion.n"),
])
def test_config_errors_name_the_field(tmp_path, capsys, cfg, field):
    path = write_config(tmp_path, cfg)
    assert main(["run", "--config", path, "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["field"] == field


def test_custom_amplitudes():
    cfg = RunConfig.from_dict({"engine": "itebd", "init": [[0.6, 0.0], [0.0, 0.8]]})
    assert np.allclose(cfg.local_state().amplitudes, [0.6, 0.8j])


def test_compare_identical_runs_is_zero(tmp_path, capsys):
    for name in ("a", "b"):
        run(RunConfig.from_dict({"engine": "itebd", "chi": 16, "t_total": 1.0}), tmp_path / name)
    ma, ra = load_manifest(tmp_path / "a")
    mb, rb = load_manifest(tmp_path / "b")
    rep = compare(ma, ra, mb, rb)
    assert rep["max_abs_dx"] == 0.0 and rep["max_abs_dz"] == 0.0
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
    assert json.loads(capsys.readouterr().out)["max_abs_dx"] == 0.0


def test_compare_transverse_against_itebd(tmp_path):
    run(RunConfig.from_dict({"engine": "itebd", "chi": 32, "t_total": 1.0}), tmp_path / "ref")
    run(RunConfig.from_dict({"engine": "hybrid", "chi": 8, "t_total": 1.0}), tmp_path / "h")
    rep = compare(*load_manifest(tmp_path / "h"), *load_manifest(tmp_path / "ref"))
    assert rep["kind"] == "point" and rep["abs_dx"] < 1e-3
    run(RunConfig.from_dict({"engine": "itebd", "chi": 32, "t_total": 0.5}), tmp_path / "short")
    with pytest.raises(ComparisonError):
        compare(*load_manifest(tmp_path / "h"), *load_manifest(tmp_path / "short"))


def test_expand_sweep():
    runs = expand_sweep({"engine": "fold", "sweep": {"chi": [4, 8], "engine": ["fold", "hybrid"]}})
    assert len(runs) == 4
    assert {(r["engine"], r["chi"]) for r in runs} == {("fold", 4), ("fold", 8), ("hybrid", 4), ("hybrid", 8)}
    with pytest.raises(ConfigError):
        expand_sweep({"engine": "fold", "sweep": {"chi": 4}})


def test_sweep_writes_summary(tmp_path):
    res = sweep({"engine": "itebd", "t_total": 0.5, "sweep": {"chi": [4, 8]}}, tmp_path)
    assert len(res) == 2 and all(r["status"] == "ok" for r in res)
    assert (tmp_path / "sweep.csv").exists() and (tmp_path / "sweep_manifest.json").exists()


def test_runs_are_deterministic(tmp_path):
    cfg = {"engine": "hybrid", "chi": 8, "t_total": 1.0}
    run(RunConfig.from_dict(cfg), tmp_path / "a")
    run(RunConfig.from_dict(cfg), tmp_path / "b")
    assert (tmp_path / "a" / "columns.csv").read_bytes() == (tmp_path / "b" / "columns.csv").read_bytes()


def test_fermion_run_writes_three_csvs(tmp_path):
    man = run(RunConfig.from_dict({"engine": "fermion", "t_total": 1.0,
                                   "fermion": {"n_half": 6, "dt": 0.1, "record_every": 2}}), tmp_path)
    assert sorted(man["files"]) == ["fermion_nonhermitian_tilde.csv", "fermion_sign_flipped.csv",
                                    "fermion_uniform.csv"]
    assert len(read_csv(tmp_path / "fermion_uniform.csv")["t"]) == 6


@pytest.mark.parametrize("engine", ["oracle-real", "oracle-imag"])
def test_oracle_runs(tmp_path, engine):
    man = run(RunConfig.from_dict({"engine": engine, "n_spins": 2, "t_total": 2.0}), tmp_path)
    assert man["status"] == "ok"


def test_engine_failure_is_recorded(tmp_path, monkeypatch, capsys):
    import foldtn.cli as cli

    def boom(cfg, out):
        raise RuntimeError("engine exploded")

    monkeypatch.setitem(cli._ENGINES, "itebd", boom)
    assert main(["run", "--engine", "itebd", "--out", str(tmp_path)]) == 1
    assert json.loads(capsys.readouterr().err)["message"] == "engine exploded"
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "failed"


def test_reproduce_small(tmp_path):
    assert main(["reproduce", "fermion-growth", "--out", str(tmp_path / "f"), "--chi", "6", "--t", "1"]) == 0
    assert (tmp_path / "f" / "figure_manifest.json").exists()
    assert main(["reproduce", "itebd-xplus", "--out", str(tmp_path / "i"), "--chi", "16", "--t", "0.5"]) == 0
    assert len(list((tmp_path / "i").glob("itebd_*"))) == 2
