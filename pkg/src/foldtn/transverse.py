"""Transverse (spatial) contraction of the folded space-time network.

A left transverse state is an MPS over the time steps of one column of
horizontal bonds, obtained by summing the network to the left of that
column.  Each time site carries the folded bond label ``k_f + 2 k_r``
(physical dimension 4); its virtual bonds carry the folded spin of the
column that was last adjoined.  The bottom boundary holds the initial
product state, the top boundary closes forward and return contours.

Growing the state by one column applies the folded Trotter tensor as an
MPO in the time direction, brings the result to top-canonical form
(``lambda_t = 1`` on every cut) and truncates each bond using
``lambda_b`` computed from the untruncated canonical tensors:

* normal: ``lambda_b -> sum A lambda_b A^dagger``, keep the leading
  eigenvectors of the Hermitian result;
* hybrid: ``lambda_b -> sum A lambda_b A^T``, keep the leading left
  singular vectors of the (complex symmetric) result.

Because the Ising site tensor is symmetric under left/right exchange, the
right transverse state equals the left one and observables come from
``L^T C_O R`` with a centre column ``C_O`` closed by the operator ``O``.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .linalg_core import DEFAULT_REL_TOL, _keep_count, hermitian_part, svd
from .mps import MatrixProductState, _lq, evolve_gram, inner, max_entropy
from .spin_models import (
    I2,
    SX,
    SZ,
    Arrow,
    IsingParams,
    LocalState,
    folded_density,
    folded_row,
    local_folded_vector,
    trotter_row,
)

log = logging.getLogger(__name__)

TRACE = local_folded_vector(I2)


class Method(str, Enum):
    NORMAL = "normal"
    HYBRID = "hybrid"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class FoldedColumn:
    """Folded Trotter tensors of one spatial site, used along the time axis.

    ``bulk`` is ``(k_left, k_right, spin_out, spin_in)``; ``edge`` is the same
    for the leftmost spin of an open chain (``k_left`` fixed, size 1).
    """

    bulk: np.ndarray
    edge: np.ndarray
    bottom: np.ndarray
    n_steps: int

    def observable_vector(self, op) -> np.ndarray:
        return local_folded_vector(I2 if op is None else op)


def folded_column(p: IsingParams, init: LocalState, n_steps: int) -> FoldedColumn:
    row = folded_row(p)
    if not np.allclose(row.tensor, row.tensor.transpose(1, 0, 2, 3), atol=1e-14):
        raise ConfigurationError("site tensor is not reflection symmetric")
    return FoldedColumn(row.tensor, row.left_edge, folded_density(init), n_steps)


@dataclass
class ColumnTensorSet:
    """Bond-space matrices ``A(p) = B[:, p, :].T`` of one transverse site."""

    matrices: np.ndarray  # (d, m_out, m_in)

    @classmethod
    def from_site(cls, tensor: np.ndarray) -> ColumnTensorSet:
        return cls(np.transpose(tensor, (1, 2, 0)))

    def site_tensor(self) -> np.ndarray:
        return np.transpose(self.matrices, (2, 0, 1))


def _matrices(c) -> np.ndarray:
    return c.matrices if isinstance(c, ColumnTensorSet) else np.asarray(c)


def evolve_lambda_normal(lam_b: np.ndarray, c) -> np.ndarray:
    """``sum_p A(p) lam_b A(p)^dagger``, Hermitized."""
    a = _matrices(c)
    out = np.einsum("pij,jk,plk->il", a, lam_b, a.conj())
    return hermitian_part(out)


def evolve_lambda_hybrid(lam_b: np.ndarray, c) -> np.ndarray:
    """``sum_p A(p) lam_b A(p)^T``; the result is generally not Hermitian."""
    a = _matrices(c)
    return np.einsum("pij,jk,plk->il", a, lam_b, a)


def kept_basis_normal(lam: np.ndarray, chi: int, rel_tol: float = DEFAULT_REL_TOL):
    """Leading eigenvectors of Hermitian ``lam``; returns ``(basis, discarded_fraction)``."""
    w, v = np.linalg.eigh(hermitian_part(lam))
    w, v = np.clip(w[::-1], 0.0, None), v[:, ::-1]
    keep = _keep_count(w, chi, rel_tol)
    total = w.sum()
    return v[:, :keep], float(w[keep:].sum() / total) if total > 0 else 0.0


def kept_basis_hybrid(lam: np.ndarray, chi: int, rel_tol: float = DEFAULT_REL_TOL):
    """Leading left singular vectors of ``lam`` (eigenvectors of ``lam lam^dagger``)."""
    u, spec, _ = svd(lam)
    s = spec.values
    keep = _keep_count(s, chi, rel_tol)
    total = s.sum()
    return u[:, :keep], float(s[keep:].sum() / total) if total > 0 else 0.0


_KEPT = {Method.NORMAL: kept_basis_normal, Method.HYBRID: kept_basis_hybrid}


@dataclass
class TransverseState:
    mps: MatrixProductState
    log_scale: float
    n_columns: int
    method: Method
    column: FoldedColumn = field(repr=False)
    truncation: list = field(default_factory=list, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.mps)

    @property
    def max_bond(self) -> int:
        return self.mps.max_bond


def init_transverse(p: IsingParams, t_total: float, init: LocalState,
                    method: Method | str = Method.NORMAL) -> TransverseState:
    """Exact left transverse state of a single spin (bond dimension 4)."""
    try:
        n = p.steps_for(t_total)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    col = folded_column(p, init, n)
    site = np.transpose(col.edge[0], (2, 0, 1))  # (spin_in, k_right, spin_out)
    m = MatrixProductState([site.copy() for _ in range(n)], col.bottom.copy(), TRACE.copy())
    return TransverseState(m, 0.0, 1, Method(method), col)


def _adjoin_site(t: np.ndarray, bulk: np.ndarray) -> np.ndarray:
    x = np.einsum("apb,pqoi->aiqbo", t, bulk)
    a, i, q, b, o = x.shape
    return x.reshape(a * i, q, b * o)


def adjoin_column(s: TransverseState, c: FoldedColumn | None = None) -> TransverseState:
    """Exact absorption of one more column; bond dimensions grow by 4."""
    c = s.column if c is None else c
    if c.n_steps != s.n_steps:
        raise ValueError(f"column has {c.n_steps} time steps, state has {s.n_steps}")
    ts = [_adjoin_site(t, c.bulk) for t in s.mps.tensors]
    m = MatrixProductState(ts, np.kron(s.mps.left, c.bottom), np.kron(s.mps.right, TRACE))
    return replace(s, mps=m, n_columns=s.n_columns + 1)


class _TensorStore:
    """List of tensors, optionally kept on disk to bound peak memory."""

    def __init__(self, n: int, spill_dir: str | None):
        self._items: list = [None] * n
        self._dir = None
        if spill_dir is not None:
            os.makedirs(spill_dir, exist_ok=True)
            self._dir = tempfile.mkdtemp(prefix="canon-", dir=spill_dir)

    def __setitem__(self, k: int, t: np.ndarray) -> None:
        if self._dir is None:
            self._items[k] = t
        else:
            path = os.path.join(self._dir, f"{k}.npy")
            np.save(path, t)
            self._items[k] = path

    def pop(self, k: int) -> np.ndarray:
        item = self._items[k]
        self._items[k] = None
        if self._dir is None:
            return item
        t = np.load(item)
        os.remove(item)
        return t

    def close(self) -> None:
        if self._dir is not None:
            for name in os.listdir(self._dir):
                os.remove(os.path.join(self._dir, name))
            os.rmdir(self._dir)


def _bond_cap(k: int, n: int, d: int = 4) -> int:
    # rank bound of bond k from the bottom boundary (bottom vector is rank 1)
    return d ** min(k + 1, 12)


def truncate_canonical(tensors, chi: int, method: Method, rel_tol: float = DEFAULT_REL_TOL,
                       get=None) -> tuple[list[np.ndarray], list[float]]:
    """Bottom-up truncation of a top-canonical tensor list.

    ``lambda_b`` is propagated with the untruncated tensors; bond ``k`` is
    restricted to the span of ``conj(W_k)`` where ``W_k`` holds the kept
    eigenvectors (normal) or left singular vectors (hybrid).  ``get`` lets
    the caller stream tensors from storage; the canonical input is consumed.
    """
    method = Method(method)
    n = len(tensors)
    get = get or (lambda k: tensors[k])
    bilinear = method is Method.HYBRID
    kept = _KEPT[method]
    first = get(0)
    lam = np.ones((first.shape[0], first.shape[0]), dtype=complex)
    if first.shape[0] != 1:
        raise ValueError("expected a trivial bottom boundary")
    out: list[np.ndarray] = []
    discarded: list[float] = []
    w_prev = None
    t = first
    for k in range(n):
        if k > 0:
            t = get(k)
        r = t if w_prev is None else np.tensordot(w_prev.conj().T, t, axes=(1, 0))
        w_prev = None
        if k < n - 1:
            lam = evolve_gram(lam, t, bilinear)
            dim = lam.shape[0]
            if dim > min(chi, _bond_cap(k, n)):
                basis, disc = kept(lam, chi, rel_tol)
                w_prev = basis.conj()
                r = np.tensordot(r, w_prev, axes=(2, 0))
                discarded.append(disc)
            else:
                discarded.append(0.0)
        out.append(r)
    return out, discarded


def _truncate_state(s: TransverseState, chi: int, method: Method) -> TransverseState:
    m = s.mps
    if m.left.shape[0] != 1 or m.right.shape[0] != 1:
        m = m.absorbed()
    tensors, disc = truncate_canonical(m.tensors, chi, method)
    tensors[0] = tensors[0] * m.left[0]
    out = MatrixProductState(tensors, None, np.ones(1) * m.right[0])
    return replace(s, mps=out, truncation=disc, method=Method(method))


def truncate_normal(s: TransverseState, chi: int) -> TransverseState:
    """Eigendecomposition truncation of a top-canonical transverse state."""
    return _truncate_state(s, chi, Method.NORMAL)


def truncate_hybrid(s: TransverseState, chi: int) -> TransverseState:
    """SVD truncation of the transpose-evolved ``lambda_b`` (top-canonical input)."""
    return _truncate_state(s, chi, Method.HYBRID)


def column_step(s: TransverseState, chi: int | None, method: Method | str | None = None,
                canon: str = "qr", rel_tol: float = DEFAULT_REL_TOL,
                spill_dir: str | None = None) -> TransverseState:
    """Adjoin one column, canonicalize, truncate and renormalize.

    Fused so that the 4x-enlarged tensors are produced on the fly during the
    top-down sweep; with ``spill_dir`` the canonical tensors are parked on
    disk between the two sweeps.  ``chi=None`` skips truncation.
    """
    method = Method(method or s.method)
    col = s.column
    ts = s.mps.tensors
    n = len(ts)
    store = _TensorStore(n, spill_dir)
    try:
        carry = np.kron(s.mps.right, TRACE).reshape(-1, 1)
        for k in range(n - 1, 0, -1):
            m = np.tensordot(_adjoin_site(ts[k], col.bulk), carry, axes=(2, 0))
            dl, d, dr = m.shape
            q, carry = _lq(m.reshape(dl, d * dr), canon, rel_tol)
            store[k] = q.reshape(-1, d, dr)
        bottom = np.kron(s.mps.left, col.bottom)
        first = np.tensordot(bottom, np.tensordot(_adjoin_site(ts[0], col.bulk), carry, axes=(2, 0)),
                             axes=(0, 0))[None]
        nrm = float(np.linalg.norm(first))
        if nrm == 0.0:
            raise ArithmeticError("transverse state vanished")
        first = first / nrm
        if chi is None:
            tensors = [first] + [store.pop(k) for k in range(1, n)]
            disc = [0.0] * (n - 1)
        else:
            tensors, disc = truncate_canonical(
                range(n), chi, method, rel_tol,
                get=lambda k: first if k == 0 else store.pop(k),
            )
    finally:
        store.close()
    out = MatrixProductState(tensors)
    tn = out.norm()
    out.tensors[0] = out.tensors[0] / tn
    return TransverseState(out, s.log_scale + math.log(nrm) + math.log(tn), s.n_columns + 1,
                           method, col, disc)


def _env_steps(left: MatrixProductState, right: MatrixProductState, col: FoldedColumn):
    env = np.einsum("a,s,b->asb", left.left, col.bottom, right.left)
    for lt, rt in zip(left.tensors, right.tensors):
        x = np.tensordot(env, lt, axes=(0, 0))  # (s, b, kl, a')
        y = np.tensordot(x, col.bulk, axes=([0, 2], [3, 0]))  # (b, a', kr, s')
        env = np.tensordot(y, rt, axes=([0, 2], [0, 1]))  # (a', s', b')
    return env


def raw_values(left: TransverseState, right: TransverseState, ops) -> list[complex]:
    """Network values ``L^T C_O R`` (normalized states, scale factors excluded)."""
    if left.n_steps != right.n_steps:
        raise ValueError("left and right states have different time extents")
    col = left.column
    env = _env_steps(left.mps, right.mps, col)
    top = np.einsum("a,asb,b->s", left.mps.right, env, right.mps.right)
    return [complex(top @ col.observable_vector(op)) for op in ops]


def evaluate_observable(left: TransverseState, right: TransverseState | None, op=None) -> complex:
    """Full network value with ``op`` in the centre column (``None`` = identity)."""
    right = left if right is None else right
    (v,) = raw_values(left, right, [op])
    return v * math.exp(left.log_scale + right.log_scale)


def normalized_observables(left: TransverseState, right: TransverseState | None = None,
                           ops=(SX, SZ)) -> dict:
    right = left if right is None else right
    vals = raw_values(left, right, [None, *ops])
    ident = vals[0]
    return {"identity_raw": ident, "values": [v / ident for v in vals[1:]]}


@dataclass(frozen=True)
class FixedPointPolicy:
    observable_tol: float = 1e-6
    overlap_tol: float = 1.0
    patience: int = 3
    min_columns: int = 3
    max_columns: int = 400
    record_entropy: bool = False
    warm_start: bool = False
    canon: str = "qr"
    spill_dir: str | None = None

    def __post_init__(self):
        if self.observable_tol <= 0 or self.overlap_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_columns < 1 or self.min_columns < 1:
            raise ValueError("column limits must be positive")


@dataclass
class ColumnRecord:
    column: int
    max_bond: int
    x: float
    z: float
    identity_ratio: float
    identity_error: float
    infidelity: float
    max_discarded: float
    temporal_entropy: float
    seconds: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FixedPointResult:
    state: TransverseState
    previous: TransverseState
    diagnostics: list[ColumnRecord]
    converged: bool
    x: float
    z: float
    x_imag: float
    fluctuation: float

    @property
    def identity_error(self) -> float:
        return identity_error_per_column(self)


def _record(state: TransverseState, prev: TransverseState | None, policy: FixedPointPolicy,
            seconds: float) -> ColumnRecord:
    obs = normalized_observables(state)
    x, z = obs["values"]
    if prev is not None:
        (cross,) = raw_values(state, prev, [None])
        (base,) = raw_values(prev, prev, [None])
        ratio = complex(cross / base) * math.exp(state.log_scale - prev.log_scale)
        ratio_abs = abs(ratio)
        err = abs(ratio - 1.0)
        infid = 1.0 - state_fidelity(state.mps, prev.mps) if state.n_steps else 0.0
    else:
        ratio_abs, err, infid = float("nan"), float("nan"), float("nan")
    ent = max_entropy(state.mps) if policy.record_entropy else float("nan")
    disc = max(state.truncation) if state.truncation else 0.0
    return ColumnRecord(state.n_columns, state.max_bond, float(x.real), float(z.real),
                        ratio_abs, err, infid, disc, ent, seconds)


def run_to_fixed_point(p: IsingParams, t_total: float, chi: int | None, method: Method | str,
                       init: LocalState, policy: FixedPointPolicy = FixedPointPolicy(),
                       callback=None) -> FixedPointResult:
    """Grow the left transverse state column by column until ``<X>`` settles.

    Convergence: ``policy.patience`` consecutive column-to-column changes of
    ``<X>`` below ``policy.observable_tol`` (and at least ``min_columns``).
    Hitting ``max_columns`` returns a result flagged ``converged=False``.
    """
    method = Method(method)
    if chi is not None and chi < 1:
        raise ConfigurationError("chi must be >= 1")
    schedule = [chi]
    if policy.warm_start and chi is not None:
        schedule = sorted({max(4, chi // 4), max(4, chi // 2), chi})
    state = init_transverse(p, t_total, init, method)
    prev = None
    diags: list[ColumnRecord] = []
    rec = _record(state, None, policy, 0.0)
    diags.append(rec)
    if callback:
        callback(rec)
    converged = False
    calm = 0
    for stage_chi in schedule:
        calm = 0
        converged = False
        while state.n_columns < policy.max_columns:
            t0 = time.perf_counter()
            prev, state = state, column_step(state, stage_chi, method, policy.canon,
                                             spill_dir=policy.spill_dir)
            rec = _record(state, prev, policy, time.perf_counter() - t0)
            diags.append(rec)
            if callback:
                callback(rec)
            log.debug("column %d chi=%s x=%.12f id_err=%.3e", rec.column, stage_chi, rec.x,
                      rec.identity_error)
            settled = (abs(diags[-1].x - diags[-2].x) < policy.observable_tol
                       and rec.infidelity < policy.overlap_tol)
            calm = calm + 1 if settled else 0
            if calm >= policy.patience and state.n_columns >= policy.min_columns:
                converged = True
                break
    obs = normalized_observables(state)
    x = obs["values"][0]
    window = [d.x for d in diags[-(policy.patience + 1):]]
    return FixedPointResult(state, prev if prev is not None else state, diags, converged,
                            float(x.real), float(obs["values"][1].real), float(x.imag),
                            float(max(window) - min(window)))


def identity_error_per_column(result) -> float:
    """``|ratio - 1|`` between identity values for ``N+1`` and ``N`` columns.

    Non-converged runs return ``nan`` so they cannot be mistaken for data.
    """
    diags = result.diagnostics if hasattr(result, "diagnostics") else result
    if hasattr(result, "converged") and not result.converged:
        return float("nan")
    if len(diags) < 2:
        raise ValueError("need at least two columns")
    return float(diags[-1].identity_error)


def temporal_entropy(s: TransverseState) -> float:
    """Largest entanglement entropy over all time cuts of the transverse MPS."""
    return max_entropy(s.mps)


def exact_left_state(p: IsingParams, t_total: float, init: LocalState, n_spins: int,
                     method: Method | str = Method.NORMAL) -> TransverseState:
    """Untruncated left transverse state of ``n_spins`` spins (small cases)."""
    s = init_transverse(p, t_total, init, method)
    for _ in range(n_spins - 1):
        s = column_step(s, None, canon="svd")
    return s


# --- unfolded (forward and return contours kept separate) -------------------------

def unfolded_left_state(p: IsingParams, t_total: float, init: LocalState,
                        n_spins: int) -> MatrixProductState:
    """Exact unfolded left transverse state over ``2n`` time sites.

    Sites ``0..n-1`` are forward Trotter steps (bottom to middle), sites
    ``n..2n-1`` the return steps (middle to top).  Physical index: the
    two-valued bond label; virtual index: the column spin.  The middle
    cut between sites ``n-1`` and ``n`` separates the two contours.
    """
    n = p.steps_for(t_total)
    fwd = trotter_row(p, Arrow.FORWARD)
    # return-contour factor is U^dagger: conj with spin indices swapped
    bulk_f = fwd.tensor
    bulk_r = np.conj(np.transpose(fwd.tensor, (0, 1, 3, 2)))
    edge_f = fwd.left_edge[0]
    edge_r = np.conj(np.transpose(fwd.left_edge[0], (0, 2, 1)))
    psi = init.amplitudes
    edges = [edge_f] * n + [edge_r] * n
    bulks = [bulk_f] * n + [bulk_r] * n
    ts = [np.transpose(e, (2, 0, 1)) for e in edges]  # (spin_in, k, spin_out)
    m = MatrixProductState(ts, psi.copy(), psi.conj().copy())
    for _ in range(n_spins - 1):
        new = []
        for t, w in zip(m.tensors, bulks):
            x = np.einsum("apb,pqoi->aiqbo", t, w)
            a, i, q, b, o = x.shape
            new.append(x.reshape(a * i, q, b * o))
        from .mps import canonicalize_top

        m = canonicalize_top(MatrixProductState(new, np.kron(m.left, psi), np.kron(m.right, psi.conj())))
    return m


def midpoint_entropy(m: MatrixProductState) -> float:
    """Entropy across the cut between forward and return contours."""
    from .linalg_core import von_neumann_entropy
    from .mps import gram_pair, schmidt_spectrum

    return von_neumann_entropy(schmidt_spectrum(gram_pair(m, len(m) // 2 - 1)))


def state_fidelity(a: MatrixProductState, b: MatrixProductState) -> float:
    ab = inner(a, b)
    return float(abs(ab) ** 2 / (inner(a, a).real * inner(b, b).real))
