"""Infinite TEBD with a division-free update.

The state is a period-2 infinite MPS in right-canonical form: site tensors
``B_A, B_B`` of shape ``(left, spin, right)`` with ``sum_{s,r} B B^dagger = 1``
and the Schmidt weights ``lam_A`` (bond to the left of A) and ``lam_B``
(bond to the left of B).

A two-site gate on ``(i, i+1)`` is applied to ``C = B_i B_{i+1}``.  The SVD
of ``lam_i C' = X S Y`` gives the new right tensor ``Y`` and the new left
tensor ``C' Y^dagger / ||S||``; the weights are never inverted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .linalg_core import DEFAULT_REL_TOL, truncated_svd, von_neumann_entropy
from .spin_models import SX, SZ, IsingParams, LocalState, itebd_gates

log = logging.getLogger(__name__)


@dataclass
class InfiniteMPS:
    tensors: list[np.ndarray]  # [B_A, B_B]
    weights: list[np.ndarray]  # [lam_A, lam_B], left bond of each site

    def __post_init__(self):
        if len(self.tensors) != 2 or len(self.weights) != 2:
            raise ValueError("the unit cell has exactly two sites")
        for k in range(2):
            lam = self.weights[k]
            if np.any(lam < 0) or np.any(np.diff(lam) > 1e-12 * max(lam[0], 1.0)):
                raise ValueError("bond weights must be nonnegative and descending")
            if not np.all(np.isfinite(self.tensors[k])):
                raise ValueError("non-finite site tensor")
            if self.tensors[k].shape[0] != lam.shape[0]:
                raise ValueError("weights do not match the tensor's left bond")

    @classmethod
    def product(cls, local: LocalState) -> InfiniteMPS:
        b = local.amplitudes.reshape(1, 2, 1)
        return cls([b.copy(), b.copy()], [np.ones(1), np.ones(1)])

    @property
    def bond_dims(self) -> tuple[int, int]:
        return self.weights[0].shape[0], self.weights[1].shape[0]

    def copy(self) -> InfiniteMPS:
        return InfiniteMPS([t.copy() for t in self.tensors], [w.copy() for w in self.weights])


def _apply_bond(s: InfiniteMPS, i: int, gate: np.ndarray, chi: int, rel_tol: float):
    j = 1 - i
    bi, bj = s.tensors[i], s.tensors[j]
    lam = s.weights[i]
    c = np.tensordot(bi, bj, axes=(2, 0))  # (a, s, t, b)
    g = gate.reshape(2, 2, 2, 2)
    c = np.einsum("stuv,auvb->astb", g, c)
    dl, _, _, dr = c.shape
    theta = (lam[:, None, None, None] * c).reshape(dl * 2, 2 * dr)
    _, spec, y, disc = truncated_svd(theta, chi, rel_tol)
    sv = spec.values
    nrm = float(np.linalg.norm(sv))
    y = y.reshape(-1, 2, dr)
    new_i = np.tensordot(c, y.conj(), axes=([2, 3], [1, 2])) / nrm  # (a, s, k)
    tensors = list(s.tensors)
    weights = list(s.weights)
    tensors[i], tensors[j] = new_i, y
    weights[j] = sv / nrm
    return InfiniteMPS(tensors, weights), disc


def itebd_step(s: InfiniteMPS, u_a: np.ndarray, u_b: np.ndarray, chi: int,
               rel_tol: float = DEFAULT_REL_TOL) -> tuple[InfiniteMPS, float]:
    """One Trotter step: ``u_b`` on the (A, B) bonds, then ``u_a`` on the (B, A) bonds.

    Returns the new state and the summed discarded weight of both updates.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    for u in (u_a, u_b):
        if u.shape != (4, 4):
            raise ValueError("gates must be 4x4")
    s, d1 = _apply_bond(s, 0, u_b, chi, rel_tol)
    s, d2 = _apply_bond(s, 1, u_a, chi, rel_tol)
    return s, d1 + d2


def site_expectation(s: InfiniteMPS, k: int, op: np.ndarray) -> complex:
    lam2 = s.weights[k] ** 2
    b = s.tensors[k]
    return complex(np.einsum("a,atb,ts,asb->", lam2, b.conj(), op, b))


def measure_site(s: InfiniteMPS, op: np.ndarray) -> float:
    """Sublattice-averaged expectation value; imaginary part must be negligible."""
    vals = [site_expectation(s, k, op) for k in range(2)]
    v = 0.5 * (vals[0] + vals[1])
    if abs(v.imag) > 1e-8:
        log.warning("discarding imaginary part %.3e of expectation value", v.imag)
    return float(v.real)


def bond_entropies(s: InfiniteMPS) -> list[float]:
    return [von_neumann_entropy(w**2) for w in s.weights]


@dataclass
class TimeSeries:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    max_entropy: np.ndarray
    discarded: np.ndarray
    chi: int

    def rows(self):
        return zip(self.t, self.x, self.z, self.max_entropy, self.discarded)

    def at(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[k] - t) > 1e-9:
            raise KeyError(f"time {t} not on the grid")
        return k


def run_itebd(p: IsingParams, t_max: float, chi: int, init: LocalState,
              rel_tol: float = DEFAULT_REL_TOL, callback=None) -> TimeSeries:
    """One measurement after each Trotter step up to ``t_max`` (``t_max/dt`` rows)."""
    n = p.steps_for(t_max)
    u_a, u_b = itebd_gates(p)
    s = InfiniteMPS.product(init)
    out = np.zeros((n, 5))
    cum = 0.0
    for k in range(n):
        s, disc = itebd_step(s, u_a, u_b, chi, rel_tol)
        cum += disc
        row = ((k + 1) * p.dt, measure_site(s, SX), measure_site(s, SZ), max(bond_entropies(s)), cum)
        out[k] = row
        if callback:
            callback(row)
    return TimeSeries(out[:, 0], out[:, 1], out[:, 2], out[:, 3], out[:, 4], chi)


def find_peaks(values, t=None, window: int = 5) -> np.ndarray:
    """Indices (or times, when ``t`` is given) of strict maxima over a ``+-window`` neighbourhood."""
    v = np.asarray(values, dtype=float)
    idx = []
    for k in range(window, len(v) - window):
        seg = v[k - window: k + window + 1]
        if v[k] == seg.max() and np.count_nonzero(seg == v[k]) == 1:
            idx.append(k)
    idx = np.array(idx, dtype=int)
    return idx if t is None else np.asarray(t)[idx]


def match_peaks(a, b, tol: float) -> bool:
    """Each peak of ``a`` has a partner in ``b`` within ``tol`` and vice versa."""
    a, b = np.asarray(a), np.asarray(b)
    if len(a) == 0 or len(b) == 0:
        return len(a) == len(b)
    return bool(all(np.min(np.abs(b - x)) <= tol for x in a)
                and all(np.min(np.abs(a - x)) <= tol for x in b))


def state_norm(s: InfiniteMPS) -> float:
    """Per-site norm from the right-canonical tensors (1 for a normalized state)."""
    return math.sqrt(float(np.sum(s.weights[0] ** 2)))
