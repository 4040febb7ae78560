"""Entanglement growth of Slater determinants under quadratic Hamiltonians.

A Slater determinant of ``M`` particles on ``L`` modes is an ``L x M``
matrix ``A`` of orbitals.  Evolution with a (possibly non-Hermitian)
single-particle matrix ``h`` maps ``A -> exp(-i h dt) A`` followed by
re-orthonormalization; the correlation matrix ``G = A A^dagger`` is the
projector onto the occupied span, and the entropy of a block of modes is
``-sum [lam ln lam + (1 - lam) ln(1 - lam)]`` over the block's ``G`` spectrum.

Chains have ``2N`` sites split into two halves of ``N``.  Hopping variants:

* ``uniform``: ``+1`` on every bond;
* ``sign_flipped``: ``+1`` on bonds inside the left half, ``-1`` from the
  middle bond on;
* ``decoupled``: uniform hopping with the middle bond removed;
* ``nonhermitian_tilde``: ``sign_flipped`` plus an imaginary middle term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg_core import (
    ContractViolation,
    SingularInputError,
    matrix_exp,
    orthonormalize_columns,
)


class Variant(str, Enum):
    UNIFORM = "uniform"
    SIGN_FLIPPED = "sign_flipped"
    NONHERMITIAN_TILDE = "nonhermitian_tilde"
    DECOUPLED = "decoupled"


class CouplingForm(str, Enum):
    IMAG_HOPPING = "imag_hopping"
    IMAG_POTENTIAL = "imag_potential"


class EvolutionDegenerateError(ArithmeticError):
    pass


class InvalidCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticHamiltonian:
    h: np.ndarray
    hermitian: bool

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2:
            raise ContractViolation(f"expected an even square matrix, got {h.shape}")
        if self.hermitian and np.abs(h - h.conj().T).max() > 1e-12:
            raise ContractViolation("matrix flagged Hermitian is not")
        object.__setattr__(self, "h", h)

    @property
    def n_half(self) -> int:
        return self.h.shape[0] // 2


def build_hamiltonian(n: int, variant: Variant | str,
                      coupling_form: CouplingForm | str = CouplingForm.IMAG_HOPPING) -> QuadraticHamiltonian:
    """Single-particle matrix on ``2n`` sites (0-based; the middle bond is ``(n-1, n)``)."""
    if n < 2:
        raise ValueError("need at least two sites per half")
    variant, form = Variant(variant), CouplingForm(coupling_form)
    size = 2 * n
    hop = np.ones(size - 1)
    if variant in (Variant.SIGN_FLIPPED, Variant.NONHERMITIAN_TILDE):
        hop[n - 1:] = -1.0
    if variant is Variant.DECOUPLED:
        hop[n - 1] = 0.0
    h = np.diag(hop, 1) + np.diag(hop, -1)
    h = h.astype(complex)
    if variant is Variant.NONHERMITIAN_TILDE:
        if form is CouplingForm.IMAG_HOPPING:
            h[n - 1, n] += 1j
            h[n, n - 1] += 1j
        else:
            h[n - 1, n - 1] += 1j
            h[n, n] += 1j
    return QuadraticHamiltonian(h, variant is not Variant.NONHERMITIAN_TILDE)


@dataclass(frozen=True)
class SlaterMatrix:
    a: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.a.shape[1]


def ground_state_slater(h: QuadraticHamiltonian, n_particles: int) -> SlaterMatrix:
    """Lowest ``n_particles`` orbitals.

    At a degenerate Fermi level the eigenvectors returned first by the
    (deterministic) Hermitian eigensolver are occupied.
    """
    if not h.hermitian:
        raise ContractViolation("ground state requires a Hermitian Hamiltonian")
    if not 0 < n_particles <= h.h.shape[0]:
        raise ValueError("particle number out of range")
    _, v = np.linalg.eigh(h.h)
    return SlaterMatrix(v[:, :n_particles].copy())


def fermi_level_degenerate(h: QuadraticHamiltonian, n_particles: int, tol: float = 1e-10) -> bool:
    w = np.linalg.eigvalsh(h.h)
    return n_particles < len(w) and abs(w[n_particles] - w[n_particles - 1]) < tol


def evolve_slater(a: SlaterMatrix, h: QuadraticHamiltonian, dt: float, steps: int,
                  callback=None) -> SlaterMatrix:
    """``steps`` applications of ``exp(-i h dt)``, orthonormalizing after each."""
    u = matrix_exp(h.h, -1j * dt)
    m = a.a
    for k in range(steps):
        try:
            m = orthonormalize_columns(u @ m)
        except SingularInputError as exc:
            raise EvolutionDegenerateError(f"orbitals collapsed at step {k + 1}: {exc}") from exc
        if callback:
            callback(k + 1, m)
    return SlaterMatrix(m)


def greens_function(a: SlaterMatrix) -> np.ndarray:
    return a.a @ a.a.conj().T


def entanglement_entropy(g: np.ndarray, subsystem) -> float:
    """Block entropy from the correlation matrix restricted to ``subsystem`` (indices or slice)."""
    idx = np.arange(g.shape[0])[subsystem] if isinstance(subsystem, slice) else np.asarray(subsystem)
    block = g[np.ix_(idx, idx)]
    lam = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
    if lam.size and (lam.min() < -1e-8 or lam.max() > 1 + 1e-8):
        raise InvalidCorrelationError(f"correlation eigenvalue outside [0, 1]: {lam.min():.3e}, {lam.max():.3e}")
    lam = np.clip(lam, 0.0, 1.0)
    s = 0.0
    for x in lam:
        if 0.0 < x < 1.0:
            s -= x * math.log(x) + (1.0 - x) * math.log(1.0 - x)
    return float(s)


@dataclass
class GrowthSeries:
    variant: Variant
    coupling_form: CouplingForm
    t: np.ndarray
    entropy: np.ndarray


def growth_study(n: int, t_max: float, dt: float, variants=tuple(Variant),
                 coupling_form: CouplingForm | str = CouplingForm.IMAG_HOPPING,
                 record_every: int = 1) -> dict[Variant, GrowthSeries]:
    """Middle-cut entropy vs time starting from the ground state of the decoupled halves."""
    steps = int(round(t_max / dt))
    if steps < 1 or abs(steps * dt - t_max) > 1e-9:
        raise ValueError("t_max must be a positive multiple of dt")
    a0 = ground_state_slater(build_hamiltonian(n, Variant.DECOUPLED), n)
    left = slice(0, n)
    out = {}
    for v in map(Variant, variants):
        h = build_hamiltonian(n, v, coupling_form)
        ts, ss = [0.0], [entanglement_entropy(greens_function(a0), left)]

        def rec(k, m):
            if k % record_every == 0:
                ts.append(k * dt)
                ss.append(entanglement_entropy(m @ m.conj().T, left))

        evolve_slater(a0, h, dt, steps, rec)
        out[v] = GrowthSeries(v, CouplingForm(coupling_form), np.array(ts), np.array(ss))
    return out


def linear_fit_r2(x, y) -> tuple[float, float]:
    """Least-squares slope and coefficient of determination."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
