"""Dense small-N continuum limit of the transverse evolution.

For ``N`` spins to the left of a column, the bond Gram matrix ``Lambda_b``
obeys, in the limit ``dt -> 0``,

    forward contour:  d Lambda/dt = i [Lambda, H_L] + |J| Z_N Lambda Z_N
    return contour:   d Lambda/dt = i [Lambda, H_L] - |J| Z_N Lambda Z_N
    imaginary time:   d Lambda/dt = -{Lambda, H_L} + |J| Z_N Lambda Z_N

Writing ``Lambda`` as a pure state ``Phi`` of ``2N`` spins (row-major
vectorization, right half reflected) turns the forward flow into a
Schroedinger-like equation with a non-Hermitian coupling ``|J| Z_N Z_{N+1}``
between the halves, and the imaginary-time flow into a projection onto the
ground state of a doubled chain with ferromagnetic middle coupling ``-|J|``.

Integration uses an adaptive embedded Runge-Kutta scheme (DOP853).  The
trace is renormalized to one and the discarded logarithm is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .linalg_core import hermitian_part, psd_sqrt, von_neumann_entropy
from .spin_models import SZ, IsingParams, dense_hamiltonian, embed

MAX_SPINS = 12
RTOL = 1e-10
ATOL = 1e-13


class ScaleError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


class OrderingError(ValueError):
    pass


@dataclass(frozen=True)
class DenseOperator:
    matrix: np.ndarray
    n_spins: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2**self.n_spins, 2**self.n_spins):
            raise ValueError(f"expected a {2**self.n_spins}-dimensional square matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite operator entries")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return 2**self.n_spins


@dataclass(frozen=True)
class Evolved:
    """Trace-normalized result of a flow plus ``log`` of the removed factor."""

    value: np.ndarray
    log_scale: float


def build_HL(p: IsingParams, n: int) -> DenseOperator:
    """Open-chain Hamiltonian on ``n`` spins; spin ``n`` (the last) touches the column."""
    if n < 1:
        raise ValueError("need at least one spin")
    if n > MAX_SPINS:
        raise ScaleError(f"dense continuum oracle limited to {MAX_SPINS} spins, got {n}")
    return DenseOperator(dense_hamiltonian(p, n), n)


def reflection(n: int) -> np.ndarray:
    """Permutation matrix reversing the order of ``n`` spins."""
    dim = 2**n
    idx = np.arange(dim)
    rev = np.zeros(dim, dtype=int)
    for k in range(n):
        rev |= ((idx >> k) & 1) << (n - 1 - k)
    r = np.zeros((dim, dim))
    r[rev, idx] = 1.0
    return r


def last_z(n: int) -> np.ndarray:
    return embed(SZ, n - 1, n)


def _integrate(rhs, y0: np.ndarray, t: float, chunk: float | None = None) -> tuple[np.ndarray, float]:
    """Integrate ``dy/dt = rhs(y)`` for time ``t`` with optional chunked renormalization."""
    if t < 0:
        raise ValueError("integration time must be non-negative")
    y = np.asarray(y0, dtype=complex).reshape(-1)
    log_scale = 0.0
    done = 0.0
    step = t if chunk is None else chunk
    while done < t - 1e-15:
        span = min(step, t - done)
        sol = solve_ivp(lambda _s, v: rhs(v), (0.0, span), y, method="DOP853",
                        rtol=RTOL, atol=ATOL * max(1.0, float(np.abs(y).max())))
        if not sol.success:
            raise IntegrationError(sol.message)
        y = sol.y[:, -1]
        nrm = float(np.linalg.norm(y))
        if nrm == 0 or not math.isfinite(nrm):
            raise IntegrationError("solution vanished or overflowed")
        y = y / nrm
        log_scale += math.log(nrm)
        done += span
    return y, log_scale


def _normalize_trace(m: np.ndarray, log_scale: float) -> Evolved:
    tr = np.trace(m)
    if abs(tr) == 0:
        raise IntegrationError("zero trace")
    return Evolved(m / tr, log_scale + math.log(abs(tr)))


def evolve_lambda_real(lam0, hl: DenseOperator, j: float, t: float,
                       contour: str = "forward") -> Evolved:
    """``d Lambda/dt = i[Lambda, H_L] +- |J| Z Lambda Z`` (``+`` forward, ``-`` return)."""
    sign = {"forward": 1.0, "return": -1.0}[contour]
    h = hl.matrix
    z = np.diag(last_z(hl.n_spins)).real
    d = hl.dim
    lam0 = np.asarray(getattr(lam0, "matrix", lam0), dtype=complex)
    zz = sign * abs(j) * np.outer(z, z)

    def rhs(v):
        m = v.reshape(d, d)
        return (1j * (m @ h - h @ m) + zz * m).reshape(-1)

    y, ls = _integrate(rhs, lam0, t, chunk=1.0)
    return _normalize_trace(y.reshape(d, d), ls)


def evolve_lambda_imag(lam0, hl: DenseOperator, j: float, t: float) -> Evolved:
    """``d Lambda/dt = -{Lambda, H_L} + |J| Z Lambda Z``, renormalized every unit of time."""
    h = hl.matrix
    z = np.diag(last_z(hl.n_spins)).real
    d = hl.dim
    lam0 = np.asarray(getattr(lam0, "matrix", lam0), dtype=complex)
    zz = abs(j) * np.outer(z, z)

    def rhs(v):
        m = v.reshape(d, d)
        return (-(m @ h + h @ m) + zz * m).reshape(-1)

    y, ls = _integrate(rhs, lam0, t, chunk=1.0)
    m = hermitian_part(y.reshape(d, d))
    return _normalize_trace(m, ls)


def to_doubled(lam: np.ndarray, n: int) -> np.ndarray:
    """``Phi[a, R b] = Lambda[a, b]``: row-major vectorization with the right half reflected."""
    return (np.asarray(lam) @ reflection(n).T).reshape(-1)


def from_doubled(phi: np.ndarray, n: int) -> np.ndarray:
    d = 2**n
    return np.asarray(phi).reshape(d, d) @ reflection(n)


def doubled_generator(hl: DenseOperator, j: float) -> np.ndarray:
    """``-i (H_L (x) 1 - 1 (x) H_L^ref) + |J| Z_N Z_{N+1}`` on ``2N`` spins.

    ``H_L^ref = R H_L^T R``, which equals ``R H_L R`` for a real Hamiltonian.
    """
    n = hl.n_spins
    r = reflection(n)
    eye = np.eye(hl.dim)
    h_ref = r @ hl.matrix.T @ r
    zn = last_z(n)
    z1 = embed(SZ, 0, n)
    return -1j * (np.kron(hl.matrix, eye) - np.kron(eye, h_ref)) + abs(j) * np.kron(zn, z1)


def ferro_doubled_hamiltonian(hl: DenseOperator, j: float) -> np.ndarray:
    """Doubled chain ``H_L (x) 1 + 1 (x) H_L^ref - |J| Z_N Z_{N+1}`` (imaginary-time generator)."""
    n = hl.n_spins
    r = reflection(n)
    eye = np.eye(hl.dim)
    h_ref = r @ hl.matrix.T @ r
    return np.kron(hl.matrix, eye) + np.kron(eye, h_ref) - abs(j) * np.kron(last_z(n), embed(SZ, 0, n))


def evolve_doubled(phi0: np.ndarray, hl: DenseOperator, j: float, t: float) -> Evolved:
    """``d Phi/dt = H~ Phi``; returns the unit-norm state and ``log ||Phi(t)||``."""
    g = doubled_generator(hl, j)
    y, ls = _integrate(lambda v: g @ v, phi0, t, chunk=1.0)
    return Evolved(y, ls)


def temporal_entropy_dense(lam_b, lam_t) -> float:
    """Entropy of ``Lambda_t^{1/2} Lambda_b Lambda_t^{1/2}`` viewed as a density matrix."""
    lb = np.asarray(getattr(lam_b, "matrix", lam_b), dtype=complex)
    lt = np.asarray(getattr(lam_t, "matrix", lam_t), dtype=complex)
    r = psd_sqrt(lt)
    w = np.linalg.eigvals(r @ lb @ r)
    if np.abs(w.imag).max() > 1e-8 * max(np.abs(w).max(), 1e-300):
        raise ValueError("Lambda has a non-real spectrum")
    return von_neumann_entropy(w.real)


def half_chain_entropy(phi: np.ndarray, n: int) -> float:
    """Entanglement entropy between the two halves of a ``2N``-spin pure state."""
    s = np.linalg.svd(np.asarray(phi).reshape(2**n, 2**n), compute_uv=False)
    return von_neumann_entropy(s**2)


def product_projector(amplitudes: np.ndarray, n: int) -> np.ndarray:
    """``|psi><psi|`` for the ``n``-fold product of a single-spin state."""
    v = np.ones(1, dtype=complex)
    for _ in range(n):
        v = np.kron(v, amplitudes)
    return np.outer(v, v.conj())


def midpoint_temporal_entropy(p: IsingParams, n: int, t: float, amplitudes) -> float:
    """Continuum temporal entropy across the forward/return cut of an unfolded network.

    ``Lambda_b`` evolves from the initial projector along the forward contour;
    above the cut the return contour gives the mirror Gram matrix, so the
    Schmidt weights are the squared eigenvalues of ``Lambda_b``.
    """
    hl = build_HL(p, n)
    lam = evolve_lambda_real(product_projector(np.asarray(amplitudes, dtype=complex), n),
                             hl, p.j_coupling, t).value
    w = np.clip(np.linalg.eigvalsh(hermitian_part(lam)), 0.0, None)
    return von_neumann_entropy(w**2)


def transverse_amplitude(p: IsingParams, n: int, insertions, alpha_ini: int, alpha_fin: int,
                         psi) -> complex:
    """``(J dt)^{k/2} <Psi^fin| Z_N(t_k) ... Z_N(t_1) |Psi^ini>`` with Heisenberg-picture insertions.

    ``insertions`` are ``(time, contour)`` pairs in contour order: forward
    entries with non-decreasing times, then return entries with
    non-increasing times.  ``Psi^alpha`` is the ``n``-spin state obtained from
    ``psi`` (an MPS with open right bond) by fixing that bond to ``alpha``.
    """
    if n > 10:
        raise ScaleError("transverse_amplitude is a dense oracle for n <= 10")
    _check_order(insertions)
    hl = build_HL(p, n).matrix
    w, v = np.linalg.eigh(hl)
    z = last_z(n)

    def state(alpha):
        right = np.zeros(psi.tensors[-1].shape[2], dtype=complex)
        right[alpha] = 1.0
        from .mps import MatrixProductState

        return MatrixProductState(psi.tensors, psi.left, right).to_dense()

    ket = state(alpha_ini)
    for time_, _ in insertions:
        u = (v * np.exp(-1j * w * time_)) @ v.conj().T
        ket = u.conj().T @ (z @ (u @ ket))
    amp = np.vdot(state(alpha_fin), ket)
    return complex(amp * (abs(p.j_coupling) * p.dt) ** (len(insertions) / 2))


def _check_order(insertions) -> None:
    seen_return = False
    last = None
    for time_, contour in insertions:
        if contour not in ("forward", "return"):
            raise OrderingError(f"unknown contour {contour!r}")
        if contour == "forward":
            if seen_return:
                raise OrderingError("forward insertion after a return insertion")
            if last is not None and time_ < last:
                raise OrderingError("forward insertions must have non-decreasing times")
        else:
            if seen_return and time_ > last:
                raise OrderingError("return insertions must have non-increasing times")
            seen_return = True
        last = time_


def trace_distance_to_mixed(lam: np.ndarray) -> float:
    lam = hermitian_part(np.asarray(lam, dtype=complex))
    lam = lam / np.trace(lam).real
    d = lam.shape[0]
    return float(0.5 * np.abs(np.linalg.eigvalsh(lam - np.eye(d) / d)).sum())


def dephasing_fixed_point_check(hl: DenseOperator, j: float, lam0, t: float = 50.0) -> float:
    """Trace distance between the normalized forward-evolved ``Lambda_b(t)`` and ``1/2^N``."""
    if j == 0:
        raise ValueError("the dephasing fixed point needs J != 0")
    return trace_distance_to_mixed(evolve_lambda_real(lam0, hl, j, t).value)
