"""Dense complex linear algebra used throughout the package.

Thin, checked wrappers around LAPACK (via scipy) plus the entropy
functionals.  Every routine here is pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

DEFAULT_REL_TOL = 1e-14
PSD_CLIP = 1e-12


class DecompositionError(RuntimeError):
    """A LAPACK decomposition failed to converge."""

    def __init__(self, kind: str, shape: tuple[int, ...]):
        super().__init__(f"{kind} did not converge for input of shape {shape}")
        self.kind = kind
        self.shape = shape


class ContractViolation(ValueError):
    pass


class SingularInputError(ValueError):
    def __init__(self, smallest: float, largest: float):
        super().__init__(
            f"matrix is numerically rank deficient: smallest singular value "
            f"{smallest:.3e} vs largest {largest:.3e}"
        )
        self.smallest = smallest
        self.largest = largest


class NotPSDError(ValueError):
    pass


class InvalidSpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Real values in descending order, optionally with column eigenvectors."""

    values: np.ndarray
    basis: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.values)

    def normalized(self) -> Spectrum:
        total = self.values.sum()
        return Spectrum(self.values / total, self.basis)


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.size == 0:
        raise ContractViolation(f"expected a nonempty 2-d matrix, got shape {m.shape}")
    return m


def svd(m) -> tuple[np.ndarray, Spectrum, np.ndarray]:
    """Thin SVD ``m = U @ diag(s) @ V`` with descending ``s``.

    Falls back from the divide-and-conquer driver to the QR driver when the
    former fails, which happens occasionally on badly scaled inputs.
    """
    m = _as_matrix(m)
    if not np.all(np.isfinite(m)):
        raise DecompositionError("svd", m.shape)
    try:
        u, s, v = sla.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        try:
            u, s, v = sla.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError("svd", m.shape) from exc
    return u, Spectrum(s), v


def truncated_svd(m, chi_max: int, rel_tol: float = DEFAULT_REL_TOL):
    """SVD keeping at most ``chi_max`` values above ``rel_tol * s[0]``.

    Returns ``(U, s, V, discarded_weight)`` where the discarded weight is the
    dropped share of ``sum(s**2)``.
    """
    if chi_max < 1:
        raise ContractViolation("chi_max must be >= 1")
    u, spec, v = svd(m)
    s = spec.values
    keep = _keep_count(s, chi_max, rel_tol)
    total = float(np.sum(s**2))
    discarded = float(np.sum(s[keep:] ** 2)) / total if total > 0 else 0.0
    return u[:, :keep], Spectrum(s[:keep]), v[:keep, :], discarded


def _keep_count(s: np.ndarray, chi_max: int, rel_tol: float) -> int:
    if len(s) == 0 or s[0] <= 0:
        return 1
    rank = int(np.count_nonzero(s > rel_tol * s[0]))
    return max(1, min(chi_max, rank))


def hermitian_part(h: np.ndarray) -> np.ndarray:
    return 0.5 * (h + h.conj().T)


def eigh(h, tol: float = 1e-10) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix, values descending."""
    h = _as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise ContractViolation(f"eigh needs a square matrix, got {h.shape}")
    scale = np.abs(h).max()
    if np.abs(h - h.conj().T).max() > tol * max(scale, 1e-300):
        raise ContractViolation("matrix is not Hermitian within tolerance")
    try:
        w, b = np.linalg.eigh(hermitian_part(h))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("eigh", h.shape) from exc
    return Spectrum(w[::-1].copy(), b[:, ::-1].copy())


def orthonormalize_columns(a, rank_tol: float = 1e-13) -> np.ndarray:
    """Orthonormal basis (Householder QR) for the column span of ``a``.

    The phases are fixed so that ``R`` has a positive diagonal, which makes
    the result unique and leaves already orthonormal input unchanged.
    """
    a = _as_matrix(a)
    q, r = np.linalg.qr(a)
    # singular values of R equal those of a
    s = np.linalg.svd(r, compute_uv=False)
    if s[-1] <= rank_tol * s[0]:
        raise SingularInputError(float(s[-1]), float(s[0]))
    d = np.diag(r)
    return q * np.where(d == 0, 1.0, d / np.abs(d)).conj()


def matrix_exp(m, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * m)`` by Pade scaling-and-squaring; general (non-normal) input."""
    m = _as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ContractViolation(f"matrix_exp needs a square matrix, got {m.shape}")
    return sla.expm(scale * m)


def psd_sqrt(m, tol: float = 1e-8) -> np.ndarray:
    """Principal square root of a Hermitian positive semidefinite matrix."""
    m = _as_matrix(m)
    w, b = np.linalg.eigh(hermitian_part(m))
    norm = max(np.abs(w).max(), 1e-300)
    if w.min() < -tol * norm:
        raise NotPSDError(f"eigenvalue {w.min():.3e} below -{tol:g} * {norm:.3e}")
    w = np.clip(w, 0.0, None)
    return (b * np.sqrt(w)) @ b.conj().T


def probabilities(values, tol: float = PSD_CLIP) -> np.ndarray:
    """Clip roundoff negatives and normalize to unit sum."""
    p = np.asarray(values.values if isinstance(values, Spectrum) else values, dtype=float)
    if p.size and p.min() < -tol * max(1.0, np.abs(p).max()):
        raise InvalidSpectrumError(f"negative weight {p.min():.3e} in spectrum")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        raise InvalidSpectrumError("spectrum has zero total weight")
    return p / total


def von_neumann_entropy(p, tol: float = PSD_CLIP) -> float:
    """``-sum p ln p`` in nats of a (renormalized) probability spectrum."""
    q = probabilities(p, tol)
    q = q[q > 0]
    return float(max(0.0, -np.sum(q * np.log(q))))
