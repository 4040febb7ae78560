"""Finite matrix product states with explicit boundary vectors.

Site tensors have shape ``(left_bond, physical, right_bond)``.  The
"bottom" of a state is its left end (site 0) and the "top" its right end;
for transverse states the chain runs forward in time.

Gram matrices follow one fixed convention.  Writing the state across the
bond after site ``c`` as ``sum_a l_a (x) u_a``:

    lambda_b[a, b] = <l_b | l_a>     (conj on the second vector)
    lambda_t[a, b] = <u_a | u_b>     (conj on the first vector)

so ``lambda_b -> sum_p A(p) lambda_b A(p)^dagger`` with ``A(p) = B[:, p, :].T``
and the Schmidt weights are the eigenvalues of
``lambda_t^{1/2} lambda_b lambda_t^{1/2}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg_core import (
    DEFAULT_REL_TOL,
    Spectrum,
    _keep_count,
    eigh,
    hermitian_part,
    psd_sqrt,
    svd,
    von_neumann_entropy,
)


class ShapeError(ValueError):
    pass


class DegenerateStateError(ValueError):
    pass


@dataclass
class MatrixProductState:
    tensors: list[np.ndarray]
    left: np.ndarray = None
    right: np.ndarray = None

    def __post_init__(self):
        self.tensors = [np.asarray(t, dtype=complex) for t in self.tensors]
        if not self.tensors:
            raise ShapeError("an MPS needs at least one site")
        if self.left is None:
            self.left = np.ones(self.tensors[0].shape[0], dtype=complex)
        if self.right is None:
            self.right = np.ones(self.tensors[-1].shape[2], dtype=complex)
        self.left = np.asarray(self.left, dtype=complex).reshape(-1)
        self.right = np.asarray(self.right, dtype=complex).reshape(-1)
        self.validate()

    def validate(self) -> None:
        for t in self.tensors:
            if t.ndim != 3:
                raise ShapeError(f"site tensor must be rank 3, got shape {t.shape}")
        if self.left.shape[0] != self.tensors[0].shape[0]:
            raise ShapeError("left boundary does not match the first tensor")
        if self.right.shape[0] != self.tensors[-1].shape[2]:
            raise ShapeError("right boundary does not match the last tensor")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ShapeError(f"bond mismatch {a.shape} -> {b.shape}")

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def physical_dims(self) -> list[int]:
        return [t.shape[1] for t in self.tensors]

    @property
    def bond_dims(self) -> list[int]:
        """Internal bonds only (``len(self) - 1`` entries)."""
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        dims = self.bond_dims
        return max(dims) if dims else 1

    def copy(self) -> MatrixProductState:
        return MatrixProductState([t.copy() for t in self.tensors], self.left.copy(), self.right.copy())

    def scaled(self, factor: complex) -> MatrixProductState:
        out = self.copy()
        out.tensors[0] = out.tensors[0] * factor
        return out

    def absorbed(self) -> MatrixProductState:
        """Same vector with both boundary vectors folded into the end tensors."""
        ts = [t.copy() for t in self.tensors]
        ts[0] = np.einsum("a,apb->pb", self.left, ts[0])[None]
        ts[-1] = np.einsum("apb,b->ap", ts[-1], self.right)[:, :, None]
        return MatrixProductState(ts)

    def to_dense(self) -> np.ndarray:
        """Full amplitude vector, site 0 most significant (small states only)."""
        v = self.left.reshape(1, -1)
        for t in self.tensors:
            v = np.einsum("xa,apb->xpb", v, t).reshape(-1, t.shape[2])
        return v @ self.right

    def norm(self) -> float:
        return float(np.sqrt(max(inner(self, self).real, 0.0)))


@dataclass
class MatrixProductOperator:
    """Tensors of shape ``(left_bond, right_bond, out, in)`` with boundary vectors."""

    tensors: list[np.ndarray]
    left: np.ndarray = None
    right: np.ndarray = None

    def __post_init__(self):
        self.tensors = [np.asarray(t, dtype=complex) for t in self.tensors]
        if self.left is None:
            self.left = np.ones(self.tensors[0].shape[0], dtype=complex)
        if self.right is None:
            self.right = np.ones(self.tensors[-1].shape[1], dtype=complex)
        self.left = np.asarray(self.left, dtype=complex).reshape(-1)
        self.right = np.asarray(self.right, dtype=complex).reshape(-1)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def bond_dim(self) -> int:
        return max(t.shape[1] for t in self.tensors)

    def to_dense(self) -> np.ndarray:
        cur = np.einsum("a,abij->bij", self.left, self.tensors[0])
        for t in self.tensors[1:]:
            d0, d1 = cur.shape[1], t.shape[2]
            cur = np.einsum("aij,abkl->bikjl", cur, t).reshape(t.shape[1], d0 * d1, -1)
        return np.einsum("aij,a->ij", cur, self.right)


@dataclass
class GramPair:
    lambda_b: np.ndarray
    lambda_t: np.ndarray
    cut: int = field(default=-1)


def apply_mpo(s: MatrixProductState, o: MatrixProductOperator) -> MatrixProductState:
    """Exact MPO application; bond dimensions multiply."""
    if len(s) != len(o):
        raise ShapeError(f"MPS has {len(s)} sites but MPO has {len(o)}")
    out = []
    for t, w in zip(s.tensors, o.tensors):
        if t.shape[1] != w.shape[3]:
            raise ShapeError(f"physical dim {t.shape[1]} does not match MPO input {w.shape[3]}")
        x = np.einsum("apb,cdqp->acqbd", t, w)
        out.append(x.reshape(t.shape[0] * w.shape[0], w.shape[2], t.shape[2] * w.shape[1]))
    return MatrixProductState(out, np.kron(s.left, o.left), np.kron(s.right, o.right))


def canonicalize_top(
    s: MatrixProductState, method: str = "svd", rel_tol: float = DEFAULT_REL_TOL
) -> MatrixProductState:
    """Right-to-left sweep making ``lambda_t`` the identity on every cut.

    ``method='svd'`` also drops singular values below ``rel_tol`` (relative);
    ``method='qr'`` is the faster Householder variant without rank reduction.
    The norm ends up in the first tensor; boundaries become trivial.
    """
    a = s.absorbed()
    ts = a.tensors
    out: list[np.ndarray] = [None] * len(ts)
    carry = np.ones((1, 1), dtype=complex)
    for k in range(len(ts) - 1, 0, -1):
        m = np.tensordot(ts[k], carry, axes=(2, 0))
        dl, d, dr = m.shape
        q, r = _lq(m.reshape(dl, d * dr), method, rel_tol)
        out[k] = q.reshape(-1, d, dr)
        carry = r
    first = np.tensordot(ts[0], carry, axes=(2, 0))
    if not np.any(first):
        raise DegenerateStateError("state has zero norm")
    out[0] = first
    return MatrixProductState(out)


def _lq(m: np.ndarray, method: str, rel_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """``m = r @ q`` with orthonormal rows in ``q``."""
    if method == "qr":
        qt, rt = np.linalg.qr(m.T)
        return qt.T, rt.T
    if method != "svd":
        raise ValueError(f"unknown canonicalization method {method!r}")
    u, spec, v = svd(m)
    s = spec.values
    keep = _keep_count(s, len(s), rel_tol)
    return v[:keep], u[:, :keep] * s[:keep]


def lambda_b_all(s: MatrixProductState, bilinear: bool = False) -> list[np.ndarray]:
    """``lambda_b`` on every internal bond, accumulated from the left boundary.

    With ``bilinear=True`` no complex conjugation is applied, giving the
    symmetric Gram matrix of the plain (transpose) pairing.
    """
    lam = np.outer(s.left, s.left if bilinear else s.left.conj())
    out = []
    for t in s.tensors[:-1]:
        lam = evolve_gram(lam, t, bilinear)
        out.append(lam)
    return out


def evolve_gram(lam: np.ndarray, t: np.ndarray, bilinear: bool = False) -> np.ndarray:
    """``sum_p A(p) lam A(p)^{dagger or T}`` with ``A(p) = t[:, p, :].T``."""
    # A(p) lam A(p)^* = t[:, p, :]^T lam t[:, p, :]^*  summed over p
    x = np.tensordot(lam, t if bilinear else t.conj(), axes=(1, 0))  # (a, p, b')
    return np.tensordot(t, x, axes=([0, 1], [0, 1]))


def lambda_t_all(s: MatrixProductState) -> list[np.ndarray]:
    lam = np.outer(s.right.conj(), s.right)
    out = []
    for t in reversed(s.tensors[1:]):
        x = np.tensordot(t.conj(), lam, axes=(2, 0))  # (a, p, b)
        lam = np.tensordot(x, t, axes=([1, 2], [1, 2]))
        out.append(lam)
    return out[::-1]


def gram_pair(s: MatrixProductState, cut: int) -> GramPair:
    """Exact ``(lambda_b, lambda_t)`` on the bond after site ``cut``."""
    n_bonds = len(s) - 1
    if not 0 <= cut < n_bonds:
        raise IndexError(f"cut {cut} out of range for {n_bonds} bonds")
    lam_b = np.outer(s.left, s.left.conj())
    for t in s.tensors[: cut + 1]:
        lam_b = evolve_gram(lam_b, t)
    lam_t = np.outer(s.right.conj(), s.right)
    for t in reversed(s.tensors[cut + 1 :]):
        x = np.tensordot(t.conj(), lam_t, axes=(2, 0))
        lam_t = np.tensordot(x, t, axes=([1, 2], [1, 2]))
    return GramPair(lam_b, lam_t, cut)


def schmidt_spectrum(g: GramPair) -> Spectrum:
    """Normalized Schmidt weights from a Gram pair, descending."""
    r = psd_sqrt(g.lambda_t)
    lam = hermitian_part(r @ g.lambda_b @ r)
    w = np.linalg.eigvalsh(lam)[::-1]
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        raise DegenerateStateError("zero Schmidt weight")
    return Spectrum(w / total)


def entropy_profile(s: MatrixProductState) -> list[float]:
    """Von Neumann entropy on every internal bond."""
    if len(s) < 2:
        return []
    lbs = lambda_b_all(s)
    lts = lambda_t_all(s)
    return [von_neumann_entropy(schmidt_spectrum(GramPair(b, t))) for b, t in zip(lbs, lts)]


def max_entropy(s: MatrixProductState) -> float:
    prof = entropy_profile(s)
    return max(prof) if prof else 0.0


def inner(a: MatrixProductState, b: MatrixProductState) -> complex:
    """``<a|b>``, conjugating ``a``."""
    return _pair(a, b, conj=True)


def bilinear(a: MatrixProductState, b: MatrixProductState) -> complex:
    """Plain contraction ``sum a(x) b(x)`` without conjugation."""
    return _pair(a, b, conj=False)


def _pair(a: MatrixProductState, b: MatrixProductState, conj: bool) -> complex:
    if len(a) != len(b) or a.physical_dims != b.physical_dims:
        raise ShapeError("states differ in length or physical dimensions")
    ca = (lambda x: x.conj()) if conj else (lambda x: x)
    env = np.outer(ca(a.left), b.left)
    for ta, tb in zip(a.tensors, b.tensors):
        x = np.tensordot(env, ca(ta), axes=(0, 0))  # (b_a', p, a')
        env = np.tensordot(x, tb, axes=([0, 1], [0, 1]))
    return complex(ca(a.right) @ env @ b.right)


def truncate_to(s: MatrixProductState, chi: int,
                rel_tol: float = DEFAULT_REL_TOL) -> tuple[MatrixProductState, float]:
    """Schmidt truncation of a top-canonical state to bond dimension ``chi``.

    Every bond is projected onto the leading eigenvectors of its ``lambda_b``
    computed from the untruncated state.  The projectors commute pairwise
    (each acts below or above the others' support), so
    ``||s - s_trunc|| <= ||s|| * sum_k sqrt(discarded_k)``, which is the
    returned error bound.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    lbs = lambda_b_all(s)
    norm = s.norm()
    bases = []
    err = 0.0
    for lam in lbs:
        if lam.shape[0] <= chi:
            bases.append(None)
            continue
        spec = eigh(hermitian_part(lam))
        w = np.clip(spec.values, 0.0, None)
        keep = _keep_count(w, chi, rel_tol)
        total = w.sum()
        disc = float(w[keep:].sum() / total) if total > 0 else 0.0
        err += np.sqrt(max(disc, 0.0))
        bases.append(spec.basis[:, :keep].conj())
    return rotate_bonds(s, bases), float(err * norm)


def rotate_bonds(s: MatrixProductState, bases: list) -> MatrixProductState:
    """Restrict each internal bond to the span of an isometry ``W`` (``None`` keeps it).

    Lower vectors map as ``l -> l W`` and the tensor above gets ``W^dagger``.
    """
    ts = [t.copy() for t in s.tensors]
    for k, w in enumerate(bases):
        if w is None:
            continue
        ts[k] = np.tensordot(ts[k], w, axes=(2, 0))
        ts[k + 1] = np.tensordot(w.conj().T, ts[k + 1], axes=(1, 0))
    return MatrixProductState(ts, s.left.copy(), s.right.copy())


def random_mps(rng: np.random.Generator, n: int, d: int, chi: int) -> MatrixProductState:
    """Random complex MPS with bond dimensions capped by ``chi`` and by the edges."""
    dims = [1]
    for k in range(1, n):
        dims.append(min(chi, d**k, d ** (n - k)))
    dims.append(1)
    ts = [
        rng.normal(size=(dims[k], d, dims[k + 1])) + 1j * rng.normal(size=(dims[k], d, dims[k + 1]))
        for k in range(n)
    ]
    return MatrixProductState(ts)
