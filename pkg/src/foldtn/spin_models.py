"""Ising chain with transverse and parallel fields, and its Trotter tensors.

    H = sum_i  J Sz_i Sz_{i+1} + g Sz_i + h Sx_i

with Pauli matrices for Sx, Sz.  One second-order Trotter step is

    U = exp(-i A dt/2) exp(-i B dt) exp(-i A dt/2),
    A = sum_i (h Sx_i + g Sz_i),   B = sum_i J Sz_i Sz_{i+1}.

``exp(-i B dt)`` factorizes bond by bond into ``cos(J dt) - i sin(J dt) Sz Sz``,
so a row of the space-time network is an MPO with a two-valued bond
(label 0 = identity term, 1 = Sz Sz term).  The bond weight is split
symmetrically, ``sqrt(c_k)`` on each side, which makes the site tensor
symmetric under left/right exchange.

Row tensors use the index order ``(left_bond, right_bond, out, in)``.
Folding pairs a forward index ``f`` with its return partner ``r`` into
``f + 2 * r`` (forward varies fastest), for bond labels and spins alike.
The folded tensor is ``T (x) conj(T)``, i.e. the superoperator
``rho -> U rho U^dagger`` expressed per site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg_core import matrix_exp

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SY = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


class Arrow(str, Enum):
    FORWARD = "forward"
    RETURN = "return"


def spin_ops() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return SX.copy(), SZ.copy(), I2.copy()


@dataclass(frozen=True)
class IsingParams:
    j_coupling: float = 1.0
    h_transverse: float = -1.05
    g_parallel: float = 0.5
    dt: float = 0.1

    def __post_init__(self):
        vals = (self.j_coupling, self.h_transverse, self.g_parallel, self.dt)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite Ising parameter in {vals}")
        if self.dt < 0:
            raise ValueError("dt must be non-negative")

    def single_site_hamiltonian(self) -> np.ndarray:
        return self.h_transverse * SX + self.g_parallel * SZ

    def steps_for(self, t_total: float, tol: float = 1e-9) -> int:
        """Number of Trotter steps in ``t_total``; it must be a multiple of dt."""
        if self.dt <= 0:
            raise ValueError("dt must be positive to count steps")
        n = int(round(t_total / self.dt))
        if n < 1 or abs(n * self.dt - t_total) > tol:
            raise ValueError(f"t_total={t_total} is not a positive multiple of dt={self.dt}")
        return n

    def to_dict(self) -> dict:
        return {
            "j_coupling": self.j_coupling,
            "h_transverse": self.h_transverse,
            "g_parallel": self.g_parallel,
            "dt": self.dt,
        }


PAPER_PARAMS = IsingParams(1.0, -1.05, 0.5, 0.1)


@dataclass(frozen=True)
class LocalState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(2)
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("local state must have unit norm")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_amplitudes(cls, amps) -> LocalState:
        a = np.asarray(amps, dtype=complex).reshape(2)
        return cls(a / np.linalg.norm(a))

    def density(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


X_PLUS = LocalState(np.array([1.0, 1.0]) / math.sqrt(2.0))
X_MINUS = LocalState(np.array([1.0, -1.0]) / math.sqrt(2.0))


def named_state(name: str) -> LocalState:
    table = {"x_plus": X_PLUS, "x_minus": X_MINUS}
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"unknown initial state {name!r}; expected one of {sorted(table)}") from None


def _sign(arrow: Arrow | str) -> float:
    return -1.0 if Arrow(arrow) is Arrow.FORWARD else 1.0


def single_site_half_gate(p: IsingParams, arrow: Arrow | str = Arrow.FORWARD) -> np.ndarray:
    """``exp(-/+ i (h Sx + g Sz) dt/2)``; minus sign on the forward contour."""
    return matrix_exp(p.single_site_hamiltonian(), 1j * _sign(arrow) * p.dt / 2)


def bond_weights(p: IsingParams, arrow: Arrow | str = Arrow.FORWARD) -> np.ndarray:
    """Coefficients of the identity and Sz Sz terms of ``exp(-/+ i J Sz Sz dt)``."""
    x = p.j_coupling * p.dt
    return np.array([math.cos(x), _sign(arrow) * 1j * math.sin(x)], dtype=complex)


def _site_tensor(p: IsingParams, arrow, before: np.ndarray, after: np.ndarray,
                 left_open: bool, right_open: bool) -> np.ndarray:
    w = np.sqrt(bond_weights(p, arrow))
    zp = (I2, SZ)
    lefts = (0,) if left_open else (0, 1)
    rights = (0,) if right_open else (0, 1)
    t = np.zeros((len(lefts), len(rights), 2, 2), dtype=complex)
    for a, kl in enumerate(lefts):
        for b, kr in enumerate(rights):
            wl = 1.0 if left_open else w[kl]
            wr = 1.0 if right_open else w[kr]
            t[a, b] = wl * wr * (after @ zp[kl] @ zp[kr] @ before)
    return t


@dataclass(frozen=True)
class TrotterRow:
    """Translation-invariant one-site unit cell of a row MPO.

    ``tensor`` has shape ``(bond, bond, local, local)``; ``left_edge`` and
    ``right_edge`` are the site tensors to use at open chain ends (bond
    dimension 1 on the open side, unit weight).
    """

    tensor: np.ndarray
    left_edge: np.ndarray
    right_edge: np.ndarray
    folded: bool = False
    single: np.ndarray = field(default=None, repr=False)

    @property
    def bond_dim(self) -> int:
        return self.tensor.shape[0]

    @property
    def local_dim(self) -> int:
        return self.tensor.shape[2]


def _row(p: IsingParams, arrow, before, after) -> TrotterRow:
    bulk = _site_tensor(p, arrow, before, after, False, False)
    left = _site_tensor(p, arrow, before, after, True, False)
    right = _site_tensor(p, arrow, before, after, False, True)
    single = _site_tensor(p, arrow, before, after, True, True)
    return TrotterRow(bulk, left, right, False, single)


def bond_row_mpo(p: IsingParams, arrow: Arrow | str = Arrow.FORWARD) -> TrotterRow:
    """MPO of ``exp(-/+ i J dt sum Sz Sz)`` alone."""
    return _row(p, arrow, I2, I2)


def trotter_row(p: IsingParams, arrow: Arrow | str = Arrow.FORWARD) -> TrotterRow:
    """MPO of one full second-order Trotter step (return arrow gives its inverse)."""
    a = single_site_half_gate(p, arrow)
    return _row(p, arrow, a, a)


def fold_tensor(t: np.ndarray) -> np.ndarray:
    """Merge forward tensor with its conjugate partner: indices ``f + 2 r``."""
    dl, dr, do, di = t.shape
    f = np.einsum("abij,cdkl->cadbkilj", t, t.conj())
    return f.reshape(dl * dl, dr * dr, do * do, di * di)


def folded_row(p: IsingParams) -> TrotterRow:
    """Forward Trotter row folded with its return partner; bond and local dims 4."""
    r = trotter_row(p, Arrow.FORWARD)
    return TrotterRow(
        fold_tensor(r.tensor), fold_tensor(r.left_edge), fold_tensor(r.right_edge),
        True, fold_tensor(r.single),
    )


def contract_row(row: TrotterRow, n: int) -> np.ndarray:
    """Dense operator of an ``n``-site open segment of a row MPO (tests, small n)."""
    if n < 1:
        raise ValueError("need at least one site")
    if n == 1:
        return row.single[0, 0].copy()
    d = row.local_dim
    # running tensor: (bond, out..., in...) flattened to (bond, D, D)
    cur = row.left_edge[0].reshape(row.bond_dim, d, d)
    for k in range(1, n):
        site = row.right_edge if k == n - 1 else row.tensor
        dim = cur.shape[1]
        nxt = np.einsum("aij,abkl->bikjl", cur, site)
        cur = nxt.reshape(site.shape[1], dim * d, dim * d)
    return cur[0]


def local_folded_vector(op: np.ndarray) -> np.ndarray:
    """Folded 4-vector ``v[f + 2 r] = op[r, f]`` that closes a contour pair with ``op``.

    ``op = I`` gives the trace; a state density matrix ``rho`` enters the
    bottom of a column as ``local_folded_vector(rho.T)``.
    """
    op = np.asarray(op, dtype=complex)
    return op.reshape(4).copy()


def folded_density(state: LocalState) -> np.ndarray:
    """Folded 4-vector of ``|psi><psi|``: ``psi[f] * conj(psi[r])``."""
    psi = state.amplitudes
    return np.outer(psi.conj(), psi).reshape(4)


def product_state(local: LocalState, n: int | None):
    """Bond-dimension-1 product state; ``n=None`` gives the infinite (iTEBD) form."""
    if n is None or (isinstance(n, float) and math.isinf(n)):
        from .itebd import InfiniteMPS

        return InfiniteMPS.product(local)
    from .mps import MatrixProductState

    site = local.amplitudes.reshape(1, 2, 1)
    return MatrixProductState([site.copy() for _ in range(int(n))])


def two_site_zz_gate(p: IsingParams) -> np.ndarray:
    return matrix_exp(p.j_coupling * np.kron(SZ, SZ), -1j * p.dt)


def itebd_gates(p: IsingParams) -> tuple[np.ndarray, np.ndarray]:
    """Two-site gates with ``U_A U_B`` equal to one Trotter step.

    ``U_B = exp(-i J Sz Sz dt) (a (x) a)`` acts first on one sublattice of
    bonds, then ``U_A = (a (x) a) exp(-i J Sz Sz dt)`` on the other, where
    ``a`` is the forward single-site half gate.  Basis order is ``kron(s1, s2)``.
    """
    a = single_site_half_gate(p, Arrow.FORWARD)
    aa = np.kron(a, a)
    zz = two_site_zz_gate(p)
    return aa @ zz, zz @ aa


def dense_hamiltonian(p: IsingParams, n: int) -> np.ndarray:
    """Open-chain Hamiltonian on ``n`` spins, site 0 is the most significant qubit."""
    dim = 2**n
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(n):
        h += embed(p.single_site_hamiltonian(), i, n)
    for i in range(n - 1):
        h += p.j_coupling * embed(np.kron(SZ, SZ), i, n, width=2)
    return h


def embed(op: np.ndarray, site: int, n: int, width: int = 1) -> np.ndarray:
    left = np.eye(2**site)
    right = np.eye(2 ** (n - site - width))
    return np.kron(np.kron(left, op), right)


def dense_trotter_step(p: IsingParams, n: int) -> np.ndarray:
    """Dense open-chain Trotter step (reference operator for small n)."""
    a = np.eye(1)
    h1 = single_site_half_gate(p)
    for _ in range(n):
        a = np.kron(a, h1)
    zz = np.zeros(2**n)
    for i in range(n - 1):
        zz = zz + p.j_coupling * np.real(np.diag(embed(np.kron(SZ, SZ), i, n, width=2)))
    b = np.diag(np.exp(-1j * p.dt * zz))
    return a @ b @ a
