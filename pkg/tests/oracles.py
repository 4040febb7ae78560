"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

PX = np.array([[0, 1], [1, 0]], dtype=complex)
PY = np.array([[0, -1j], [1j, 0]], dtype=complex)
PZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID = np.eye(2, dtype=complex)


def kron_all(ops):
    out = np.eye(1, dtype=complex)
    for o in ops:
        out = np.kron(out, o)
    return out


def op_at(op, site, n):
    return kron_all([op if k == site else ID for k in range(n)])


def ising_terms(j, h, g, n):
    """Single-site part ``A`` and bond part ``B`` of the open chain, built from scratch."""
    a = sum(h * op_at(PX, k, n) + g * op_at(PZ, k, n) for k in range(n))
    b = sum(j * op_at(PZ, k, n) @ op_at(PZ, k + 1, n) for k in range(n - 1)) if n > 1 else 0 * a
    return a, b


def trotter_step(j, h, g, dt, n):
    a, b = ising_terms(j, h, g, n)
    ha = sla.expm(-0.5j * dt * a)
    return ha @ sla.expm(-1j * dt * b) @ ha


def product(amps, n):
    return kron_all([np.asarray(amps, dtype=complex).reshape(2, 1) for _ in range(n)]).reshape(-1)


def network_expectation(j, h, g, dt, n_sites, steps, amps, op, site):
    """``<psi| U^dagger^steps O U^steps |psi>`` with dense matrices."""
    u = trotter_step(j, h, g, dt, n_sites)
    v = product(amps, n_sites)
    for _ in range(steps):
        v = u @ v
    o = np.eye(2 ** n_sites) if op is None else op_at(op, site, n_sites)
    return complex(np.vdot(v, o @ v))


class StateVector:
    """Sparse-free dense circuit on ``n`` qubits via reshaping (site 0 most significant)."""

    def __init__(self, amps, n):
        self.n = n
        self.psi = product(amps, n)
        idx = np.arange(2**n)
        bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
        self._z = 1 - 2 * bits

    def single(self, g):
        v = self.psi.reshape([2] * self.n)
        for s in range(self.n):
            v = np.moveaxis(np.tensordot(g, v, axes=(1, s)), 0, s)
        self.psi = v.reshape(-1)

    def zz_layer(self, j, dt):
        e = np.sum(self._z[:, :-1] * self._z[:, 1:], axis=1)
        self.psi = np.exp(-1j * dt * j * e) * self.psi

    def step(self, j, h, g, dt):
        half = sla.expm(-0.5j * dt * (h * PX + g * PZ))
        self.single(half)
        self.zz_layer(j, dt)
        self.single(half)

    def expect_x(self, site):
        w = self.psi.reshape(2**site, 2, -1)
        return float(np.vdot(w, w[:, ::-1, :]).real)

    def expect_z(self, site):
        w = np.abs(self.psi.reshape(2**site, 2, -1)) ** 2
        return float(w[:, 0, :].sum() - w[:, 1, :].sum())


# --- Majorana solution of the g = 0 circuit -------------------------------------------

_LOCAL_MAJ_1 = [PZ, PY]
_LOCAL_MAJ_2 = [np.kron(PZ, ID), np.kron(PY, ID), np.kron(PX, PZ), np.kron(PX, PY)]


def _rotation(gate, majoranas):
    d = gate.shape[0]
    r = np.array([[np.trace(gl @ gate.conj().T @ gk @ gate) / d for gl in majoranas] for gk in majoranas])
    if np.abs(r.imag).max() > 1e-12:
        raise ValueError("gate is not Gaussian")
    return r.real


class MajoranaChain:
    """Two-point functions ``<g_k g_l>`` of ``2L`` Majoranas for an open chain at ``g = 0``."""

    def __init__(self, n_sites, x_sign):
        self.n = n_sites
        c = np.eye(2 * n_sites, dtype=complex)
        for j in range(n_sites):
            c[2 * j, 2 * j + 1] = -1j * x_sign
            c[2 * j + 1, 2 * j] = 1j * x_sign
        self.c = c

    def _apply(self, r, idx):
        self.c[idx, :] = r @ self.c[idx, :]
        self.c[:, idx] = self.c[:, idx] @ r.T

    def step(self, j, h, dt):
        half = sla.expm(-0.5j * dt * h * PX)
        r1 = _rotation(half, _LOCAL_MAJ_1)
        r2 = _rotation(sla.expm(-1j * dt * j * np.kron(PZ, PZ)), _LOCAL_MAJ_2)
        for s in range(self.n):
            self._apply(r1, [2 * s, 2 * s + 1])
        for s in range(self.n - 1):
            self._apply(r2, [2 * s, 2 * s + 1, 2 * s + 2, 2 * s + 3])
        for s in range(self.n):
            self._apply(r1, [2 * s, 2 * s + 1])

    def expect_x(self, site):
        return float((1j * self.c[2 * site, 2 * site + 1]).real)


# --- textbook iTEBD with division by the Schmidt weights ----------------------------

class VidalITEBD:
    def __init__(self, amps):
        g = np.asarray(amps, dtype=complex).reshape(1, 2, 1)
        self.gam = [g.copy(), g.copy()]
        self.lam = [np.ones(1), np.ones(1)]  # lam[0]: bond B|A, lam[1]: bond A|B

    def _bond(self, i, gate, chi, tol=1e-14):
        j = 1 - i
        lo, mid = self.lam[i], self.lam[j]  # lo: left of site i, mid: between i and j
        th = np.einsum("a,asb,b,btc,c->astc", lo, self.gam[i], mid, self.gam[j], lo)
        th = np.einsum("stuv,auvc->astc", gate.reshape(2, 2, 2, 2), th)
        dl = th.shape[0]
        x, s, y = np.linalg.svd(th.reshape(dl * 2, -1), full_matrices=False)
        keep = max(1, min(chi, int(np.count_nonzero(s > tol * s[0]))))
        x, s, y = x[:, :keep], s[:keep], y[:keep]
        s = s / np.linalg.norm(s)
        self.lam[j] = s
        self.gam[i] = x.reshape(dl, 2, keep) / lo[:, None, None]
        self.gam[j] = y.reshape(keep, 2, -1) / lo[None, None, :]

    def step(self, u_a, u_b, chi):
        self._bond(0, u_b, chi)
        self._bond(1, u_a, chi)

    def expect(self, op):
        vals = []
        for i in range(2):
            th = np.einsum("a,asb,b->asb", self.lam[i], self.gam[i], self.lam[1 - i])
            vals.append(np.einsum("atb,ts,asb->", th.conj(), op, th))
        return float(np.real(sum(vals) / 2))


# --- free fermions in Fock space ------------------------------------------------------

def fock_operators(n_modes):
    """Jordan-Wigner annihilators ``c_j`` on ``n_modes`` modes (dense)."""
    lower = np.array([[0, 1], [0, 0]], dtype=complex)  # |1> -> |0>, occupation basis (0, 1)
    zs = np.diag([1.0, -1.0]).astype(complex)
    return [kron_all([zs] * j + [lower] + [ID] * (n_modes - j - 1)) for j in range(n_modes)]


def slater_vector(a):
    n_modes, n_part = a.shape
    cs = fock_operators(n_modes)
    v = np.zeros(2**n_modes, dtype=complex)
    v[0] = 1.0
    for m in range(n_part):
        v = sum(a[i, m] * cs[i].conj().T for i in range(n_modes)) @ v
    return v / np.linalg.norm(v)


def fock_hamiltonian(h):
    cs = fock_operators(h.shape[0])
    return sum(h[i, k] * cs[i].conj().T @ cs[k] for i in range(h.shape[0]) for k in range(h.shape[0]))


def block_entropy(v, n_left, n_modes):
    s = np.linalg.svd(v.reshape(2**n_left, 2 ** (n_modes - n_left)), compute_uv=False)
    p = s**2
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))
