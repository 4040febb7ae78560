from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foldtn.linalg_core import von_neumann_entropy
from foldtn.mps import (
    MatrixProductOperator,
    MatrixProductState,
    ShapeError,
    apply_mpo,
    bilinear,
    canonicalize_top,
    entropy_profile,
    gram_pair,
    inner,
    lambda_t_all,
    max_entropy,
    random_mps,
    schmidt_spectrum,
    truncate_to,
)
from foldtn.serialization import FormatError, dumps, from_text, load, loads, save, to_text

seeds = st.integers(0, 2**32 - 1)


def dense_cut_spectrum(v, dims, cut):
    left = int(np.prod(dims[: cut + 1]))
    s = np.linalg.svd(v.reshape(left, -1), compute_uv=False)
    p = s**2
    return np.sort(p / p.sum())[::-1]


def test_shape_validation():
    with pytest.raises(ShapeError):
        MatrixProductState([np.zeros((1, 2, 2)), np.zeros((3, 2, 1))])
    with pytest.raises(ShapeError):
        MatrixProductState([])


def test_apply_mpo_matches_dense():
    rng = np.random.default_rng(0)
    s = random_mps(rng, 4, 2, 3)
    ts = [rng.normal(size=(1 if k == 0 else 2, 1 if k == 3 else 2, 2, 2)) for k in range(4)]
    o = MatrixProductOperator(ts)
    assert np.allclose(apply_mpo(s, o).to_dense(), o.to_dense() @ s.to_dense(), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from(["svd", "qr"]))
def test_canonicalize_top(seed, method):
    s = random_mps(np.random.default_rng(seed), 5, 3, 4)
    c = canonicalize_top(s, method)
    assert np.allclose(c.to_dense(), s.to_dense(), atol=1e-10 * np.abs(s.to_dense()).max())
    for lt in lambda_t_all(c):
        assert np.abs(lt - np.eye(lt.shape[0])).max() <= 1e-12


def test_canonicalize_drops_zero_rank():
    psi = np.array([0.6, 0.8])
    site = psi.reshape(1, 2, 1)
    s = MatrixProductState([np.concatenate([site, site], axis=2) / np.sqrt(2),
                            np.concatenate([site, site], axis=0) / np.sqrt(2), site])
    assert canonicalize_top(s).max_bond == 1


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(0, 3))
def test_schmidt_spectrum_matches_dense(seed, cut):
    s = random_mps(np.random.default_rng(seed), 5, 2, 4)
    w = schmidt_spectrum(gram_pair(s, cut)).values
    ref = dense_cut_spectrum(s.to_dense(), s.physical_dims, cut)
    assert np.abs(w - ref[: len(w)]).max() <= 1e-10
    assert entropy_profile(s)[cut] == pytest.approx(von_neumann_entropy(ref), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_entropy_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    s = random_mps(rng, 5, 2, 4)
    base = entropy_profile(s)
    ts = [t.copy() for t in s.tensors]
    for k in range(len(ts) - 1):
        d = ts[k].shape[2]
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) + 3 * np.eye(d)
        ts[k] = np.tensordot(ts[k], x, axes=(2, 0))
        ts[k + 1] = np.tensordot(np.linalg.inv(x), ts[k + 1], axes=(1, 0))
    assert np.abs(np.array(entropy_profile(MatrixProductState(ts))) - base).max() <= 1e-10


def test_product_state_entropy_zero():
    site = np.array([1.0, 1.0]).reshape(1, 2, 1) / np.sqrt(2)
    assert max_entropy(MatrixProductState([site] * 4)) == pytest.approx(0.0, abs=1e-14)


def test_inner_and_bilinear():
    rng = np.random.default_rng(5)
    a, b = random_mps(rng, 4, 2, 3), random_mps(rng, 4, 2, 3)
    assert inner(a, b) == pytest.approx(np.vdot(a.to_dense(), b.to_dense()), rel=1e-12)
    assert bilinear(a, b) == pytest.approx(a.to_dense() @ b.to_dense(), rel=1e-12)


def test_truncate_identity_when_chi_large():
    s = canonicalize_top(random_mps(np.random.default_rng(1), 5, 2, 4))
    t, err = truncate_to(s, 16)
    assert err == 0.0
    assert np.allclose(t.to_dense(), s.to_dense(), atol=1e-13)


def test_truncate_error_bound_dense():
    s = canonicalize_top(random_mps(np.random.default_rng(2), 6, 2, 8))
    t, err = truncate_to(s, 4)
    assert t.max_bond <= 4
    assert np.linalg.norm(s.to_dense() - t.to_dense()) <= err * (1 + 1e-12)


def _unit(s):
    return s.scaled(1.0 / s.norm())


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_cauchy_schwarz_truncation_bound(seed, chi_l, chi_r):
    rng = np.random.default_rng(seed)
    left = _unit(canonicalize_top(random_mps(rng, 5, 2, 4)))
    right = _unit(canonicalize_top(random_mps(rng, 5, 2, 4)))
    lt, el = truncate_to(left, chi_l)
    rt, er = truncate_to(right, chi_r)
    lhs = abs(inner(lt, rt) - inner(left, right))
    assert lhs <= el + er + el * er + 1e-12


def test_serialization_roundtrip(tmp_path):
    s = random_mps(np.random.default_rng(7), 4, 3, 5)
    s.left = s.left * (0.5 + 0.25j)
    back = loads(dumps(s))
    assert all(np.array_equal(a, b) for a, b in zip(s.tensors, back.tensors))
    assert np.array_equal(s.left, back.left) and np.array_equal(s.right, back.right)
    text = from_text(to_text(s))
    assert all(np.array_equal(a, b) for a, b in zip(s.tensors, text.tensors))
    save(s, tmp_path / "x.mps")
    assert np.array_equal(load(tmp_path / "x.mps").tensors[2], s.tensors[2])


def test_serialization_rejects_corrupt_input():
    buf = dumps(random_mps(np.random.default_rng(8), 3, 2, 2))
    with pytest.raises(FormatError):
        loads(b"XXXXXXXX" + buf[8:])
    with pytest.raises(FormatError):
        loads(buf[:-3])
    with pytest.raises(FormatError):
        loads(buf + b"\x00")
