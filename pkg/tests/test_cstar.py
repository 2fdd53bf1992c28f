import numpy as np
import pytest
from hypothesis import given, strategies as st

from fellbundles import cstar
from fellbundles.cstar import BlockAlgebra
from fellbundles.report import StructuralError

block_lists = st.lists(st.integers(1, 3), min_size=1, max_size=3)


def dense(alg, a):
    """Block-diagonal matrix of an element: the oracle representation."""
    mats = alg.to_blocks(a)
    n = sum(alg.blocks)
    out = np.zeros((n, n), dtype=complex)
    o = 0
    for m, k in zip(mats, alg.blocks):
        out[o:o + k, o:o + k] = m
        o += k
    return out


def test_block_sizes_must_be_positive():
    with pytest.raises(StructuralError):
        BlockAlgebra([])
    with pytest.raises(StructuralError):
        BlockAlgebra([2, 0])


def test_dimension_and_offsets():
    alg = BlockAlgebra([1, 2, 3])
    assert alg.dim == 14
    assert alg.offsets == (0, 1, 5, 14)
    assert alg.index(2, 1, 2) == 5 + 5


def test_operator_norm_example():
    alg = BlockAlgebra([2, 2])
    a = alg.element(alg.from_blocks([np.diag([3.0, 4.0]), [[0.0, 5.0], [0.0, 0.0]]]))
    assert cstar.operator_norm(a) == pytest.approx(5.0, abs=1e-12)


def test_is_positive_tolerance_example():
    alg = BlockAlgebra([2])
    a = alg.element(alg.from_blocks([np.diag([-1e-12, 1.0])]))
    assert cstar.is_positive(a, tol=1e-9)
    assert not cstar.is_positive(a, tol=1e-13)
    nonherm = alg.element(alg.from_blocks([[[1.0, 1.0], [0.0, 1.0]]]))
    assert not cstar.is_positive(nonherm)


def test_gram_factorize_scalar_examples():
    C = BlockAlgebra([1])
    b = cstar.gram_factorize(np.array([[[4.0]]]), C)
    assert b[0, 0, 0] == pytest.approx(2.0)
    G = np.ones((2, 2, 1))
    b = cstar.gram_factorize(G, C)
    assert cstar.gram_residual(G, b, C) < 1e-12
    with pytest.raises(ValueError):
        cstar.gram_factorize(np.array([[[0.0], [1.0]], [[1.0], [0.0]]]), C)
    with pytest.raises(ValueError):
        cstar.gram_factorize(np.array([[[0.0], [1.0]], [[0.0], [0.0]]]), C)


def test_structure_tensors_match_dense_products():
    alg = BlockAlgebra([1, 2])
    rng = np.random.default_rng(0)
    a, b = alg.random(rng), alg.random(rng)
    via_tensor = np.einsum("i,j,ijk->k", a, b, alg.mult_tensor)
    assert np.allclose(dense(alg, via_tensor), dense(alg, a) @ dense(alg, b))
    assert np.allclose(dense(alg, np.conj(a) @ alg.invol_matrix), dense(alg, a).conj().T)


def test_trace_and_min_eig():
    alg = BlockAlgebra([1, 2])
    a = alg.from_blocks([[[2.0]], np.diag([-1.0, 3.0])])
    assert alg.trace(a) == pytest.approx(4.0)
    assert alg.min_eig(a) == pytest.approx(-1.0)


@given(block_lists, st.integers(0, 2**31 - 1))
def test_algebra_axioms(blocks, seed):
    alg = BlockAlgebra(blocks)
    rng = np.random.default_rng(seed)
    a, b, c = (alg.random(rng) for _ in range(3))
    assert np.allclose(alg.mul(alg.mul(a, b), c), alg.mul(a, alg.mul(b, c)))
    assert np.allclose(alg.star(alg.mul(a, b)), alg.mul(alg.star(b), alg.star(a)))
    assert np.allclose(alg.mul(alg.identity(), a), a)
    # C* identity, with the dense spectral norm as the oracle
    assert alg.norm(alg.mul(alg.star(a), a)) == pytest.approx(alg.norm(a) ** 2, rel=1e-9)
    assert alg.norm(a) == pytest.approx(np.linalg.norm(dense(alg, a), 2), rel=1e-9)
    assert cstar.is_positive(alg.element(alg.mul(alg.star(a), a)))
    e = alg.element(a)
    assert np.allclose((e * alg.element(b)).data, alg.mul(a, b))
    assert np.allclose(e.star().star().data, a)


@given(block_lists, st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_gram_factorize_round_trip(blocks, k, seed):
    alg = BlockAlgebra(blocks)
    rng = np.random.default_rng(seed)
    x = np.array([[alg.random(rng) for _ in range(k + 1)] for _ in range(k)])
    # G_ij = sum_l x_il x_jl^*, positive by construction
    G = np.einsum("ilp,jlq,pqr->ijr", x, np.conj(x) @ alg.invol_matrix, alg.mult_tensor)
    b = cstar.gram_factorize(G, alg)
    assert cstar.gram_residual(G, b, alg) < 1e-8 * (1 + np.abs(G).max())
    assert np.allclose(cstar.deflate(cstar.inflate(G, alg), alg, k), G)


def scrambled_round_trip(blocks, seed):
    alg = BlockAlgebra(blocks)
    rng = np.random.default_rng(seed)
    d = alg.dim
    S = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) + 3 * np.eye(d)
    Si = np.linalg.inv(S)
    # structure constants in the basis given by the columns of S
    mult = np.einsum("ai,bj,abc,kc->ijk", S, S, alg.mult_tensor, Si, optimize=True)
    J = np.conj(S).T @ alg.invol_matrix @ Si.T
    found, C = cstar.wedderburn(mult, J)
    assert sorted(found) == sorted(blocks)
    new = BlockAlgebra(found)
    Ci = np.linalg.inv(C)
    back = np.einsum("ai,bj,abc,kc->ijk", C, C, mult, Ci, optimize=True)
    assert np.allclose(back, new.mult_tensor, atol=1e-7)
    assert np.allclose(np.conj(C).T @ J @ Ci.T, new.invol_matrix, atol=1e-7)


@given(st.lists(st.integers(1, 2), min_size=1, max_size=3), st.integers(0, 2**31 - 1))
def test_wedderburn_recovers_scrambled_algebra(blocks, seed):
    scrambled_round_trip(blocks, seed)


def test_wedderburn_recovers_m3():
    scrambled_round_trip([3], 7)
