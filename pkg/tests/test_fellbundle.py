import numpy as np
import pytest
from hypothesis import given, strategies as st

from fellbundles import groupoid as gpd
from fellbundles.cstar import BlockAlgebra
from fellbundles.fellbundle import (BundleProfile, FellBundle, group_algebra_bundle, line_bundle_z2,
                                    point_bundle, random_fell_bundle, trivial_bundle,
                                    validate_fell_bundle)
from fellbundles.report import StructuralError

seeds = st.integers(0, 2**31 - 1)
SMALL = BundleProfile(max_fibre_dim=3, max_arrows=6)


def test_group_algebra_of_z3_is_convolution():
    G = gpd.cyclic_group(3)
    fb = group_algebra_bundle(G)
    assert validate_fell_bundle(fb).passed
    # delta_g * delta_h = delta_{g+h}
    for g in range(3):
        for h in range(3):
            assert fb.multiply(g, h, [1.0], [1.0]) == pytest.approx([1.0])
            assert G.comp(g, h) == (g + h) % 3


def test_trivial_bundle_matches_block_algebra():
    G = gpd.pair_groupoid(2)
    fb = trivial_bundle(G, (1, 2))
    alg = BlockAlgebra((1, 2))
    rng = np.random.default_rng(3)
    a, b = alg.random(rng), alg.random(rng)
    for g, h in G.composable_pairs():
        assert np.allclose(fb.multiply(g, h, a, b), alg.mul(a, b))
    assert np.allclose(fb.star(1, a), alg.star(a))
    assert validate_fell_bundle(fb).passed


def test_point_bundle_is_its_algebra():
    fb = point_bundle((2,))
    assert fb.total_dim == 4
    assert validate_fell_bundle(fb).passed


def test_sign_twisted_line_bundle_fails_positivity():
    assert validate_fell_bundle(line_bundle_z2(1.0)).passed
    rep = validate_fell_bundle(line_bundle_z2(-1.0))
    assert not rep.passed
    assert rep.failed() == ["F10"]


def test_wrong_tensor_shape_is_structural():
    fb = line_bundle_z2()
    mult = dict(fb.mult)
    mult[(1, 1)] = np.ones((1, 1, 2))
    with pytest.raises(StructuralError):
        FellBundle(fb.base, fb.unit_algebras, fb.dims, mult, fb.invol)
    del mult[(1, 1)]
    with pytest.raises(StructuralError):
        FellBundle(fb.base, fb.unit_algebras, fb.dims, mult, fb.invol)


def test_corrupted_involution_is_caught():
    fb = line_bundle_z2()
    invol = [fb.invol[0], 1j * fb.invol[1]]
    bad = FellBundle(fb.base, fb.unit_algebras, fb.dims, fb.mult, invol)
    assert not validate_fell_bundle(bad).passed


def test_non_associative_multiplication_is_caught():
    fb = random_fell_bundle(5, BundleProfile(groupoid=None, max_arrows=6, max_fibre_dim=3))
    pairs = [(g, h) for g, h in fb.base.composable_pairs()
             if not fb.base.is_unit(g) and not fb.base.is_unit(h)]
    mult = dict(fb.mult)
    if pairs:
        k = pairs[0]
    else:
        k = next(iter(fb.base.composable_pairs()))
    mult[k] = mult[k] * 1.5
    bad = FellBundle(fb.base, fb.unit_algebras, fb.dims, mult, fb.invol)
    assert not validate_fell_bundle(bad).passed


def test_unknown_profile_raises():
    with pytest.raises(ValueError):
        random_fell_bundle(0, "no-such-groupoid")


@given(seeds)
def test_random_bundles_are_valid(seed):
    fb = random_fell_bundle(seed, SMALL)
    assert validate_groupoid_ok(fb.base)
    rep = validate_fell_bundle(fb, seed=seed)
    assert rep.passed, rep.to_text()


def validate_groupoid_ok(G):
    return gpd.validate_groupoid(G).passed


@given(seeds)
def test_change_basis_is_covariant(seed):
    fb = random_fell_bundle(seed, SMALL)
    rng = np.random.default_rng(seed)
    H = fb.base
    C = {g: np.eye(fb.dims[g]) + 0.3 * rng.standard_normal((fb.dims[g], fb.dims[g]))
         for g in H.arrows if not H.is_unit(g)}
    new = fb.change_basis(C)
    full = {g: C.get(g, np.eye(fb.dims[g])) for g in H.arrows}
    for g, h in H.composable_pairs():
        b, c = new.random(g, rng), new.random(h, rng)
        gh = H.comp(g, h)
        # old coordinates are C @ new coordinates
        lhs = full[gh] @ new.multiply(g, h, b, c)
        rhs = fb.multiply(g, h, full[g] @ b, full[h] @ c)
        assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))
    for g in H.arrows:
        b = new.random(g, rng)
        assert np.allclose(full[H.inv[g]] @ new.star(g, b), fb.star(g, full[g] @ b))
    assert validate_fell_bundle(new, seed=seed).passed


@given(seeds)
def test_norms_satisfy_cstar_identity(seed):
    fb = random_fell_bundle(seed, SMALL)
    rng = np.random.default_rng(seed)
    H = fb.base
    for g in H.arrows:
        b = fb.random(g, rng)
        bb = fb.multiply(H.inv[g], g, fb.star(g, b), b)
        # ||b* b|| = ||b||^2, with the unit-fibre norm as the reference
        assert fb.norm(H.comp(H.inv[g], g), bb) == pytest.approx(fb.norm(g, b) ** 2, rel=1e-7)
