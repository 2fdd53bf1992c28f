import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fellbundles import groupoid as gpd
from fellbundles.applications import fixture_matrix, fixture_self
from fellbundles.demiequiv import DemiEquivalence, random_demi_equivalence, self_demi
from fellbundles.fellbundle import (BundleProfile, line_bundle_z2, point_bundle, random_fell_bundle,
                                    trivial_bundle, validate_fell_bundle)
from fellbundles.imprimitivity import (Equivalence, build_imprimitivity_bundle,
                                       construction_properties_check, elementary, flip, k_element,
                                       k_fibre, psi_characterized, psi_transport, uniqueness_iso,
                                       validate_equivalence)
from fellbundles.report import StructuralError

seeds = st.integers(0, 2**31 - 1)
SMALL = BundleProfile(max_fibre_dim=3, max_arrows=6)


def two_points_over_c(d0=1, d1=2):
    """Points with Hilbert spaces C^d0 and C^d1 over the trivial group."""
    fb = point_bundle((1,))
    action = gpd.PrincipalAction(fb.base, [0, 0], [[0], [1]])
    ract = {(x, 0): np.eye(d)[:, None, :] for x, d in enumerate((d0, d1))}
    rip = {(x, x): np.eye(d)[:, :, None] for x, d in enumerate((d0, d1))}
    return DemiEquivalence(fb, action, [d0, d1], ract, rip)


def small_demi(seed):
    return random_demi_equivalence(seed, random_fell_bundle(seed, SMALL), max_copies=1, max_dim=4)


def test_pair_fibres_are_all_linear_maps():
    m = two_points_over_c()
    e = build_imprimitivity_bundle(m)
    assert e.groupoid.rep == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert e.bundle.dims == [1, 2, 2, 4]
    assert e.bundle.total_dim == 9
    assert validate_fell_bundle(e.bundle).passed
    assert validate_equivalence(e).passed


def test_matrix_fibre_dimension():
    f = fixture_matrix(line_bundle_z2(), 2)
    e = build_imprimitivity_bundle(f.demi)
    # over C every linear map is a module map: 2 x 2
    assert k_fibre(f.demi, 0, 0).dim == 4
    assert e.bundle.dims == [4, 4]


def test_flip_of_elementary_tensor():
    m = small_demi(4)
    rng = np.random.default_rng(0)
    for x in range(m.n_points):
        for y in range(m.n_points):
            if m.action.sigma[x] != m.action.sigma[y]:
                continue
            a, b = m.random(x, rng), m.random(y, rng)
            lhs = flip(m, elementary(m, x, y, a, b))
            rhs = elementary(m, y, x, b, a)
            assert lhs.at == (y, x)
            assert np.allclose(lhs.op, rhs.op, atol=1e-8 * (1 + np.abs(rhs.op).max()))


def test_psi_along_a_unit_is_identity():
    m = small_demi(9)
    H = m.base
    rng = np.random.default_rng(1)
    for x in range(m.n_points):
        for y in range(m.n_points):
            if m.action.sigma[x] != m.action.sigma[y]:
                continue
            u = H.unit_arrow(m.action.sigma[x])
            xi = k_element(m, x, y, rng.standard_normal(k_fibre(m, x, y).dim))
            out = psi_transport(m, u, xi)
            assert out.at == (x, y)
            assert np.allclose(out.op, xi.op)


def test_k_fibre_rejects_anchor_mismatch():
    H = gpd.disjoint_union(gpd.cyclic_group(1), gpd.cyclic_group(1))
    m = self_demi(trivial_bundle(H))
    with pytest.raises(StructuralError):
        k_fibre(m, 0, 1)


def test_corrupted_left_action_is_caught():
    e = fixture_self(line_bundle_z2()).expected
    lact = dict(e.lact)
    lact[(1, 1)] = 2 * lact[(1, 1)]
    bad = Equivalence(e.bundle, e.demi, e.rho, e.lact_table, lact, e.lip)
    failed = validate_equivalence(bad).failed()
    assert "EQ1" in failed and "LA2" in failed


def test_corrupted_left_inner_product_is_caught():
    e = fixture_self(line_bundle_z2()).expected
    lip = dict(e.lip)
    lip[(0, 1)] = 1j * lip[(0, 1)]
    bad = Equivalence(e.bundle, e.demi, e.rho, e.lact_table, e.lact, lip)
    assert "EQ3" in validate_equivalence(bad).failed()


def test_non_free_left_table_is_structural():
    e = fixture_self(line_bundle_z2()).expected
    table = e.lact_table.copy()
    table[1] = table[0]
    with pytest.raises(StructuralError):
        Equivalence(e.bundle, e.demi, e.rho, table, e.lact, e.lip)


def test_uniqueness_iso_of_an_equivalence_with_itself():
    e = build_imprimitivity_bundle(small_demi(2))
    iso = uniqueness_iso(e, e)
    assert iso.passed
    assert iso.is_identity()


def test_uniqueness_isos_compose_to_identity():
    m = small_demi(6)
    e1 = build_imprimitivity_bundle(m)
    e2 = build_imprimitivity_bundle(m, order=list(range(m.n_points))[::-1])
    f, g = uniqueness_iso(e1, e2), uniqueness_iso(e2, e1)
    assert f.passed and g.passed
    assert g.compose(f).is_identity(1e-7)
    assert f.compose(g).is_identity(1e-7)


@settings(max_examples=10)
@given(seeds)
def test_psi_two_routes(seed):
    m = small_demi(seed)
    H, A = m.base, m.action
    rng = np.random.default_rng(seed)
    for h in H.arrows:
        for a in range(m.n_points):
            for b in range(m.n_points):
                if A.sigma[a] != H.src[h] or A.sigma[b] != H.src[h]:
                    continue
                xi = k_element(m, a, b, rng.standard_normal(k_fibre(m, a, b).dim))
                one, two = psi_transport(m, h, xi), psi_characterized(m, h, xi)
                assert one.at == two.at
                assert np.allclose(one.op, two.op, atol=1e-7 * (1 + np.abs(one.op).max()))
                # round trip through h^-1
                back = psi_transport(m, H.inv[h], one)
                assert back.at == (a, b)
                assert np.allclose(back.op, xi.op, atol=1e-7 * (1 + np.abs(xi.op).max()))


@settings(max_examples=10)
@given(seeds)
def test_construction_is_valid(seed):
    m = small_demi(seed)
    e = build_imprimitivity_bundle(m)
    assert validate_fell_bundle(e.bundle, seed=seed).passed
    assert validate_equivalence(e).passed
    assert construction_properties_check(m, trials=1, seed=seed).passed


@settings(max_examples=8)
@given(seeds, st.randoms(use_true_random=False))
def test_representative_choice_does_not_matter(seed, rnd):
    m = small_demi(seed)
    order = list(range(m.n_points))
    rnd.shuffle(order)
    e1, e2 = build_imprimitivity_bundle(m), build_imprimitivity_bundle(m, order=order)
    iso = uniqueness_iso(e1, e2, strict=False)
    assert iso.passed, iso.report.to_text()
    assert sorted(e1.bundle.dims) == sorted(e2.bundle.dims)
