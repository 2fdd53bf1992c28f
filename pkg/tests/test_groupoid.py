import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fellbundles import groupoid as gpd
from fellbundles.report import StructuralError


def z2_bad_inverse():
    # Z/2 tables with inv(g) = e
    return gpd.FiniteGroupoid(1, [0, 0], [0, 0], [[0, 1], [1, 0]], [0, 0], [0])


def z4_mod_h():
    """Z/4 acted on by its subgroup {0, 2}; H-arrow j is the element 2j."""
    H = gpd.cyclic_group(2)
    table = [[(x + 2 * j) % 4 for j in range(2)] for x in range(4)]
    return H, gpd.PrincipalAction(H, [0] * 4, table)


def brute_reoq(H, a, x, y):
    return [h for h in H.arrows if a.act_table[x, h] == y]


CATALOGUE = [gpd.cyclic_group(1), gpd.cyclic_group(2), gpd.cyclic_group(5), gpd.klein_group(),
             gpd.symmetric_group_s3(), gpd.pair_groupoid(3),
             gpd.disjoint_union(gpd.cyclic_group(2), gpd.pair_groupoid(2)),
             gpd.transformation_groupoid(gpd.cyclic_group(4), [[(g + s) % 2 for s in range(2)] for g in range(4)])]


@pytest.mark.parametrize("G", CATALOGUE, ids=repr)
def test_catalogue_groupoids_are_valid(G):
    assert validate_passes(gpd.validate_groupoid(G))


def validate_passes(rep):
    return rep.passed and rep.failed() == []


def test_single_unit_and_z2_valid():
    assert gpd.validate_groupoid(gpd.cyclic_group(1)).passed
    assert gpd.validate_groupoid(gpd.cyclic_group(2)).passed


def test_bad_inverse_is_reported_with_witness():
    rep = gpd.validate_groupoid(z2_bad_inverse())
    assert not rep.passed
    assert "inverse" in rep.failed()
    assert any(1 in w.indices for w in rep["inverse"].witnesses)


def test_malformed_tables_are_structural():
    with pytest.raises(StructuralError):
        gpd.FiniteGroupoid(1, [0, 0], [0, 0], [[0, 1], [1, 5]], [0, 1], [0])
    with pytest.raises(StructuralError):
        gpd.FiniteGroupoid(1, [0, 2], [0, 0], [[0, 1], [1, 0]], [0, 1], [0])


def test_out_of_domain_composition_raises():
    G = gpd.pair_groupoid(2)
    g, h = 1, 1                       # (0,1) then (0,1): s = 1, r = 0
    with pytest.raises(StructuralError):
        G.comp(g, h)


def test_right_translation_is_principal():
    H = gpd.cyclic_group(2)
    assert gpd.validate_action(H, gpd.right_translation(H)).passed


def test_trivial_action_on_point():
    H = gpd.cyclic_group(1)
    assert gpd.validate_action(H, gpd.PrincipalAction(H, [0], [[0]])).passed


def test_non_free_action_names_the_pair():
    H = gpd.cyclic_group(2)
    rep = gpd.validate_action(H, gpd.PrincipalAction(H, [0], [[0, 0]]))
    assert "free" in rep.failed()
    assert rep["free"].witnesses[0].indices == (0, 1)


def test_x_equals_h_gives_h():
    H = gpd.cyclic_group(2)
    gq = gpd.imprimitivity_groupoid(H, gpd.right_translation(H))
    assert (gq.base.n_units, gq.base.n_arrows) == (1, 2)
    # [h1, h2] -> h1 h2^-1
    f = [H.comp(x, H.inv[y]) for x, y in gq.rep]
    assert gpd.groupoid_isomorphic(gq.base, H, f)
    assert gpd.leoq(gq, 0, 1) == gq.class_of(0, 1)
    assert f[gpd.leoq(gq, 0, 1)] == 1
    assert gpd.reoq(H, gq.action, 0, 1) == 1


def test_free_points_give_pair_groupoid():
    H = gpd.cyclic_group(1)
    a = gpd.PrincipalAction(H, [0, 0], [[0], [1]])
    gq = gpd.imprimitivity_groupoid(H, a)
    assert (gq.base.n_units, gq.base.n_arrows) == (2, 4)
    assert gpd.validate_groupoid(gq.base).passed


def test_z4_over_subgroup_has_eight_arrows():
    H, a = z4_mod_h()
    gq = gpd.imprimitivity_groupoid(H, a)
    assert (gq.base.n_units, gq.base.n_arrows) == (2, 8)
    # brute force: [1, 3] and [3, 1] are one orbit
    g = gpd.leoq(gq, 1, 3)
    assert g == gq.class_of(3, 1)
    assert gq.lact(g, 3) == 1


def test_reps_are_lex_least():
    H, a = z4_mod_h()
    gq = gpd.imprimitivity_groupoid(H, a)
    for g, rep in enumerate(gq.rep):
        members = [(x, y) for x in range(4) for y in range(4) if gq.class_of_table.get((x, y)) == g]
        assert tuple(rep) == min(members)
        assert gq.class_of(*rep) == g


def test_isomorphism_checker_rejects_collapse():
    G = gpd.cyclic_group(3)
    assert gpd.groupoid_isomorphic(G, G, [0, 1, 2])
    assert not gpd.groupoid_isomorphic(G, G, [0, 1, 1])
    assert not gpd.groupoid_isomorphic(G, G, [0, 1, 1][:2])


def test_leoq_anchor_mismatch():
    G = gpd.disjoint_union(gpd.cyclic_group(1), gpd.cyclic_group(1))
    a = gpd.right_translation(G)
    gq = gpd.imprimitivity_groupoid(G, a)
    with pytest.raises(StructuralError):
        gpd.leoq(gq, 0, 1)


# -- property tests -------------------------------------------------------------------------

@st.composite
def free_actions(draw):
    """Copies of r^{-1}(u) in a catalogue groupoid, with shuffled point labels."""
    G = draw(st.sampled_from(CATALOGUE[:7]))
    units = draw(st.lists(st.integers(0, G.n_units - 1), min_size=1, max_size=3))
    units = sorted(set(units) | set(G.units)) if draw(st.booleans()) else list(G.units) + units
    points = [(c, h) for c, u in enumerate(units) for h in G.arrows if G.rng[h] == u]
    perm = draw(st.permutations(range(len(points))))
    points = [points[i] for i in perm]
    index = {p: i for i, p in enumerate(points)}
    sigma = [int(G.src[h]) for _, h in points]
    table = [[index[(c, G.comp(h, k))] if G.src[h] == G.rng[k] else -1 for k in G.arrows]
             for c, h in points]
    return G, gpd.PrincipalAction(G, sigma, table)


@given(free_actions())
def test_action_and_quotient_axioms(data):
    G, a = data
    assert gpd.validate_action(G, a).passed
    gq = gpd.imprimitivity_groupoid(G, a)
    assert gpd.validate_groupoid(gq.base).passed
    n = a.n_points
    for x, y in itertools.product(range(n), repeat=2):
        hs = brute_reoq(G, a, x, y)
        if hs:
            assert gpd.reoq(G, a, x, y) == hs[0] and len(hs) == 1
    # leoq(x, y) . z = x . reoq(y, z)
    for x, y, z in itertools.product(range(n), repeat=3):
        if a.sigma[x] == a.sigma[y] and brute_reoq(G, a, y, z):
            g = gpd.leoq(gq, x, y)
            assert gq.lact(g, z) == a.act(x, gpd.reoq(G, a, y, z))
            assert g == gq.class_of(x, y)


@given(free_actions(), st.randoms(use_true_random=False))
def test_leoq_translation_identity(data, rnd):
    G, a = data
    gq = gpd.imprimitivity_groupoid(G, a)
    n = a.n_points
    for _ in range(10):
        x, y = rnd.randrange(n), rnd.randrange(n)
        for h in G.arrows:
            if a.sigma[x] != G.rng[h] or a.sigma[y] != G.src[h]:
                continue
            # leoq(x, y . h^-1) = leoq(x . h, y)
            assert gpd.leoq(gq, x, a.act(y, G.inv[h])) == gpd.leoq(gq, a.act(x, h), y)
        for h in G.arrows:
            if a.sigma[x] == G.rng[h]:
                assert gpd.reoq(G, a, x, a.act(x, h)) == h


@given(free_actions(), st.randoms(use_true_random=False))
def test_representative_order_gives_isomorphic_quotients(data, rnd):
    G, a = data
    order = list(range(a.n_points))
    rnd.shuffle(order)
    g1 = gpd.imprimitivity_groupoid(G, a)
    g2 = gpd.imprimitivity_groupoid(G, a, order)
    f = [g2.class_of(*g1.rep[g]) for g in g1.base.arrows]
    assert gpd.groupoid_isomorphic(g1.base, g2.base, f)
    for g, (x, y) in enumerate(g2.rep):
        members = [p for p, c in g2.class_of_table.items() if c == g]
        assert (g2.rank[x], g2.rank[y]) == min((g2.rank[p], g2.rank[q]) for p, q in members)
