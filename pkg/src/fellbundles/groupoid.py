"""Finite groupoids, free right actions, and the imprimitivity groupoid X *_H X^op.

Everything is integer indexed.  Partial maps are stored as dense tables with
-1 marking "undefined"; looking up an undefined entry raises StructuralError.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .report import StructuralError, ValidationReport


class FiniteGroupoid:
    """A finite groupoid given by its structure tables.

    Arrows are 0..n_arrows-1 and units 0..n_units-1.  ``comp_table[g, h]`` is
    the product gh (defined iff src[g] == rng[h]) or -1.
    """

    def __init__(self, n_units, src, rng, comp_table, inv, unit_embed, labels=None):
        self.n_units = int(n_units)
        self.src = np.asarray(src, dtype=int)
        self.rng = np.asarray(rng, dtype=int)
        self.comp_table = np.asarray(comp_table, dtype=int)
        self.inv = np.asarray(inv, dtype=int)
        self.unit_embed = np.asarray(unit_embed, dtype=int)
        self.labels = list(labels) if labels is not None else None
        n = len(self.src)
        for name, arr, bound in [("src", self.src, self.n_units), ("rng", self.rng, self.n_units),
                                 ("inv", self.inv, n), ("unit_embed", self.unit_embed, n)]:
            if arr.ndim != 1 or (arr.size and (arr.min() < 0 or arr.max() >= bound)):
                raise StructuralError(f"{name} table out of range")
        if len(self.rng) != n or len(self.inv) != n or len(self.unit_embed) != self.n_units:
            raise StructuralError("table lengths disagree")
        if self.comp_table.shape != (n, n):
            raise StructuralError("composition table must be n_arrows x n_arrows")
        if self.comp_table.size and (self.comp_table.min() < -1 or self.comp_table.max() >= n):
            raise StructuralError("composition table out of range")
        for a in (self.src, self.rng, self.comp_table, self.inv, self.unit_embed):
            a.setflags(write=False)

    @property
    def n_arrows(self):
        return len(self.src)

    @property
    def arrows(self):
        return range(self.n_arrows)

    @property
    def units(self):
        return range(self.n_units)

    def composable(self, g, h):
        return self.src[g] == self.rng[h]

    def comp(self, g, h):
        if self.src[g] != self.rng[h]:
            raise StructuralError(f"arrows {g} and {h} are not composable")
        r = self.comp_table[g, h]
        if r < 0:
            raise StructuralError(f"composition of {g} and {h} missing from table")
        return int(r)

    def composable_pairs(self):
        return [(g, h) for g in self.arrows for h in self.arrows if self.src[g] == self.rng[h]]

    def is_unit(self, g):
        return self.unit_embed[self.src[g]] == g

    def unit_arrow(self, u):
        return int(self.unit_embed[u])

    def arrows_from(self, u):
        """Arrows with source u."""
        return [g for g in self.arrows if self.src[g] == u]

    def arrows_to(self, u):
        """Arrows with range u."""
        return [g for g in self.arrows if self.rng[g] == u]

    def label(self, g):
        return self.labels[g] if self.labels else str(g)

    def __repr__(self):
        return f"FiniteGroupoid(units={self.n_units}, arrows={self.n_arrows})"

    # -- constructors --------------------------------------------------------

    @classmethod
    def from_composition(cls, n_units, src, rng, mul, labels=None):
        """Build tables from a product function mul(g, h) on composable pairs."""
        n = len(src)
        table = -np.ones((n, n), dtype=int)
        for g, h in product(range(n), repeat=2):
            if src[g] == rng[h]:
                table[g, h] = mul(g, h)
        unit_embed = []
        for u in range(n_units):
            ids = [g for g in range(n) if src[g] == u and rng[g] == u
                   and all(table[g, h] == h for h in range(n) if rng[h] == u)]
            if len(ids) != 1:
                raise StructuralError(f"no unique identity at unit {u}")
            unit_embed.append(ids[0])
        inv = []
        for g in range(n):
            cands = [h for h in range(n) if src[h] == rng[g] and rng[h] == src[g]
                     and table[h, g] == unit_embed[src[g]]]
            if len(cands) != 1:
                raise StructuralError(f"no unique inverse for arrow {g}")
            inv.append(cands[0])
        return cls(n_units, src, rng, table, inv, unit_embed, labels)


def group_from_table(table, labels=None):
    """One-object groupoid from a Cayley table (table[a][b] = ab)."""
    table = np.asarray(table, dtype=int)
    n = len(table)
    return FiniteGroupoid.from_composition(1, [0] * n, [0] * n, lambda g, h: table[g, h], labels)


def cyclic_group(n):
    return group_from_table([[(a + b) % n for b in range(n)] for a in range(n)],
                            labels=[str(a) for a in range(n)])


def klein_group():
    return group_from_table([[a ^ b for b in range(4)] for a in range(4)],
                            labels=["e", "a", "b", "ab"])


def symmetric_group_s3():
    perms = [(0, 1, 2), (1, 2, 0), (2, 0, 1), (1, 0, 2), (0, 2, 1), (2, 1, 0)]
    index = {p: i for i, p in enumerate(perms)}
    # (p q)(i) = p(q(i))
    table = [[index[tuple(p[q[i]] for i in range(3))] for q in perms] for p in perms]
    return group_from_table(table, labels=["".join(map(str, p)) for p in perms])


def pair_groupoid(n):
    """All pairs (i, j) as arrows j -> i; arrow index i*n + j."""
    src = [j for i in range(n) for j in range(n)]
    rng = [i for i in range(n) for j in range(n)]
    labels = [f"({i},{j})" for i in range(n) for j in range(n)]
    return FiniteGroupoid.from_composition(n, src, rng,
                                           lambda g, h: rng[g] * n + src[h], labels)


def transformation_groupoid(group: FiniteGroupoid, perm):
    """Gamma ⋉ S for a left action given as perm[gamma][s] = gamma.s.

    Arrow (gamma, s) has index gamma*|S| + s, source s and range gamma.s.
    """
    perm = np.asarray(perm, dtype=int)
    k, n = perm.shape
    if k != group.n_arrows or group.n_units != 1:
        raise StructuralError("transformation groupoid needs a group and one permutation per element")
    src = [s for g in range(k) for s in range(n)]
    rng = [int(perm[g, s]) for g in range(k) for s in range(n)]

    def mul(a, b):
        ga, gb = divmod(a, n)[0], divmod(b, n)[0]
        return group.comp(ga, gb) * n + b % n

    labels = [f"({group.label(g)},{s})" for g in range(k) for s in range(n)]
    return FiniteGroupoid.from_composition(n, src, rng, mul, labels)


def disjoint_union(*gs: FiniteGroupoid):
    src, rng, labels = [], [], []
    unit_off, arrow_off, offs = 0, 0, []
    for g in gs:
        offs.append(arrow_off)
        src += [int(s) + unit_off for s in g.src]
        rng += [int(r) + unit_off for r in g.rng]
        labels += [f"{len(offs) - 1}:{g.label(a)}" for a in g.arrows]
        unit_off += g.n_units
        arrow_off += g.n_arrows
    n = arrow_off
    table = -np.ones((n, n), dtype=int)
    inv = np.zeros(n, dtype=int)
    unit_embed = []
    for g, off in zip(gs, offs):
        sub = g.comp_table
        block = np.where(sub >= 0, sub + off, -1)
        table[off:off + g.n_arrows, off:off + g.n_arrows] = block
        inv[off:off + g.n_arrows] = g.inv + off
        unit_embed += [int(e) + off for e in g.unit_embed]
    return FiniteGroupoid(unit_off, src, rng, table, inv, unit_embed, labels)


# -- validation --------------------------------------------------------------

def validate_groupoid(g: FiniteGroupoid) -> ValidationReport:
    """Exhaustive scan of the groupoid axioms, with witness arrows."""
    rep = ValidationReport("groupoid")
    n = g.n_arrows
    for a, b in product(range(n), repeat=2):
        defined = g.comp_table[a, b] >= 0
        rep.check("domain", defined == (g.src[a] == g.rng[b]), (a, b))
        if defined and g.src[a] == g.rng[b]:
            ab = g.comp_table[a, b]
            rep.check("src/rng", g.rng[ab] == g.rng[a] and g.src[ab] == g.src[b], (a, b))
    for a, b, c in product(range(n), repeat=3):
        if g.src[a] == g.rng[b] and g.src[b] == g.rng[c]:
            ab, bc = g.comp_table[a, b], g.comp_table[b, c]
            if ab >= 0 and bc >= 0 and g.comp_table[ab, c] >= 0 and g.comp_table[a, bc] >= 0:
                rep.check("assoc", g.comp_table[ab, c] == g.comp_table[a, bc], (a, b, c))
    for u in g.units:
        e = g.unit_embed[u]
        rep.check("unit", g.src[e] == u and g.rng[e] == u, (u,))
        for a in range(n):
            if g.rng[a] == u:
                rep.check("unit", g.comp_table[e, a] == a, (u, a))
            if g.src[a] == u:
                rep.check("unit", g.comp_table[a, e] == a, (u, a))
    for a in range(n):
        i = g.inv[a]
        ok = (g.src[i] == g.rng[a] and g.rng[i] == g.src[a]
              and g.comp_table[i, a] == g.unit_embed[g.src[a]]
              and g.comp_table[a, i] == g.unit_embed[g.rng[a]]
              and g.inv[i] == a)
        rep.check("inverse", ok, (a,))
    return rep


class PrincipalAction:
    """A right action of a finite groupoid on X = {0..n_points-1} along sigma.

    ``act_table[x, h]`` is x.h, defined iff sigma[x] == rng[h], else -1.
    """

    def __init__(self, groupoid: FiniteGroupoid, sigma, act_table):
        self.groupoid = groupoid
        self.sigma = np.asarray(sigma, dtype=int)
        self.act_table = np.asarray(act_table, dtype=int)
        n = len(self.sigma)
        if self.act_table.shape != (n, groupoid.n_arrows):
            raise StructuralError("action table must be n_points x n_arrows")
        if n and (self.sigma.min() < 0 or self.sigma.max() >= groupoid.n_units):
            raise StructuralError("anchor out of range")
        if self.act_table.size and (self.act_table.min() < -1 or self.act_table.max() >= n):
            raise StructuralError("action table out of range")
        self.sigma.setflags(write=False)
        self.act_table.setflags(write=False)
        self._reoq = None

    @property
    def n_points(self):
        return len(self.sigma)

    @property
    def points(self):
        return range(self.n_points)

    def act(self, x, h):
        if self.sigma[x] != self.groupoid.rng[h]:
            raise StructuralError(f"point {x} cannot be acted on by arrow {h}")
        y = self.act_table[x, h]
        if y < 0:
            raise StructuralError(f"action of {h} on {x} missing from table")
        return int(y)

    def reoq(self, x, y):
        """The unique h with x.h = y."""
        if self._reoq is None:
            table = {}
            for x0 in self.points:
                for h in self.groupoid.arrows:
                    if self.act_table[x0, h] >= 0:
                        table[(x0, int(self.act_table[x0, h]))] = h
            self._reoq = table
        try:
            return self._reoq[(x, y)]
        except KeyError:
            raise StructuralError(f"points {x} and {y} lie in different orbits") from None

    def orbits(self):
        """H-orbits as sorted lists, ordered by their least point."""
        seen, out = set(), []
        for x in self.points:
            if x in seen:
                continue
            orb = sorted({int(self.act_table[x, h]) for h in self.groupoid.arrows
                          if self.act_table[x, h] >= 0})
            seen.update(orb)
            out.append(orb)
        return out

    def relabel(self, perm):
        """Action on new labels: new point i is old point perm[i]."""
        perm = np.asarray(perm, dtype=int)
        inv = np.argsort(perm)
        table = np.where(self.act_table[perm] >= 0, inv[np.maximum(self.act_table[perm], 0)], -1)
        return PrincipalAction(self.groupoid, self.sigma[perm], table)


def right_translation(g: FiniteGroupoid) -> PrincipalAction:
    """H acting on itself: x.h = xh with anchor the source map."""
    n = g.n_arrows
    table = np.where(g.src[:, None] == g.rng[None, :], g.comp_table, -1)
    return PrincipalAction(g, g.src.copy(), table)


def reoq(g: FiniteGroupoid, a: PrincipalAction, x, y):
    """Unique arrow h of g with a.act(x, h) = y."""
    if a.groupoid is not g:
        raise StructuralError("action is over a different groupoid")
    return a.reoq(x, y)


def validate_action(g: FiniteGroupoid, a: PrincipalAction) -> ValidationReport:
    rep = ValidationReport("action")
    rep.touch("proper", "automatic for finite discrete actions")
    for x in a.points:
        for h in g.arrows:
            defined = a.act_table[x, h] >= 0
            rep.check("domain", defined == (a.sigma[x] == g.rng[h]), (x, h))
            if not (defined and a.sigma[x] == g.rng[h]):
                continue
            y = a.act_table[x, h]
            rep.check("anchor", a.sigma[y] == g.src[h], (x, h))
            rep.check("free", y != x or h == g.unit_embed[a.sigma[x]], (x, h))
            for k in g.arrows:
                if g.src[h] == g.rng[k] and a.act_table[y, k] >= 0:
                    rep.check("compat", a.act_table[y, k] == a.act_table[x, g.comp_table[h, k]], (x, h, k))
        e = g.unit_embed[a.sigma[x]]
        rep.check("unit", a.act_table[x, e] == x, (x,))
    hit = set(int(s) for s in a.sigma)
    for u in g.units:
        rep.check("surjective", u in hit, (u,))
    return rep


class ImprimitivityGroupoid:
    """G = X *_H X^op with chosen representatives and the left action on X.

    Arrows are orbits of pairs (x, y) with sigma(x) = sigma(y) under
    (x, y) -> (x.h, y.h).  ``rep[g]`` is the least pair in the orbit under the
    point order ``order`` (default: the input order of X).
    """

    def __init__(self, action: PrincipalAction, order=None):
        H = action.groupoid
        self.action = action
        n = action.n_points
        order = list(range(n)) if order is None else [int(o) for o in order]
        if sorted(order) != list(range(n)):
            raise StructuralError("order must be a permutation of the points")
        self.order = order
        rank = np.empty(n, dtype=int)
        rank[order] = np.arange(n)
        self.rank = rank

        # H-orbits of X become the units, ordered by least point
        orbit_of = -np.ones(n, dtype=int)
        orbits = []
        for x in sorted(range(n), key=lambda p: rank[p]):
            if orbit_of[x] >= 0:
                continue
            orb = sorted({int(action.act_table[x, h]) for h in H.arrows
                          if action.act_table[x, h] >= 0}, key=lambda p: rank[p])
            for p in orb:
                orbit_of[p] = len(orbits)
            orbits.append(orb)
        self.orbit_of = orbit_of
        self.orbits = orbits

        # orbits of pairs
        class_of = {}
        reps = []
        pairs = [(x, y) for x in range(n) for y in range(n) if action.sigma[x] == action.sigma[y]]
        pairs.sort(key=lambda p: (rank[p[0]], rank[p[1]]))
        for x, y in pairs:
            if (x, y) in class_of:
                continue
            idx = len(reps)
            reps.append((x, y))
            for h in H.arrows:
                if action.act_table[x, h] >= 0:
                    class_of[(int(action.act_table[x, h]), int(action.act_table[y, h]))] = idx
        self.rep = reps
        self.class_of_table = class_of

        src = [orbit_of[y] for _, y in reps]
        rng = [orbit_of[x] for x, _ in reps]

        def mul(g1, g2):
            x, y = reps[g1]
            y2, z = reps[g2]
            h = action.reoq(y, y2)           # y.h = y2
            return class_of[(x, action.act(z, H.inv[h]))]

        labels = [f"[{x},{y}]" for x, y in reps]
        self.base = FiniteGroupoid.from_composition(len(orbits), src, rng, mul, labels)

    def class_of(self, x, y):
        try:
            return self.class_of_table[(x, y)]
        except KeyError:
            raise StructuralError(f"points {x} and {y} have different anchors") from None

    def rho(self, x):
        """Anchor of the left action: the unit [x, x]."""
        return int(self.orbit_of[x])

    def lact(self, g, y):
        """Left action g . y: the unique x with [x, y] = g."""
        H = self.action.groupoid
        x, y0 = self.rep[g]
        if self.orbit_of[y] != self.orbit_of[y0]:
            raise StructuralError(f"arrow {g} cannot act on point {y}")
        h = self.action.reoq(y, y0)           # y.h = y0, so (x, y0) ~ (x.h^{-1}, y)
        return self.action.act(x, H.inv[h])

    def alignment(self, g, x, y):
        """The unique h with (x.h, y.h) = rep(g), for (x, y) in the class g."""
        rx, ry = self.rep[g]
        h = self.action.reoq(x, rx)
        if self.action.act(y, h) != ry:
            raise StructuralError(f"pair ({x},{y}) is not in class {g}")
        return h


def imprimitivity_groupoid(g: FiniteGroupoid, a: PrincipalAction, order=None) -> ImprimitivityGroupoid:
    rep = validate_groupoid(g).merge(validate_action(g, a))
    if not rep.passed:
        raise StructuralError(f"invalid groupoid/action: {rep.failed()}")
    return ImprimitivityGroupoid(a, order)


def leoq(gq: ImprimitivityGroupoid, x, y):
    """The unique arrow g of G with g . y = x."""
    if gq.action.sigma[x] != gq.action.sigma[y]:
        raise StructuralError(f"anchor mismatch between {x} and {y}")
    return gq.class_of(x, y)


def groupoid_isomorphic(g1: FiniteGroupoid, g2: FiniteGroupoid, candidate) -> bool:
    """True iff ``candidate`` (arrow map) is a bijection preserving all structure."""
    f = np.asarray(candidate, dtype=int)
    if f.shape != (g1.n_arrows,) or g1.n_arrows != g2.n_arrows or g1.n_units != g2.n_units:
        return False
    if f.min(initial=0) < 0 or f.max(initial=-1) >= g2.n_arrows or len(set(f.tolist())) != len(f):
        return False
    # induced unit map
    umap = {}
    for u in g1.units:
        umap[u] = g2.src[f[g1.unit_embed[u]]]
        if not g2.is_unit(f[g1.unit_embed[u]]):
            return False
    for a in g1.arrows:
        if g2.src[f[a]] != umap[g1.src[a]] or g2.rng[f[a]] != umap[g1.rng[a]]:
            return False
        if f[g1.inv[a]] != g2.inv[f[a]]:
            return False
    for a, b in g1.composable_pairs():
        if f[g1.comp_table[a, b]] != g2.comp_table[f[a], f[b]]:
            return False
    return True
