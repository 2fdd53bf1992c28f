"""Demi-equivalences: a right Fell-bundle action on a bundle M over a principal space.

Tensors (all in fibre coordinates):

* ``ract[(x, h)]``  shape (d_x, n_h, d_{x.h}):   e_i ◁ f_b
* ``rip[(x1, x2)]`` shape (d_x1, d_x2, n_k), k = reoq(x1, x2): <e_i, e_j>

Inner products are stored only for x1 <= x2 (point index); the other
orientation is derived from <m1, m2>* = <m2, m1>.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import groupoid as gpd
from .cstar import DEFAULT_TOL, inflate
from .fellbundle import FellBundle, fibre_norm, matrix_rank
from .hilbmod import HilbertModule, validate_module
from .report import StructuralError, ValidationReport


class DemiEquivalence:
    def __init__(self, bundle: FellBundle, action: gpd.PrincipalAction, dims, ract, rip):
        if action.groupoid is not bundle.base:
            if action.groupoid.n_arrows != bundle.base.n_arrows:
                raise StructuralError("action and bundle live over different groupoids")
        self.bundle = bundle
        self.action = action
        self.dims = [int(d) for d in dims]
        self.ract = {tuple(map(int, k)): np.asarray(v, dtype=complex) for k, v in ract.items()}
        self.rip = {tuple(map(int, k)): np.asarray(v, dtype=complex) for k, v in rip.items()}
        if len(self.dims) != action.n_points:
            raise StructuralError("one fibre dimension per point is required")
        self._check_shapes()
        self._rip_cache = {}

    @property
    def base(self):
        return self.bundle.base

    @property
    def n_points(self):
        return self.action.n_points

    def _check_shapes(self):
        H, A, fb = self.base, self.action, self.bundle
        for (x, h), T in self.ract.items():
            if not (0 <= x < A.n_points and 0 <= h < H.n_arrows):
                raise StructuralError(f"action key ({x},{h}) out of range")
            if A.sigma[x] == H.rng[h]:
                want = (self.dims[x], fb.dims[h], self.dims[A.act(x, h)])
                if T.shape != want:
                    raise StructuralError(f"action tensor ({x},{h}) has shape {T.shape}, expected {want}")
        for (x1, x2), T in self.rip.items():
            if not (0 <= x1 < A.n_points and 0 <= x2 < A.n_points):
                raise StructuralError(f"inner-product key ({x1},{x2}) out of range")
            try:
                k = A.reoq(x1, x2)
            except StructuralError:
                continue
            want = (self.dims[x1], self.dims[x2], fb.dims[k])
            if T.shape != want:
                raise StructuralError(f"inner-product tensor ({x1},{x2}) has shape {T.shape}, expected {want}")

    # -- evaluation ----------------------------------------------------------

    def same_orbit(self, x1, x2):
        try:
            self.action.reoq(x1, x2)
            return True
        except StructuralError:
            return False

    def rip_full(self, x1, x2):
        """Inner-product tensor for any ordered pair in one orbit."""
        key = (x1, x2)
        if key in self._rip_cache:
            return self._rip_cache[key]
        if x1 <= x2:
            T = self.rip[key]
        else:
            k = self.action.reoq(x2, x1)
            # <e_i^{x1}, e_j^{x2}> = <e_j^{x2}, e_i^{x1}>^*
            T = np.einsum("jia,ab->ijb", np.conj(self.rip[(x2, x1)]), self.bundle.invol[k])
        self._rip_cache[key] = T
        return T

    def act(self, x, h, m, b):
        return np.einsum("i,b,ibj->j", m, b, self.ract[(x, h)])

    def inner(self, x1, x2, m1, m2):
        return np.einsum("i,j,ijb->b", np.conj(m1), m2, self.rip_full(x1, x2))

    def norm(self, x, m):
        u = self.action.sigma[x]
        return float(np.sqrt(self.bundle.algebra(u).norm(self.inner(x, x, m, m))))

    def random(self, x, rng):
        d = self.dims[x]
        return rng.standard_normal(d) + 1j * rng.standard_normal(d)

    def module(self, x) -> HilbertModule:
        """M(x) as a right Hilbert module over B(sigma(x))."""
        u = int(self.action.sigma[x])
        e = self.base.unit_arrow(u)
        return HilbertModule(self.bundle.algebra(u), self.ract[(x, e)], self.rip_full(x, x))

    @cached_property
    def modules(self):
        return [self.module(x) for x in range(self.n_points)]

    def relabel(self, perm):
        """Same data with new point i = old point perm[i]."""
        perm = [int(p) for p in perm]
        inv = np.argsort(perm)
        action = self.action.relabel(perm)
        dims = [self.dims[p] for p in perm]
        ract = {(int(inv[x]), h): T for (x, h), T in self.ract.items()}
        rip = {}
        for a in range(self.n_points):
            for b in range(a, self.n_points):
                if self.same_orbit(perm[a], perm[b]):
                    rip[(a, b)] = self.rip_full(perm[a], perm[b])
        return DemiEquivalence(self.bundle, action, dims, ract, rip)

    def __repr__(self):
        return f"DemiEquivalence(points={self.n_points}, dims={self.dims})"


# -- validation ---------------------------------------------------------------

def _pairs_same_orbit(m: DemiEquivalence):
    return [(x1, x2) for x1 in range(m.n_points) for x2 in range(m.n_points) if m.same_orbit(x1, x2)]


def validate_demi(m: DemiEquivalence, tol: float = DEFAULT_TOL) -> ValidationReport:
    """DE1-DE8 on all basis tuples; positivity checked exactly through Gram matrices."""
    rep = ValidationReport("demi-equivalence", tol)
    H, A, fb = m.base, m.action, m.bundle
    # DE1: the action is defined exactly over sigma(x) = r(h) and lands in M(x.h)
    for x in range(m.n_points):
        for h in H.arrows:
            if A.sigma[x] == H.rng[h]:
                rep.check("DE1", (x, h) in m.ract, (x, h))
            else:
                rep.check("DE1", (x, h) not in m.ract, (x, h))
    # DE2: inner products exactly for pairs in one orbit, valued in B(reoq)
    for x1 in range(m.n_points):
        for x2 in range(x1, m.n_points):
            rep.check("DE2", ((x1, x2) in m.rip) == m.same_orbit(x1, x2), (x1, x2))
    rep.touch("DE3", "continuity trivial in the finite discrete model; sesquilinear by tensor form")
    # DE4: <m1, m2 ◁ b> = <m1, m2> b
    for x1, x2 in _pairs_same_orbit(m):
        k = A.reoq(x1, x2)
        T = m.rip_full(x1, x2)
        for h in H.arrows_to(A.sigma[x2]):
            x3 = A.act(x2, h)
            lhs = np.einsum("jbl,ilc->ijbc", m.ract[(x2, h)], m.rip_full(x1, x3))
            rhs = np.einsum("ija,abc->ijbc", T, fb.mult[(k, h)])
            s = 1 + np.abs(rhs).max(initial=0) + np.abs(lhs).max(initial=0)
            rep.record("DE4", np.abs(lhs - rhs).max(initial=0) / s, (x1, x2, h))
    # DE5: only the diagonal is not symmetric by construction
    for x in range(m.n_points):
        T = m.rip[(x, x)]
        e = H.unit_arrow(A.sigma[x])
        adj = np.einsum("jia,ab->ijb", np.conj(T), fb.invol[e])
        rep.record("DE5", np.abs(adj - T).max(initial=0) / (1 + np.abs(T).max(initial=0)), (x, x))
    # DE6: positivity via the Gram matrix in M_d(B(sigma(x))), definiteness via the trace form
    for x in range(m.n_points):
        alg = fb.algebra(A.sigma[x])
        T = m.rip_full(x, x)
        mats = inflate(T, alg)
        lo = min(np.linalg.eigvalsh((q + q.conj().T) / 2)[0] for q in mats)
        hi = max(np.linalg.norm(q, 2) for q in mats)
        rep.record("DE6", max(0.0, -lo) / (1 + hi), (x,))
        P = T @ alg.trace(np.eye(alg.dim))
        w = np.linalg.eigvalsh((P + P.conj().T) / 2)
        rep.check("DE6", m.dims[x] == 0 or w[0] > 1e-10 * max(1.0, w[-1]), (x, "definite"))
    rep.touch("DE7", "module norm defined as ||<m,m>||^(1/2)")
    # DE8: fibrewise full
    for x in range(m.n_points):
        alg = fb.algebra(A.sigma[x])
        r = matrix_rank(m.rip_full(x, x).reshape(-1, alg.dim))
        rep.check("DE8", r == alg.dim, (x,))
    return rep


def derived_properties_check(m: DemiEquivalence, trials: int = 20, tol: float = DEFAULT_TOL,
                             seed: int = 0) -> ValidationReport:
    """DE9-DE16.  Algebraic items on all basis tuples, norm inequalities on
    basis vectors plus ``trials`` random draws."""
    rep = ValidationReport("derived properties", tol)
    H, A, fb = m.base, m.action, m.bundle
    rng = np.random.default_rng(seed)
    # DE9: each fibre is a full Hilbert module
    for x in range(m.n_points):
        sub = validate_module(m.module(x), tol)
        for label, st in sub.axioms.items():
            rep.record("DE9", st.max_residual if st.passed else max(st.max_residual, 1.0), (x, label))
    # DE10: <m1 ◁ b*, m2> = b <m1, m2>
    for x1, x2 in _pairs_same_orbit(m):
        k = A.reoq(x1, x2)
        T = m.rip_full(x1, x2)
        for h in H.arrows_from(A.sigma[x1]):
            hi = H.inv[h]
            y = A.act(x1, hi)
            v = np.einsum("bq,iql->ibl", fb.invol[h], m.ract[(x1, hi)])   # e_i ◁ f_b^*
            lhs = np.einsum("ibl,ljc->ibjc", np.conj(v), m.rip_full(y, x2))
            rhs = np.einsum("bac,ija->ibjc", fb.mult[(h, k)], T)
            s = 1 + np.abs(rhs).max(initial=0) + np.abs(lhs).max(initial=0)
            rep.record("DE10", np.abs(lhs - rhs).max(initial=0) / s, (x1, x2, h))
    # DE11: r(<m1,m2>) = sigma(m1), s(<m1,m2>) = sigma(m2)
    for x1, x2 in _pairs_same_orbit(m):
        k = A.reoq(x1, x2)
        rep.check("DE11", H.rng[k] == A.sigma[x1] and H.src[k] == A.sigma[x2], (x1, x2))
    # DE12: Cauchy-Schwarz as an inequality of algebra elements
    pairs = _pairs_same_orbit(m)
    for t in range(trials):
        x1, x2 = pairs[rng.integers(len(pairs))]
        m1, m2 = m.random(x1, rng), m.random(x2, rng)
        alg = fb.algebra(A.sigma[x1])
        k = A.reoq(x1, x2)
        a = m.inner(x1, x2, m1, m2)
        aa = fb.multiply(k, H.inv[k], a, fb.star(k, a))
        d = m.norm(x2, m2) ** 2 * m.inner(x1, x1, m1, m1) - aa
        lo = alg.min_eig(d)
        herm = alg.norm(d - alg.star(d))
        rep.record("DE12", max(0.0, -lo, herm) / (1 + alg.norm(aa)), (x1, x2, t))
    rep.touch("DE13", "bilinear by tensor form")
    # DE14: (m ◁ b) ◁ b' = m ◁ (b b')
    for x in range(m.n_points):
        for h in H.arrows_to(A.sigma[x]):
            y = A.act(x, h)
            for k in H.arrows_to(H.src[h]):
                lhs = np.einsum("ibj,jck->ibck", m.ract[(x, h)], m.ract[(y, k)])
                rhs = np.einsum("bcp,ipk->ibck", fb.mult[(h, k)], m.ract[(x, H.comp(h, k))])
                s = 1 + np.abs(rhs).max(initial=0) + np.abs(lhs).max(initial=0)
                rep.record("DE14", np.abs(lhs - rhs).max(initial=0) / s, (x, h, k))
    # DE15: ||m ◁ b|| <= ||m|| ||b||
    for x in range(m.n_points):
        for h in H.arrows_to(A.sigma[x]):
            y = A.act(x, h)
            draws = [(np.eye(m.dims[x])[i], np.eye(fb.dims[h])[j])
                     for i in range(m.dims[x]) for j in range(fb.dims[h])]
            draws += [(m.random(x, rng), fb.random(h, rng)) for _ in range(max(1, trials // 10))]
            for t, (v, b) in enumerate(draws):
                lhs = m.norm(y, m.act(x, h, v, b))
                rhs = m.norm(x, v) * fibre_norm(fb, h, b)
                rep.record("DE15", max(0.0, lhs - rhs) / (1 + rhs), (x, h, t))
    rep.touch("DE16", "continuity trivial in the finite discrete model")
    # M(x.h) is spanned by M(x) ◁ B(h)
    for (x, h), T in m.ract.items():
        y = A.act(x, h)
        rep.check("MSAT", matrix_rank(T.reshape(-1, m.dims[y])) == m.dims[y], (x, h))
    return rep


# -- generators ------------------------------------------------------------------

def amplified_demi(fb: FellBundle, units, projections=None, order=None, scramble=None):
    """M over X = ⊔_i r^{-1}(units[i]) with M(h) = p_i B(h)^{n_i}.

    ``projections[i]`` is a projection in M_{n_i}(B(u_i)) given as an array
    (n_i, n_i, dim B(u_i)); None means the identity of M_1.  Points are the
    pairs (i, h), listed in ``order`` (default: by i, then arrow index).
    ``scramble[p]`` optionally re-bases the fibre at point p.
    """
    H = fb.base
    units = [int(u) for u in units]
    projections = projections or [None] * len(units)
    points = [(i, h) for i, u in enumerate(units) for h in H.arrows if H.rng[h] == u]
    if order is not None:
        points = [points[j] for j in order]
    index = {p: j for j, p in enumerate(points)}

    # fibre bases V[p]: columns in B(h)^n coordinates (k, beta) -> k * n_h + beta
    V, ns = [], []
    for (i, h) in points:
        u = units[i]
        p = projections[i]
        n = 1 if p is None else p.shape[0]
        ns.append(n)
        nh = fb.dims[h]
        if p is None:
            Vp = np.eye(nh, dtype=complex)
        else:
            ue = H.unit_arrow(u)
            # (p v)_k = sum_l p_kl v_l
            P = np.einsum("kla,abc->kclb", p, fb.mult[(ue, h)]).reshape(n * nh, n * nh)
            Vp = _range_basis(P)
        V.append(Vp)
    if scramble is not None:
        V = [v @ s for v, s in zip(V, scramble)]
    Vinv = [np.linalg.pinv(v) for v in V]
    dims = [v.shape[1] for v in V]
    sigma = [int(H.src[h]) for (_, h) in points]
    act_table = -np.ones((len(points), H.n_arrows), dtype=int)
    for j, (i, h) in enumerate(points):
        for k in H.arrows_to(H.src[h]):
            act_table[j, k] = index[(i, H.comp(h, k))]
    action = gpd.PrincipalAction(H, sigma, act_table)

    ract = {}
    for j, (i, h) in enumerate(points):
        n, nh = ns[j], fb.dims[h]
        for k in H.arrows_to(H.src[h]):
            hk = H.comp(h, k)
            t = index[(i, hk)]
            # (v ◁ b)_l = v_l b, in coordinates (l, beta) x gamma -> (l, delta)
            big = np.einsum("lm,bgd->lbgmd", np.eye(n), fb.mult[(h, k)]).reshape(n * nh, fb.dims[k], n * fb.dims[hk])
            ract[(j, k)] = np.einsum("ai,agc,kc->igk", V[j], big, Vinv[t], optimize=True)
    rip = {}
    for j1, (i1, h1) in enumerate(points):
        for j2, (i2, h2) in enumerate(points):
            if j2 < j1 or i1 != i2:
                continue
            n = ns[j1]
            hinv = H.inv[h1]
            kk = H.comp(hinv, h2)
            # <v, w> = sum_l v_l^* w_l, e_beta^* = J[beta, :]
            core = np.einsum("bq,qgc->bgc", fb.invol[h1], fb.mult[(hinv, h2)])
            big = np.einsum("lm,bgc->lbmgc", np.eye(n), core).reshape(n * fb.dims[h1], n * fb.dims[h2], fb.dims[kk])
            rip[(j1, j2)] = np.einsum("ai,bj,abc->ijc", np.conj(V[j1]), V[j2], big, optimize=True)
    return DemiEquivalence(fb, action, dims, ract, rip), points


def _range_basis(P, tol=1e-9):
    if np.allclose(P, np.eye(len(P)), rtol=0.0, atol=1e-14):
        return np.eye(len(P), dtype=complex)
    u, s, vh = np.linalg.svd(P)
    r = int((s > tol * max(1.0, s[0])).sum())
    return u[:, :r]


def self_demi(fb: FellBundle) -> DemiEquivalence:
    """B over X = H: ract = multiplication, <b1, b2> = b1* b2."""
    units = list(fb.base.units)
    m, points = amplified_demi(fb, units)
    # reorder so that point index = arrow index
    order = np.argsort([h for _, h in points])
    m, points = amplified_demi(fb, units, order=order)
    return m


def matrix_demi(fb: FellBundle, n: int) -> DemiEquivalence:
    """Fibres C^n ⊗ B(h), coordinates (i, beta) -> i * dim B(h) + beta; point
    index = arrow index."""
    projections = []
    for u in fb.base.units:
        alg = fb.algebra(u)
        p = np.zeros((n, n, alg.dim), dtype=complex)
        for i in range(n):
            p[i, i] = alg.identity()
        projections.append(p)
    units = list(fb.base.units)
    _, points = amplified_demi(fb, units, projections)
    m, _ = amplified_demi(fb, units, projections, order=np.argsort([h for _, h in points]))
    return m


def _components(H):
    comp = list(range(H.n_units))

    def find(a):
        while comp[a] != a:
            comp[a] = comp[comp[a]]
            a = comp[a]
        return a
    for g in H.arrows:
        a, b = find(H.src[g]), find(H.rng[g])
        if a != b:
            comp[a] = b
    groups = {}
    for u in H.units:
        groups.setdefault(find(u), []).append(u)
    return list(groups.values())


def random_projection(alg, n, rng):
    """A full projection in M_n(alg): a random subspace in every block."""
    blocks = []
    for s in alg.blocks:
        dimb = n * s
        r = int(rng.integers(1, dimb + 1))
        Q, _ = np.linalg.qr(rng.standard_normal((dimb, r)) + 1j * rng.standard_normal((dimb, r)))
        blocks.append(Q @ Q.conj().T)
    from .cstar import deflate
    return deflate(blocks, alg, n)


def random_demi_equivalence(seed: int, fb: FellBundle | None = None, max_copies: int = 2,
                            max_dim: int = 6, scramble: bool = True) -> DemiEquivalence:
    """A random valid demi-equivalence: M(h) = p_i B(h)^{n_i} over copies of r^{-1}(u_i),
    with points shuffled and fibres re-based at random."""
    from .fellbundle import random_fell_bundle
    rng = np.random.default_rng(seed)
    if fb is None:
        fb = random_fell_bundle(int(rng.integers(2 ** 31)))
    H = fb.base
    units = []
    for comp in _components(H):
        k = int(rng.integers(1, max_copies + 1))
        units += [comp[int(rng.integers(len(comp)))] for _ in range(k)]
    projections = []
    for u in units:
        alg = fb.algebra(u)
        n = int(rng.integers(1, 3)) if alg.dim * 2 <= max_dim else 1
        projections.append(random_projection(alg, n, rng))
    n_points = sum(1 for u in units for h in H.arrows if H.rng[h] == u)
    order = list(rng.permutation(n_points))
    m, _ = amplified_demi(fb, units, projections, order)
    if scramble:
        S = []
        for d in m.dims:
            A = np.eye(d) + 0.4 * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(max(d, 1))
            S.append(A)
        m = rebase(m, S)
    return m


def rebase(m: DemiEquivalence, S) -> DemiEquivalence:
    """Change fibre bases: new e_i at x = sum_a S[x][a, i] old e_a."""
    Si = [np.linalg.inv(s) for s in S]
    ract = {(x, h): np.einsum("ai,abc,kc->ibk", S[x], T, Si[m.action.act(x, h)], optimize=True)
            for (x, h), T in m.ract.items()}
    rip = {(x1, x2): np.einsum("ai,bj,abc->ijc", np.conj(S[x1]), S[x2], T, optimize=True)
           for (x1, x2), T in m.rip.items()}
    return DemiEquivalence(m.bundle, m.action, m.dims, ract, rip)
