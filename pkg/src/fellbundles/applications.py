"""Worked examples with closed-form answers.

Each fixture pairs a demi-equivalence with an independently built expected
bundle, equipped as an equivalence through its closed-form left action and left
inner product.  ``run_fixture`` builds the imprimitivity bundle, validates it,
and compares it with the expected one through the uniqueness isomorphism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import groupoid as gpd
from .cstar import BlockAlgebra
from .demiequiv import DemiEquivalence, matrix_demi, self_demi, validate_demi
from .fellbundle import FellBundle, assemble_bundle, validate_fell_bundle
from .imprimitivity import (Equivalence, build_imprimitivity_bundle, uniqueness_iso,
                            validate_equivalence)
from .report import StructuralError


@dataclass
class NamedFixture:
    name: str
    demi: DemiEquivalence
    expected: Equivalence
    expected_iso_hint: str
    unit_change: dict = field(default_factory=dict)    # raw -> normalized unit coordinates
    info: dict = field(default_factory=dict)

    def raw_to_expected(self, g, c):
        """Coordinates of the expected bundle from the closed-form (raw) ones."""
        C = self.unit_change.get(g)
        return np.asarray(c) if C is None else np.linalg.solve(C, np.asarray(c))


def _equip(base, dims, mult, invol, demi, rho, table, lact, lip):
    """Normalize unit fibres (Wedderburn) and carry the equivalence tensors along."""
    fb, C = assemble_bundle(base, dims, mult, invol)
    Cinv = {g: np.linalg.inv(c) for g, c in C.items()}
    lact = {(g, y): (np.einsum("pq,pil->qil", C[g], T) if g in C else T)
            for (g, y), T in lact.items()}
    table = np.asarray(table)
    new_lip = {}
    for (x, y), T in lip.items():
        g = int(np.flatnonzero(table[:, y] == x)[0])
        new_lip[(x, y)] = np.einsum("ijp,qp->ijq", T, Cinv[g]) if g in C else T
    return Equivalence(fb, demi, rho, table, lact, new_lip), C


# -- self-equivalence ------------------------------------------------------------------

def self_equivalence(fb: FellBundle, demi: DemiEquivalence) -> Equivalence:
    """B acting on itself: left action = multiplication, <b1, b2> = b1 b2^*."""
    H = fb.base
    table = -np.ones((H.n_arrows, H.n_arrows), dtype=int)
    lact, lip = {}, {}
    for g in H.arrows:
        for y in H.arrows:
            if H.src[g] == H.rng[y]:
                table[g, y] = H.comp(g, y)
                lact[(g, y)] = fb.mult[(g, y)]
    for x in H.arrows:
        for y in H.arrows:
            if H.src[x] == H.src[y]:
                yi = H.inv[y]
                lip[(x, y)] = np.einsum("jc,icp->ijp", fb.invol[y], fb.mult[(x, yi)])
    return Equivalence(fb, demi, list(H.rng), table, lact, lip)


def fixture_self(fb: FellBundle) -> NamedFixture:
    m = self_demi(fb)
    return NamedFixture("self", m, self_equivalence(fb, m), "b1 b2^*")


# -- matrix amplification --------------------------------------------------------------

def matrix_amplification(fb: FellBundle, n: int):
    """Raw tensors of M_n ⊗ B: coordinates (i, j, beta) -> (i n + j) dim B(h) + beta."""
    H = fb.base
    dims = [n * n * d for d in fb.dims]
    E = np.zeros((n, n, n, n, n, n))                  # E_ij E_kl = delta_jk E_il
    for i in range(n):
        for j in range(n):
            for l in range(n):
                E[i, j, j, l, i, l] = 1.0
    mult = {}
    for g, h in H.composable_pairs():
        gh = H.comp(g, h)
        T = np.einsum("ijklpq,abc->ijaklbpqc", E, fb.mult[(g, h)])
        mult[(g, h)] = T.reshape(dims[g], dims[h], dims[gh])
    invol = []
    for g in H.arrows:
        T = np.einsum("jl,ik,ab->ijalkb", np.eye(n), np.eye(n), fb.invol[g], optimize=True)   # E_ij -> E_ji
        invol.append(T.reshape(dims[g], dims[H.inv[g]]))
    return dims, mult, invol


def fixture_matrix(fb: FellBundle, n: int) -> NamedFixture:
    """M(h) = C^n ⊗ B(h); expected M_n ⊗ B with <v ⊗ b, w ⊗ c>_A = v w^† ⊗ b c^*."""
    if n < 1:
        raise StructuralError("n must be positive")
    H = fb.base
    m = matrix_demi(fb, n)
    dims, mult, invol = matrix_amplification(fb, n)
    table = -np.ones((H.n_arrows, H.n_arrows), dtype=int)
    lact, lip = {}, {}
    eye = np.eye(n)
    for g in H.arrows:
        for y in H.arrows:
            if H.src[g] == H.rng[y]:
                gy = H.comp(g, y)
                table[g, y] = gy
                # (E_ij ⊗ b) ▷ (e_k ⊗ c) = delta_jk e_i ⊗ b c
                T = np.einsum("il,jk,abc->ijakblc", eye, eye, fb.mult[(g, y)], optimize=True)
                lact[(g, y)] = T.reshape(dims[g], m.dims[y], m.dims[gy])
    for x in H.arrows:
        for y in H.arrows:
            if H.src[x] == H.src[y]:
                g = H.comp(x, H.inv[y])
                core = np.einsum("jc,icp->ijp", fb.invol[y], fb.mult[(x, H.inv[y])])
                # <e_k ⊗ b, e_l ⊗ c> = E_kl ⊗ b c^*
                T = np.einsum("ki,lj,abp->kalbijp", eye, eye, core, optimize=True)
                lip[(x, y)] = T.reshape(m.dims[x], m.dims[y], dims[g])
    e, C = _equip(H, dims, mult, invol, m, list(H.rng), table, lact, lip)
    return NamedFixture(f"matrix n={n}", m, e, "(E_ij, b1 b2^*)", C, {"n": n})


# -- transformation groups ----------------------------------------------------------------

def inner_action(alg: BlockAlgebra, unitaries):
    """alpha_x(a) = u_x a u_x^* as coordinate matrices (new = alpha @ old);
    each u_x is a unitary element of ``alg`` in coordinates."""
    mats = []
    for U in unitaries:
        Ub = alg.to_blocks(np.asarray(U, dtype=complex))
        cols = []
        for k in range(alg.dim):
            e = np.zeros(alg.dim, dtype=complex)
            e[k] = 1.0
            blocks = [u @ b @ u.conj().T for u, b in zip(Ub, alg.to_blocks(e))]
            cols.append(alg.from_blocks(blocks))
        mats.append(np.array(cols).T)
    return mats


def validate_alpha(group: gpd.FiniteGroupoid, alg: BlockAlgebra, alpha, tol=1e-9):
    """alpha must be a group homomorphism into the *-automorphisms of alg."""
    T, J = alg.mult_tensor, alg.invol_matrix
    for x in group.arrows:
        a = np.asarray(alpha[x])
        # multiplicative: alpha(e_i e_j) = alpha(e_i) alpha(e_j)
        lhs = np.einsum("ijk,lk->ijl", T, a)
        rhs = np.einsum("pi,qj,pql->ijl", a, a, T, optimize=True)
        star_l = J @ a.T
        star_r = np.conj(a.T) @ J
        if np.abs(lhs - rhs).max() > tol or np.abs(star_l - star_r).max() > tol:
            raise StructuralError(f"alpha at {x} is not a *-automorphism")
        for y in group.arrows:
            if np.abs(alpha[group.comp(x, y)] - a @ alpha[y]).max() > tol:
                raise StructuralError(f"alpha is not a homomorphism at ({x},{y})")


def _subgroup(group: gpd.FiniteGroupoid, elements):
    elements = sorted(int(h) for h in elements)
    pos = {h: i for i, h in enumerate(elements)}
    if group.unit_arrow(0) not in pos:
        raise StructuralError("subgroup must contain the identity")
    table = []
    for a in elements:
        row = []
        for b in elements:
            c = group.comp(a, b)
            if c not in pos:
                raise StructuralError("subgroup is not closed under multiplication")
            row.append(pos[c])
        table.append(row)
    return gpd.group_from_table(table, labels=[group.label(h) for h in elements]), elements


def fixture_transformation_group(x_group: gpd.FiniteGroupoid, h_sub, alg: BlockAlgebra,
                                 alpha=None) -> NamedFixture:
    """B = A ⋊ H, M = A × X, expected the semidirect bundle over X ⋉ X/H."""
    if x_group.n_units != 1:
        raise StructuralError("the transformation-group fixture needs a group")
    X = x_group
    nX = X.n_arrows
    alpha = [np.eye(alg.dim)] * nX if alpha is None else [np.asarray(a, dtype=complex) for a in alpha]
    validate_alpha(X, alg, alpha)
    Hg, helts = _subgroup(X, h_sub)
    T, J, d = alg.mult_tensor, alg.invol_matrix, alg.dim

    # B = A ⋊ H: (a1, h1)(a2, h2) = (a1 alpha_h1(a2), h1 h2), (a, h)^* = (alpha_{h^-1}(a^*), h^-1)
    mult = {}
    for i, h1 in enumerate(helts):
        for j in range(len(helts)):
            mult[(i, j)] = np.einsum("iqk,qj->ijk", T, alpha[h1])
    invol = [J @ alpha[X.inv[h]].T for h in helts]
    B = FellBundle(Hg, [alg], [d] * len(helts), mult, invol)

    # M = A × X with (m, x) ◁ (b, h) = (m alpha_x(b), x h)
    act_table = np.array([[X.comp(x, h) for h in helts] for x in range(nX)])
    action = gpd.PrincipalAction(Hg, [0] * nX, act_table)
    ract = {(x, j): np.einsum("iqk,qj->ijk", T, alpha[x]) for x in range(nX) for j in range(len(helts))}
    rip = {}
    for x in range(nX):
        for y in range(x, nX):
            xi = X.inv[x]
            if X.comp(xi, y) not in helts:
                continue
            # <(m, x), (n, y)> = (alpha_{x^-1}(m^* n), x^-1 y)
            rip[(x, y)] = np.einsum("ic,cjl,kl->ijk", J, T, alpha[xi], optimize=True)
    m = DemiEquivalence(B, action, [d] * nX, ract, rip)

    # expected: X ⋉ X/H with cosets ordered by least element
    coset_of = -np.ones(nX, dtype=int)
    cosets = []
    for x in range(nX):
        if coset_of[x] < 0:
            members = sorted({X.comp(x, h) for h in helts})
            coset_of[members] = len(cosets)
            cosets.append(members)
    nS = len(cosets)
    perm = [[int(coset_of[X.comp(g, cosets[s][0])]) for s in range(nS)] for g in range(nX)]
    G = gpd.transformation_groupoid(X, perm)

    def arrow(g, s):
        return g * nS + s

    emult = {}
    for a, b in G.composable_pairs():
        x = a // nS
        emult[(a, b)] = np.einsum("iqk,qj->ijk", T, alpha[x])          # a alpha_x(b)
    einvol = [J @ alpha[X.inv[a // nS]].T for a in G.arrows]             # alpha_{x^-1}(a^*)
    EB = FellBundle(G, [alg] * nS, [d] * G.n_arrows, emult, einvol)
    table = -np.ones((G.n_arrows, nX), dtype=int)
    lact, lip = {}, {}
    for g in range(nX):
        for y in range(nX):
            a = arrow(g, int(coset_of[y]))
            table[a, y] = X.comp(g, y)
            lact[(a, y)] = np.einsum("iqk,qj->ijk", T, alpha[g])         # a alpha_g(n)
    for x in range(nX):
        for y in range(nX):
            g = X.comp(x, X.inv[y])
            # <(m, x), (n, y)>_A = m alpha_{x y^-1}(n^*) at (x y^-1, yH)
            lip[(x, y)] = np.einsum("iqk,ql,jl->ijk", T, alpha[g], J, optimize=True)
    e = Equivalence(EB, m, coset_of, table, lact, lip)
    info = {"cosets": cosets, "coset_of": coset_of.tolist(),
            "base_formula": {(x, y): arrow(X.comp(x, X.inv[y]), int(coset_of[y]))
                             for x in range(nX) for y in range(nX)}}
    return NamedFixture("transformation group", m, e, "(m alpha_{xy^-1}(n^*), (xy^-1, yH))", {}, info)


# -- finite Kumjian stabilization ------------------------------------------------------------

def _offsets(fb, arrows):
    off, out = 0, {}
    for l in arrows:
        out[l] = off
        off += fb.dims[l]
    return out, off


def fixture_kumjian(fb: FellBundle) -> NamedFixture:
    """M(h) = ⊕_{l : s(l) = s(h)} B(l) over X = H with counting measure; expected the
    bundle of compact operators on V(u) = ⊕_{l : s(l) = u} B(l) twisted by H."""
    H = fb.base
    J = fb.invol
    n = H.n_arrows
    by_src = {u: [l for l in H.arrows if H.src[l] == u] for u in H.units}
    V = {u: _offsets(fb, by_src[u]) for u in H.units}                 # offsets, dim

    # demi-equivalence
    dims = [V[H.src[h]][1] for h in H.arrows]
    act_table = -np.ones((n, n), dtype=int)
    ract = {}
    for h in H.arrows:
        for k in H.arrows_to(H.src[h]):
            hk = H.comp(h, k)
            act_table[h, k] = hk
            off_h, _ = V[H.src[h]]
            off_t, _ = V[H.src[k]]
            T = np.zeros((dims[h], fb.dims[k], dims[hk]), dtype=complex)
            ki = H.inv[k]
            for l in by_src[H.src[k]]:
                lp = H.comp(l, ki)                                    # (xi ◁ b)(l) = xi(l k^-1) b
                T[off_h[lp]:off_h[lp] + fb.dims[lp], :, off_t[l]:off_t[l] + fb.dims[l]] = fb.mult[(lp, k)]
            ract[(h, k)] = T
    action = gpd.PrincipalAction(H, list(H.src), act_table)
    rip = {}
    for g in H.arrows:
        for h in H.arrows:
            if h < g or H.rng[g] != H.rng[h]:
                continue
            k = H.comp(H.inv[g], h)
            off_g, _ = V[H.src[g]]
            off_h, _ = V[H.src[h]]
            T = np.zeros((dims[g], dims[h], fb.dims[k]), dtype=complex)
            for l in by_src[H.src[g]]:
                l2 = H.comp(l, k)                                    # sum_l mu(l)^* xi(l g^-1 h)
                core = np.einsum("bc,cqp->bqp", J[l], fb.mult[(H.inv[l], l2)])
                T[off_g[l]:off_g[l] + fb.dims[l], off_h[l2]:off_h[l2] + fb.dims[l2]] = core
            rip[(g, h)] = T
    m = DemiEquivalence(fb, action, dims, ract, rip)

    # expected: A(k) = [a_pq], p, q in H r(k), a_pq in B(p q^-1)
    def entries(u):
        out, off = {}, 0
        for p in by_src[u]:
            for q in by_src[u]:
                out[(p, q)] = off
                off += fb.dims[H.comp(p, H.inv[q])]
        return out, off
    E = {u: entries(u) for u in H.units}
    adims = [E[H.rng[k]][1] for k in H.arrows]

    def pq(p, q):
        return H.comp(p, H.inv[q])

    amult = {}
    for h, k in H.composable_pairs():
        hk = H.comp(h, k)
        Eh, Ek, Ehk = E[H.rng[h]][0], E[H.rng[k]][0], E[H.rng[hk]][0]
        T = np.zeros((adims[h], adims[k], adims[hk]), dtype=complex)
        # (a (h ▷ b))_{p,q} = sum_t a_{p,t} b_{th, qh}
        for (p, t), oa in Eh.items():
            th = H.comp(t, h)
            for (t2, q2), ob in Ek.items():
                if t2 != th:
                    continue
                q = H.comp(q2, H.inv[h])
                oc = Ehk[(p, q)]
                M = fb.mult[(pq(p, t), pq(t, q))]
                T[oa:oa + M.shape[0], ob:ob + M.shape[1], oc:oc + M.shape[2]] = M
        amult[(h, k)] = T
    ainvol = []
    for h in H.arrows:
        hi = H.inv[h]
        Eh, Ehi = E[H.rng[h]][0], E[H.rng[hi]][0]
        T = np.zeros((adims[h], adims[hi]), dtype=complex)
        # (a^*)_{p', q'} = (a_{q' h^-1, p' h^-1})^*
        for (p, q), oa in Eh.items():
            p2, q2 = H.comp(q, h), H.comp(p, h)
            ob = Ehi[(p2, q2)]
            Jm = J[pq(p, q)]
            T[oa:oa + Jm.shape[0], ob:ob + Jm.shape[1]] = Jm
        ainvol.append(T)

    table = -np.ones((n, n), dtype=int)
    lact = {}
    for k in H.arrows:
        for y in H.arrows:
            if H.src[k] != H.rng[y]:
                continue
            ky = H.comp(k, y)
            table[k, y] = ky
            off_y, _ = V[H.src[y]]
            Ek = E[H.rng[k]][0]
            T = np.zeros((adims[k], dims[y], dims[ky]), dtype=complex)
            # ((a, k) ▷ xi)(m) = sum_{m'} a_{m y^-1 k^-1, m' y^-1 k^-1} xi(m')
            for (p, q), oa in Ek.items():
                mp = H.comp(H.comp(q, k), y)
                mm = H.comp(H.comp(p, k), y)
                M = fb.mult[(pq(p, q), mp)]
                T[oa:oa + M.shape[0], off_y[mp]:off_y[mp] + M.shape[1],
                  off_y[mm]:off_y[mm] + M.shape[2]] = M
            lact[(k, y)] = T
    lip = {}
    for x in H.arrows:
        for y in H.arrows:
            if H.src[x] != H.src[y]:
                continue
            g = H.comp(x, H.inv[y])
            off, _ = V[H.src[x]]
            Eg = E[H.rng[g]][0]
            T = np.zeros((dims[x], dims[y], adims[g]), dtype=complex)
            # T_{p,q} = mu(p x) xi(q x)^*
            for l1 in by_src[H.src[x]]:
                for l2 in by_src[H.src[x]]:
                    p, q = H.comp(l1, H.inv[x]), H.comp(l2, H.inv[x])
                    oc = Eg[(p, q)]
                    core = np.einsum("jc,icp->ijp", J[l2], fb.mult[(l1, H.inv[l2])])
                    T[off[l1]:off[l1] + fb.dims[l1], off[l2]:off[l2] + fb.dims[l2],
                      oc:oc + core.shape[2]] = core
            lip[(x, y)] = T
    e, C = _equip(H, adims, amult, ainvol, m, list(H.rng), table, lact, lip)
    info = {"V_dims": {u: V[u][1] for u in H.units}}
    return NamedFixture("kumjian", m, e, "T_pq = mu(p x) xi(q x)^*", C, info)


# -- running -----------------------------------------------------------------------------

@dataclass
class FixtureReport:
    name: str
    passed: bool = False
    stages: dict = field(default_factory=dict)      # stage -> (passed, max residual)
    error: str = ""
    dims: dict = field(default_factory=dict)
    base_map: list = field(default_factory=list)
    iso: object = None
    constructed: object = None

    @property
    def max_residual(self):
        return max((r for _, r in self.stages.values()), default=0.0)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "error": self.error,
                "max_residual": self.max_residual,
                "stages": {k: {"passed": p, "max_residual": r} for k, (p, r) in self.stages.items()},
                "dims": self.dims, "base_map": self.base_map}


def run_fixture(f: NamedFixture, tol: float = 1e-8) -> FixtureReport:
    """Construct, validate, and compare against the expected bundle; failures are reported."""
    out = FixtureReport(f.name)
    try:
        r = validate_demi(f.demi, tol)
        out.stages["demi"] = (r.passed, r.max_residual)
        r = validate_fell_bundle(f.expected.bundle, tol)
        out.stages["expected bundle"] = (r.passed, r.max_residual)
        r = validate_equivalence(f.expected, tol)
        out.stages["expected equivalence"] = (r.passed, r.max_residual)
        e = build_imprimitivity_bundle(f.demi, tol=tol)
        out.constructed = e
        out.dims = {"constructed": e.bundle.dims, "expected": f.expected.bundle.dims}
        r = validate_fell_bundle(e.bundle, tol)
        out.stages["constructed bundle"] = (r.passed, r.max_residual)
        r = validate_equivalence(e, tol)
        out.stages["constructed equivalence"] = (r.passed, r.max_residual)
        iso = uniqueness_iso(e, f.expected, tol, strict=False)
        out.iso = iso
        out.base_map = [int(v) for v in iso.base_map]
        out.stages["uniqueness"] = (iso.passed, iso.max_residual)
    except (ValueError, StructuralError) as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    out.passed = not out.error and all(p for p, _ in out.stages.values())
    return out


def fixture_catalogue():
    """Named fixture factories addressable from the command line."""
    z4 = gpd.cyclic_group(4)
    m2 = BlockAlgebra([2])
    return {
        "self": lambda p: fixture_self(_bundle_param(p)),
        "matrix": lambda p: fixture_matrix(_bundle_param(p), int(p.get("n", 2))),
        "transformation": lambda p: fixture_transformation_group(
            z4, [0, 2], m2 if p.get("algebra", "m2") == "m2" else BlockAlgebra([1]),
            inner_action(m2, [np.array([1, 0, 0, 1j ** x]) for x in range(4)])
            if p.get("algebra", "m2") == "m2" else None),
        "kumjian": lambda p: fixture_kumjian(_bundle_param(p, "pair2")),
    }


def _bundle_param(p, default="z2"):
    from .fellbundle import line_bundle_z2, random_fell_bundle, trivial_bundle
    name = p.get("bundle", default)
    if name == "z2":
        return line_bundle_z2()
    if name == "z3":
        return trivial_bundle(gpd.cyclic_group(3))
    if name == "pair2":
        return trivial_bundle(gpd.pair_groupoid(2))
    if name == "point":
        return trivial_bundle(gpd.cyclic_group(1), (int(p.get("block", 1)),))
    if name == "random":
        return random_fell_bundle(int(p.get("seed", 0)))
    raise StructuralError(f"unknown bundle '{name}'")
