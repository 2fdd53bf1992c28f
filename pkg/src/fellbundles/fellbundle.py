"""Fell bundles over finite groupoids as structure tensors.

Fibre B(g) has dimension ``dims[g]``.  For composable (g, h),
``mult[(g, h)][i, j, k]`` gives e_i e_j = sum_k mult[i, j, k] e_k in B(gh).
``invol[g]`` is the matrix J with (b*)_k = sum_i conj(b_i) J[i, k] in B(g^-1).
On unit arrows the fibre is a BlockAlgebra in matrix-unit coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import groupoid as gpd
from .cstar import DEFAULT_TOL, BlockAlgebra, inflate, wedderburn
from .report import StructuralError, ValidationReport


class FellBundle:
    def __init__(self, base: gpd.FiniteGroupoid, unit_algebras, dims, mult, invol):
        self.base = base
        self.unit_algebras = [a if isinstance(a, BlockAlgebra) else BlockAlgebra(a)
                              for a in unit_algebras]
        self.dims = [int(d) for d in dims]
        self.mult = {tuple(int(i) for i in k): np.asarray(v, dtype=complex) for k, v in mult.items()}
        self.invol = [np.asarray(J, dtype=complex) for J in invol]
        self._check_shapes()

    def _check_shapes(self):
        H = self.base
        if len(self.unit_algebras) != H.n_units or len(self.dims) != H.n_arrows:
            raise StructuralError("fibre assignment does not match the base groupoid")
        if len(self.invol) != H.n_arrows:
            raise StructuralError("one involution matrix per arrow is required")
        for u in H.units:
            if self.dims[H.unit_arrow(u)] != self.unit_algebras[u].dim:
                raise StructuralError(f"unit fibre at {u} does not match its block algebra")
        for g, h in H.composable_pairs():
            if (g, h) not in self.mult:
                raise StructuralError(f"missing multiplication tensor for pair ({g},{h})")
            shape = (self.dims[g], self.dims[h], self.dims[H.comp(g, h)])
            if self.mult[(g, h)].shape != shape:
                raise StructuralError(f"multiplication tensor ({g},{h}) has shape "
                                      f"{self.mult[(g, h)].shape}, expected {shape}")
        for g in H.arrows:
            if self.invol[g].shape != (self.dims[g], self.dims[H.inv[g]]):
                raise StructuralError(f"involution matrix at arrow {g} has the wrong shape")

    # -- arithmetic ----------------------------------------------------------

    def algebra(self, u) -> BlockAlgebra:
        return self.unit_algebras[u]

    def fibre_algebra(self, g) -> BlockAlgebra:
        """Block algebra of a unit arrow's fibre."""
        return self.unit_algebras[self.base.src[g]]

    def multiply(self, g, h, b, c):
        return np.einsum("i,j,ijk->k", b, c, self.mult[(g, h)])

    def star(self, g, b):
        return np.conj(b) @ self.invol[g]

    def norm(self, g, b):
        return fibre_norm(self, g, b)

    def random(self, g, rng):
        d = self.dims[g]
        return rng.standard_normal(d) + 1j * rng.standard_normal(d)

    @property
    def total_dim(self):
        return sum(self.dims)

    def change_basis(self, C):
        """New bundle in bases given by C[g] (columns = new basis vectors in old coordinates).

        Arrows missing from ``C`` keep their basis.
        """
        H = self.base
        Cs = {g: np.asarray(c, dtype=complex) for g, c in C.items()}
        Ci = {g: np.linalg.inv(c) for g, c in Cs.items()}
        mult = {}
        for (g, h), M in self.mult.items():
            gh = H.comp(g, h)
            M = np.asarray(M, dtype=complex)
            if g in Cs:
                M = np.tensordot(Cs[g], M, axes=([0], [0]))
            if h in Cs:
                M = np.moveaxis(np.tensordot(Cs[h], M, axes=([0], [1])), 0, 1)
            if gh in Cs:
                M = M @ Ci[gh].T
            mult[(g, h)] = M
        invol = []
        for g in H.arrows:
            J = self.invol[g]
            if g in Cs:
                J = np.conj(Cs[g]).T @ J
            if H.inv[g] in Cs:
                J = J @ Ci[H.inv[g]].T
            invol.append(J)
        return FellBundle(H, self.unit_algebras, self.dims, mult, invol)

    def exact_units(self, tol=1e-8):
        """Replace unit-pair tensors by exact block-algebra arithmetic after
        certifying they agree within ``tol``; returns the certificate residual."""
        H = self.base
        worst = 0.0
        for u in H.units:
            e = H.unit_arrow(u)
            alg = self.unit_algebras[u]
            worst = max(worst, float(np.abs(self.mult[(e, e)] - alg.mult_tensor).max()),
                        float(np.abs(self.invol[e] - alg.invol_matrix).max()))
            self.mult[(e, e)] = alg.mult_tensor.astype(complex)
            self.invol[e] = alg.invol_matrix.astype(complex)
        if worst > tol:
            raise ValueError(f"unit fibres do not match block-algebra arithmetic ({worst:.3e})")
        return worst

    def __repr__(self):
        return f"FellBundle(arrows={self.base.n_arrows}, dims={self.dims})"


def fibre_norms(fb: FellBundle, g, V):
    """Batched fibre norms for the rows of V."""
    H = fb.base
    Vs = np.conj(V) @ fb.invol[g]
    bb = np.einsum("si,sj,ijk->sk", Vs, V, fb.mult[(H.inv[g], g)], optimize=True)
    return np.sqrt(fb.algebra(H.src[g]).norms(bb))


def fibre_norm(fb: FellBundle, g, b) -> float:
    """||b|| = ||b* b||^{1/2} evaluated in the unit fibre B(s(g))."""
    H = fb.base
    bb = fb.multiply(H.inv[g], g, fb.star(g, b), b)
    return float(np.sqrt(fb.algebra(H.src[g]).norm(bb)))


# -- validation ---------------------------------------------------------------

def validate_fell_bundle(fb: FellBundle, tol: float = DEFAULT_TOL, trials: int = 8, seed: int = 0) -> ValidationReport:
    """F1-F10 and saturation.

    Algebraic axioms are checked on all basis tuples; norm inequalities on basis
    vectors plus ``trials`` random elements per fibre.  Residuals are relative.
    """
    rep = ValidationReport("fell bundle", tol)
    H = fb.base
    rng = np.random.default_rng(seed)
    rep.touch("F2", "bilinear by construction (tensor form)")
    rep.touch("F6", "conjugate-linear by construction (matrix form)")
    rep.touch("F1")
    rep.touch("F5")
    for (g, h), M in fb.mult.items():
        rep.check("F1", H.composable(g, h), (g, h))
    for g in H.arrows:
        rep.check("F5", fb.invol[g].shape == (fb.dims[g], fb.dims[H.inv[g]]), (g,))

    scale = {k: 1.0 + float(np.abs(v).max(initial=0.0)) for k, v in fb.mult.items()}

    # units carry exact block-algebra arithmetic
    for u in H.units:
        e = H.unit_arrow(u)
        alg = fb.algebra(u)
        r = max(float(np.abs(fb.mult[(e, e)] - alg.mult_tensor).max()),
                float(np.abs(fb.invol[e] - alg.invol_matrix).max()))
        rep.record("unit", r, (u,))

    # F3 associativity on all basis triples
    for g, h in H.composable_pairs():
        gh = H.comp(g, h)
        for k in H.arrows_to(H.src[h]):
            hk = H.comp(h, k)
            lhs = np.einsum("abp,pcq->abcq", fb.mult[(g, h)], fb.mult[(gh, k)])
            rhs = np.einsum("bcp,apq->abcq", fb.mult[(h, k)], fb.mult[(g, hk)])
            s = scale[(g, h)] * scale[(gh, k)] + scale[(h, k)] * scale[(g, hk)]
            rep.record("F3", np.abs(lhs - rhs).max(initial=0.0) / s, (g, h, k))

    # F8: b** = b
    for g in H.arrows:
        JJ = np.conj(fb.invol[g]) @ fb.invol[H.inv[g]]
        rep.record("F8", np.abs(JJ - np.eye(fb.dims[g])).max(initial=0.0)
                   / (1 + np.abs(fb.invol[g]).max(initial=0.0) ** 2), (g,))

    # F7: (bc)* = c* b* on basis pairs (both sides conjugate-bilinear)
    for g, h in H.composable_pairs():
        gh = H.comp(g, h)
        lhs = np.einsum("abp,pq->abq", np.conj(fb.mult[(g, h)]), fb.invol[gh])
        rhs = np.einsum("bi,aj,ijq->abq", fb.invol[h], fb.invol[g], fb.mult[(H.inv[h], H.inv[g])], optimize=True)
        s = scale[(g, h)] * (1 + np.abs(fb.invol[gh]).max()) + 1.0
        rep.record("F7", np.abs(lhs - rhs).max(initial=0.0) / s, (g, h))

    # F10: the Gram matrix [e_i* e_j] is positive in M_n(B(s(g)))
    for g in H.arrows:
        u = H.src[g]
        G = np.einsum("iq,qjk->ijk", fb.invol[g], fb.mult[(H.inv[g], g)])
        mats = inflate(G, fb.algebra(u))
        lo = min(np.linalg.eigvalsh((m + m.conj().T) / 2)[0] for m in mats)
        hi = max(np.linalg.norm(m, 2) for m in mats)
        herm = max(np.abs(m - m.conj().T).max() for m in mats)
        rep.record("F10", max(0.0, -lo, herm) / (1 + hi), (g,))
        # definiteness: b*b = 0 only for b = 0
        alg = fb.algebra(u)
        Ptr = G @ alg.trace(np.eye(alg.dim))
        w = np.linalg.eigvalsh((Ptr + Ptr.conj().T) / 2)
        rep.check("F10", w[0] > 1e-10 * max(1.0, w[-1]), (g, "definite"))

    # F9 and F4 on basis vectors plus random elements
    samples = {}
    for g in H.arrows:
        d = fb.dims[g]
        extra = rng.standard_normal((trials, d)) + 1j * rng.standard_normal((trials, d))
        samples[g] = np.vstack([np.eye(d), extra])
    norms = {}
    for g in H.arrows:
        gi = H.inv[g]
        V = samples[g]
        Vs = np.conj(V) @ fb.invol[g]
        n1 = fb.algebra(H.src[g]).norms(np.einsum("si,sj,ijk->sk", Vs, V, fb.mult[(gi, g)], optimize=True))
        n2 = fb.algebra(H.rng[g]).norms(np.einsum("si,sj,ijk->sk", V, Vs, fb.mult[(g, gi)], optimize=True))
        norms[g] = np.sqrt(n1)
        for i in range(len(V)):
            rep.record("F9", abs(n1[i] - n2[i]) / (1 + n1[i] + n2[i]), (g, i))
        if H.is_unit(g):
            direct = fb.fibre_algebra(g).norms(V)
            for i in range(len(V)):
                rep.record("F9", abs(n1[i] - direct[i] ** 2) / (1 + n1[i]), (g, i, "unit"))
    for g, h in H.composable_pairs():
        gh = H.comp(g, h)
        k = min(len(samples[g]), len(samples[h]))
        P = np.einsum("si,sj,ijk->sk", samples[g][:k], samples[h][:k], fb.mult[(g, h)], optimize=True)
        nbc = fibre_norms(fb, gh, P)
        bound = norms[g][:k] * norms[h][:k]
        for i in range(k):
            rep.record("F4", max(0.0, nbc[i] - bound[i]) / (1 + bound[i]), (g, h, i))

    # SAT: span B(g)B(h) = B(gh)
    for (g, h), M in fb.mult.items():
        if not H.composable(g, h):
            continue
        target = fb.dims[H.comp(g, h)]
        r = matrix_rank(M.reshape(-1, target))
        rep.check("SAT", r == target, (g, h))
    return rep


def matrix_rank(A, tol=1e-9):
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int((s > tol * s[0]).sum())


# -- assembling bundles --------------------------------------------------------

def assemble_bundle(base: gpd.FiniteGroupoid, dims, mult, invol, tol=1e-8, seed=0):
    """Build a FellBundle from raw tensors whose unit fibres are abstract C*-algebras.

    Each unit fibre is brought to a matrix-unit basis (Wedderburn); returns the
    bundle and the change-of-basis matrices per unit arrow (old = C @ new).
    """
    algebras, C = [], {}
    for u in base.units:
        e = base.unit_arrow(u)
        blocks, Cu = wedderburn(mult[(e, e)], invol[e], seed=seed)
        algebras.append(BlockAlgebra(blocks))
        C[e] = Cu
    raw = _RawBundle(base, algebras, dims, mult, invol)
    fb = FellBundle.change_basis(raw, C)
    fb.exact_units(tol)
    return fb, C


class _RawBundle(FellBundle):
    """Tensors with abstract unit fibres; only used as input to change_basis."""

    def _check_shapes(self):
        pass


def from_model(base: gpd.FiniteGroupoid, unit_algebras, basis, tol=1e-9):
    """Fell bundle from a concrete matrix model.

    ``basis[g]`` is a list of matrices spanning B(g) inside some matrix algebra,
    closed under products and adjoints.  On unit arrows the basis must be the
    image of the matrix units of ``unit_algebras[u]``.
    """
    H = base
    flat = [np.array([np.asarray(b).reshape(-1) for b in basis[g]]).T for g in H.arrows]
    pinv = [np.linalg.pinv(f) for f in flat]

    def coords(g, P):
        v = P.reshape(-1)
        c = pinv[g] @ v
        res = np.linalg.norm(flat[g] @ c - v)
        if res > tol * (1 + np.linalg.norm(v)) * 100:
            raise ValueError(f"model is not closed: residual {res:.3e} at arrow {g}")
        return c

    mult = {}
    for g, h in H.composable_pairs():
        gh = H.comp(g, h)
        mult[(g, h)] = np.array([[coords(gh, a @ b) for b in basis[h]] for a in basis[g]])
    invol = [np.array([coords(H.inv[g], np.conj(a).T) for a in basis[g]]) for g in H.arrows]
    dims = [len(basis[g]) for g in H.arrows]
    fb = FellBundle(H, unit_algebras, dims, mult, invol)
    fb.exact_units(1e-8)
    return fb


def embed(alg: BlockAlgebra, mults):
    """Matrices iota(e_k) for the matrix units, with block j repeated mults[j] times."""
    N = sum(m * n for m, n in zip(mults, alg.blocks))
    out = []
    for j, n in enumerate(alg.blocks):
        start = sum(m * nn for m, nn in zip(mults[:j], alg.blocks[:j]))
        for r in range(n):
            for c in range(n):
                E = np.zeros((N, N), dtype=complex)
                for rep in range(mults[j]):
                    o = start + rep * n
                    E[o + r, o + c] = 1.0
                out.append(E)
    return out


def semidirect_model(group: gpd.FiniteGroupoid, perm, alg: BlockAlgebra, mults, unitaries):
    """Bundle over Gamma ⋉ O (O one orbit) with B((g, s)) = E_{gs,s} ⊗ iota(A) U_g.

    ``unitaries[g]`` must normalize iota(A) and satisfy U_g U_h ∈ T·U_gh.
    """
    base = gpd.transformation_groupoid(group, perm)
    n = np.asarray(perm).shape[1]
    units = embed(alg, mults)
    basis = []
    for a in base.arrows:
        g, s = divmod(a, n)
        t = int(perm[g][s])
        E = np.zeros((n, n))
        E[t, s] = 1.0
        basis.append([np.kron(E, u @ unitaries[g]) for u in units])
    return from_model(base, [alg] * n, basis)


def disjoint_bundle(*fbs: FellBundle):
    base = gpd.disjoint_union(*[f.base for f in fbs])
    algs, dims, mult, invol = [], [], {}, []
    off = 0
    for f in fbs:
        algs += f.unit_algebras
        dims += f.dims
        for (g, h), M in f.mult.items():
            mult[(g + off, h + off)] = M
        invol += f.invol
        off += f.base.n_arrows
    return FellBundle(base, algs, dims, mult, invol)


# -- catalogue -------------------------------------------------------------------

def _pauli():
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.array([[1, 0], [0, -1]], dtype=complex)
    return [np.eye(2, dtype=complex), X, Z, X @ Z]


def _group(name):
    if name.startswith("z"):
        return gpd.cyclic_group(int(name[1:]))
    if name == "klein":
        return gpd.klein_group()
    if name == "s3":
        return gpd.symmetric_group_s3()
    raise KeyError(name)


def _perm_matrix(p):
    n = len(p)
    P = np.zeros((n, n), dtype=complex)
    for i, j in enumerate(p):
        P[j, i] = 1.0
    return P


def _block_perm_rep(group_name, group, k, rng):
    """A homomorphism from the group to permutations of k blocks, as lists."""
    ident = list(range(k))
    if k == 1:
        return [ident] * group.n_arrows
    if group_name.startswith("z"):
        n = group.n_arrows
        for _ in range(10):
            p = list(rng.permutation(k))
            q = ident
            for _ in range(n):
                q = [p[i] for i in q]
            if q == ident:
                reps, q = [], ident
                for _ in range(n):
                    reps.append(q)
                    q = [p[i] for i in q]
                return reps
        return [ident] * n
    if group_name == "s3":
        swap = [1, 0] + list(range(2, k))
        return [ident if i < 3 else swap for i in range(6)]
    if group_name == "klein":
        swap = [1, 0] + list(range(2, k))
        return [ident, swap, ident, swap]
    return [ident] * group.n_arrows


# transitive Gamma-sets by name: (group, permutation table)
_ORBITS = {
    "point": ("z1", [[0]]),
    "z2": ("z2", [[0], [0]]),
    "z3": ("z3", [[0], [0], [0]]),
    "z4": ("z4", [[0]] * 4),
    "z5": ("z5", [[0]] * 5),
    "z6": ("z6", [[0]] * 6),
    "klein": ("klein", [[0]] * 4),
    "s3": ("s3", [[0]] * 6),
    "pair2": ("z2", [[0, 1], [1, 0]]),
    "pair3": ("z3", [[0, 1, 2], [1, 2, 0], [2, 0, 1]]),
    "z4_on_2": ("z4", [[0, 1], [1, 0], [0, 1], [1, 0]]),
    "z6_on_2": ("z6", [[0, 1], [1, 0]] * 3),
    "z6_on_3": ("z6", [[0, 1, 2], [1, 2, 0], [2, 0, 1]] * 2),
    "s3_on_3": ("s3", None),
}

# groupoids (lists of orbit names) used by the random generator, all <= 6 arrows
CATALOGUE = {
    "point": ["point"],
    "z2": ["z2"], "z3": ["z3"], "z4": ["z4"], "z5": ["z5"], "z6": ["z6"],
    "klein": ["klein"], "s3": ["s3"],
    "pair2": ["pair2"], "pair3": ["pair3"],
    "z4_on_2": ["z4_on_2"], "z6_on_2": ["z6_on_2"],
    "z2+point": ["z2", "point"], "pair2+point": ["pair2", "point"],
    "z2+z2": ["z2", "z2"], "pair2+z2": ["pair2", "z2"],
    "z3+z3": ["z3", "z3"], "point+point": ["point", "point"],
}


def _orbit_table(name):
    gname, perm = _ORBITS[name]
    group = _group(gname)
    if perm is None:        # S3 on {0,1,2}
        perm = [[int(c) for c in group.label(g)] for g in group.arrows]
    return gname, group, np.asarray(perm)


@dataclass
class BundleProfile:
    """Size parameters for ``random_fell_bundle``; None means "pick at random"."""
    groupoid: str | None = None
    blocks: tuple | None = None
    max_fibre_dim: int = 3
    max_arrows: int = 6
    twist: bool | None = None
    scramble: bool = True
    names: list = field(default_factory=lambda: sorted(CATALOGUE))


def _orbit_bundle(orbit, blocks, twist, rng):
    gname, group, perm = _orbit_table(orbit)
    alg = BlockAlgebra(blocks)
    n_el = group.n_arrows
    if twist and gname == "klein" and blocks == (1,):
        # Pauli model: a genuinely twisted line bundle with unit fibre C
        return semidirect_model(group, perm, alg, [2], _pauli())
    k = len(blocks)
    # permute equal-size blocks; phases from characters for cyclic groups
    if len(set(blocks)) == 1:
        prep = _block_perm_rep(gname, group, k, rng)
    else:
        prep = [list(range(k))] * n_el
    N = sum(blocks)
    starts = np.concatenate([[0], np.cumsum(blocks)]).astype(int)
    permuting = any(p != list(range(k)) for p in prep)
    zeta = None
    if gname.startswith("z") and twist and not permuting:
        # characters of the cyclic group, one per coordinate
        zeta = np.exp(2j * np.pi * rng.integers(0, n_el, size=N) / n_el)
    unitaries = []
    for g in range(n_el):
        P = np.zeros((N, N), dtype=complex)
        for j, tgt in enumerate(prep[g]):
            for r in range(blocks[j]):
                P[starts[tgt] + r, starts[j] + r] = 1.0
        unitaries.append(P @ np.diag(zeta ** g) if zeta is not None else P)
    return semidirect_model(group, perm, alg, [1] * k, unitaries)


def random_fell_bundle(seed: int, profile: BundleProfile | str | None = None) -> FellBundle:
    """A valid saturated Fell bundle from the model catalogue.

    Fibres over an orbit are A U_g inside a concrete matrix algebra (semidirect
    or twisted group-algebra style); non-unit fibres then get a random basis.
    """
    if isinstance(profile, str):
        profile = BundleProfile(groupoid=profile)
    profile = profile or BundleProfile()
    rng = np.random.default_rng(seed)
    names = [n for n in profile.names
             if sum(_orbit_table(o)[1].n_arrows * len(_orbit_table(o)[2][0]) for o in CATALOGUE[n])
             <= profile.max_arrows]
    name = profile.groupoid or names[rng.integers(len(names))]
    if name not in CATALOGUE:
        raise ValueError(f"unknown groupoid profile {name!r}")
    choices = [b for b in [(1,), (1, 1), (1, 1, 1), (2,), (1, 2), (3,)]
               if sum(n * n for n in b) <= profile.max_fibre_dim]
    if not choices:
        raise ValueError("unsatisfiable profile: no block algebra fits max_fibre_dim")
    parts = []
    for orbit in CATALOGUE[name]:
        blocks = tuple(profile.blocks) if profile.blocks else choices[rng.integers(len(choices))]
        twist = bool(rng.integers(2)) if profile.twist is None else profile.twist
        parts.append(_orbit_bundle(orbit, blocks, twist, rng))
    fb = parts[0] if len(parts) == 1 else disjoint_bundle(*parts)
    if profile.scramble:
        C = {}
        for g in fb.base.arrows:
            if not fb.base.is_unit(g):
                d = fb.dims[g]
                C[g] = np.eye(d) + 0.4 * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(d)
                C[g] = C[g] * np.exp(2j * np.pi * rng.random())
        fb = fb.change_basis(C)
    return fb


def line_bundle_z2(sign=1.0):
    """Group-algebra line bundle over Z/2: e_g e_g = sign * e_e, e_g* = e_g.

    sign = -1 gives the mis-twisted bundle that violates positivity.
    """
    H = gpd.cyclic_group(2)
    mult = {(0, 0): [[[1]]], (0, 1): [[[1]]], (1, 0): [[[1]]], (1, 1): [[[sign]]]}
    invol = [[[1]], [[1]]]
    return FellBundle(H, [BlockAlgebra([1])], [1, 1], mult, invol)


def trivial_bundle(base: gpd.FiniteGroupoid, blocks=(1,)):
    """B(h) = A for every arrow, product and involution from A (trivial action)."""
    alg = BlockAlgebra(blocks)
    T, J = alg.mult_tensor, alg.invol_matrix
    mult = {(g, h): T for g, h in base.composable_pairs()}
    return FellBundle(base, [alg] * base.n_units, [alg.dim] * base.n_arrows, mult, [J] * base.n_arrows)


def point_bundle(blocks):
    return trivial_bundle(gpd.cyclic_group(1), blocks)


def group_algebra_bundle(group: gpd.FiniteGroupoid):
    return trivial_bundle(group, (1,))
