"""Finite-dimensional right Hilbert modules over block algebras.

A module of dimension d over B (dim B = k) is stored as two tensors:

* ``action[i, b, j]``: e_i ◁ f_b = sum_j action[i, b, j] e_j
* ``inner[i, j, b]``: <e_i, e_j> = sum_b inner[i, j, b] f_b

with the inner product conjugate-linear in its first slot.  Module maps
Y -> X are plain d_X x d_Y matrices.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .cstar import DEFAULT_TOL, BlockAlgebra, inflate
from .report import StructuralError, ValidationReport


class HilbertModule:
    def __init__(self, algebra: BlockAlgebra, action, inner):
        self.algebra = algebra
        self.action = np.asarray(action, dtype=complex)
        self.inner_tensor = np.asarray(inner, dtype=complex)
        d = self.action.shape[0]
        k = algebra.dim
        if self.action.shape != (d, k, d) or self.inner_tensor.shape != (d, d, k):
            raise StructuralError("module tensors have inconsistent shapes")

    @property
    def dim(self):
        return self.action.shape[0]

    def act(self, m, b):
        return np.einsum("i,b,ibj->j", m, b, self.action)

    def inner(self, m, n):
        return np.einsum("i,j,ijb->b", np.conj(m), n, self.inner_tensor)

    def norm(self, m):
        return np.sqrt(self.algebra.norm(self.inner(m, m)))

    def random(self, rng):
        return rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)

    @cached_property
    def right_mats(self):
        """R[b] is the matrix of m -> m ◁ f_b."""
        return np.transpose(self.action, (1, 2, 0))

    @cached_property
    def trace_gram(self):
        """P[i, j] = tau(<e_i, e_j>) with tau the block trace; positive definite."""
        tr = self.algebra.trace(np.eye(self.algebra.dim))
        P = self.inner_tensor @ tr
        return (P + P.conj().T) / 2

    @cached_property
    def _adjoint_solver(self):
        # rows (i, b), columns l: <e_i, e_l>_b
        A = np.transpose(self.inner_tensor, (0, 2, 1)).reshape(-1, self.dim)
        return A, np.linalg.pinv(A)

    def __repr__(self):
        return f"HilbertModule(dim={self.dim}, over {self.algebra})"


def standard_module(alg: BlockAlgebra, n=1):
    """alg^n with <v, w> = sum_i v_i^* w_i and the right action by multiplication."""
    k = alg.dim
    T = alg.mult_tensor
    J = alg.invol_matrix
    action = np.zeros((n * k, k, n * k), dtype=complex)
    inner = np.zeros((n * k, n * k, k), dtype=complex)
    for i in range(n):
        s = slice(i * k, (i + 1) * k)
        action[s, :, s] = T
        # <e_a, e_c> = e_a^* e_c = sum_q J[a, q] T[q, c, :]
        inner[s, s, :] = np.einsum("aq,qcb->acb", J, T)
    return HilbertModule(alg, action, inner)


def column_module(alg: BlockAlgebra, block: int):
    """C^n as a right module over alg acting through block ``block`` (row vectors)."""
    n = alg.blocks[block]
    k = alg.dim
    action = np.zeros((n, k, n), dtype=complex)
    inner = np.zeros((n, n, k), dtype=complex)
    for r in range(n):
        for c in range(n):
            action[r, alg.index(block, r, c), c] = 1.0     # e_r E_rc = e_c
            inner[r, c, alg.index(block, r, c)] = 1.0      # e_r^* e_c = E_rc
    return HilbertModule(alg, action, inner)


def direct_sum(*mods: HilbertModule):
    alg = mods[0].algebra
    d = sum(m.dim for m in mods)
    k = alg.dim
    action = np.zeros((d, k, d), dtype=complex)
    inner = np.zeros((d, d, k), dtype=complex)
    o = 0
    for m in mods:
        s = slice(o, o + m.dim)
        action[s, :, s] = m.action
        inner[s, s, :] = m.inner_tensor
        o += m.dim
    return HilbertModule(alg, action, inner)


def change_basis(M: HilbertModule, S):
    """Same module in the basis given by the columns of the invertible matrix S."""
    S = np.asarray(S, dtype=complex)
    Si = np.linalg.inv(S)
    action = np.einsum("ai,abc,jc->ibj", S, M.action, Si, optimize=True)
    inner = np.einsum("ai,cj,acb->ijb", np.conj(S), S, M.inner_tensor, optimize=True)
    return HilbertModule(M.algebra, action, inner)


def random_module(alg: BlockAlgebra, rng, max_copies=2):
    """A random full module: a direct sum of column modules covering every block,
    in a random basis."""
    parts = [column_module(alg, j) for j in range(len(alg.blocks))]
    extra = rng.integers(0, max_copies)
    parts += [column_module(alg, int(rng.integers(len(alg.blocks)))) for _ in range(extra)]
    if rng.random() < 0.3:
        parts.append(standard_module(alg))
    M = direct_sum(*[parts[i] for i in rng.permutation(len(parts))])
    S = rng.standard_normal((M.dim, M.dim)) + 1j * rng.standard_normal((M.dim, M.dim))
    return change_basis(M, S + 2 * np.eye(M.dim))


def validate_module(M: HilbertModule, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Hilbert-module axioms on basis tuples, with exact positivity via the Gram matrix."""
    rep = ValidationReport("hilbert module", tol)
    alg = M.algebra
    T, J = alg.mult_tensor, alg.invol_matrix
    scale = 1.0 + np.abs(M.inner_tensor).max() * (1 + np.abs(M.action).max())
    # <e_i, e_j ◁ f_b> = <e_i, e_j> f_b
    lhs = np.einsum("jbl,ilc->ijbc", M.action, M.inner_tensor)
    rhs = np.einsum("ija,abc->ijbc", M.inner_tensor, T)
    rep.record("linear", np.abs(lhs - rhs).max() / scale, ("all",))
    # <e_i, e_j>^* = <e_j, e_i>
    adj = np.einsum("ija,ac->jic", np.conj(M.inner_tensor), J)
    rep.record("hermitian", np.abs(adj - M.inner_tensor).max() / scale, ("all",))
    # (m ◁ a) ◁ b = m ◁ (ab)
    lhs = np.einsum("iaj,jbk->iabk", M.action, M.action)
    rhs = np.einsum("abc,ick->iabk", T, M.action)
    rep.record("assoc", np.abs(lhs - rhs).max() / scale, ("all",))
    G = np.transpose(M.inner_tensor, (0, 1, 2))
    mats = inflate(G, alg)
    worst = min(np.linalg.eigvalsh((m + m.conj().T) / 2)[0] for m in mats)
    gscale = 1.0 + max(np.linalg.norm(m, 2) for m in mats)
    rep.record("positive", max(0.0, -worst) / gscale, ("gram",))
    w = np.linalg.eigvalsh(M.trace_gram)
    rep.check("definite", w[0] > tol * max(1.0, w[-1]), ("gram",))
    span = M.inner_tensor.reshape(-1, alg.dim)
    rep.check("full", _rank(span) == alg.dim, ("rank",))
    return rep


def _rank(A, tol=1e-9):
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int((s > tol * s[0]).sum()) if s[0] > 0 else 0


def nullspace(A, tol=DEFAULT_TOL, scale=0.0):
    """Orthonormal basis (columns) of the nullspace, thresholded at
    tol * max(sigma_max, scale); ``scale`` keeps roundoff from counting as rank."""
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n, dtype=complex)
    u, s, vh = np.linalg.svd(A)
    cut = tol * max(s[0] if s.size else 0.0, scale)
    if cut == 0:
        return np.eye(n, dtype=complex)
    rank = int((s > cut).sum())
    return vh[rank:].conj().T


class ModuleMapSpace:
    """B-linear maps source -> target, with an orthonormal (Frobenius) basis."""

    def __init__(self, source: HilbertModule, target: HilbertModule, basis):
        self.source = source
        self.target = target
        self.basis = np.asarray(basis, dtype=complex)     # (k, d_target, d_source)
        self._flat = self.basis.reshape(len(self.basis), -1)

    @property
    def dim(self):
        return len(self.basis)

    def coords(self, T):
        return self._flat.conj() @ np.asarray(T).reshape(-1)

    def element(self, c):
        return np.tensordot(c, self.basis, axes=1)

    def contains(self, T, tol=DEFAULT_TOL):
        T = np.asarray(T)
        r = T - self.element(self.coords(T))
        return np.linalg.norm(r) <= tol * (1.0 + np.linalg.norm(T))

    def __repr__(self):
        return f"ModuleMapSpace(dim={self.dim}, {self.source.dim} -> {self.target.dim})"


def rank_one(X: HilbertModule, Y: HilbertModule, x, y):
    """The map z -> x ◁ <y, z> from Y to X, as a d_X x d_Y matrix."""
    if X.algebra != Y.algebra:
        raise StructuralError("modules over different algebras")
    return np.einsum("i,ijk,l,lkm->mj", np.conj(y), Y.inner_tensor, x, X.action, optimize=True)


def rank_one_tensor(X: HilbertModule, Y: HilbertModule):
    """R[a, c] = rank_one(e_a, e_c) for all basis pairs: shape (d_X, d_Y, d_X, d_Y)."""
    return np.einsum("cjk,akm->acmj", Y.inner_tensor, X.action)


def compacts_space(Y: HilbertModule, X: HilbertModule, tol: float = DEFAULT_TOL) -> ModuleMapSpace:
    """All B-linear maps Y -> X, as the nullspace of T R_b - R_b T."""
    if X.algebra != Y.algebra:
        raise StructuralError("modules over different algebras")
    dX, dY = X.dim, Y.dim
    rows = []
    for RX, RY in zip(X.right_mats, Y.right_mats):
        # vec(T RY) - vec(RX T), row-major vec
        rows.append(np.kron(np.eye(dX), RY.T) - np.kron(RX, np.eye(dY)))
    scale = 1.0 + max(np.abs(X.action).max(initial=0.0), np.abs(Y.action).max(initial=0.0))
    N = nullspace(np.vstack(rows), tol, scale)
    basis = N.T.reshape(-1, dX, dY)
    space = ModuleMapSpace(Y, X, basis)
    R = rank_one_tensor(X, Y).reshape(dX * dY, dX * dY)
    if _rank(R, tol) != space.dim:
        raise ValueError("rank-one maps do not span the module-map space (module not full?)")
    return space


def adjoint_map(space: ModuleMapSpace, T, tol: float = DEFAULT_TOL):
    """Module adjoint S: X -> Y with <T n, m> = <n, S m>, by a B-valued solve."""
    X, Y = space.target, space.source
    T = np.asarray(T)
    # rhs[(i, b), j] = <T e_i, e_j>_b
    rhs = np.einsum("ki,kjb->ibj", np.conj(T), X.inner_tensor).reshape(-1, X.dim)
    A, Ainv = Y._adjoint_solver
    S = Ainv @ rhs
    res = np.linalg.norm(A @ S - rhs)
    if res > tol * 10 * (1.0 + np.linalg.norm(rhs)) * (1 + np.linalg.norm(A) * np.linalg.norm(Ainv)):
        raise ValueError(f"adjoint solve residual {res:.3e} exceeds tolerance")
    return S


def adjoint_weighted(space: ModuleMapSpace, T):
    """Oracle for the adjoint: P_Y^{-1} T^H P_X with P the trace Gram matrices."""
    PX, PY = space.target.trace_gram, space.source.trace_gram
    return np.linalg.solve(PY, np.asarray(T).conj().T @ PX)


def module_norm_op(M: HilbertModule, T):
    """Norm of an element of K(M) given that it is self-adjoint: spectral radius."""
    return float(np.abs(np.linalg.eigvals(T)).max()) if T.size else 0.0


def compacts_norm(space: ModuleMapSpace, T) -> float:
    """||T|| = ||T^* T||^{1/2}, with T^* T evaluated in K(source)."""
    T = np.asarray(T)
    if not np.any(T):
        return 0.0
    S = adjoint_map(space, T)
    return float(np.sqrt(module_norm_op(space.source, S @ T)))


def compacts_norm_weighted(space: ModuleMapSpace, T) -> float:
    """Oracle: operator norm in the faithful representation on (Y, tau<.,.>)."""
    def sqrtm(P):
        w, v = np.linalg.eigh(P)
        return (v * np.sqrt(w)) @ v.conj().T, (v / np.sqrt(w)) @ v.conj().T
    hx, _ = sqrtm(space.target.trace_gram)
    _, hy_inv = sqrtm(space.source.trace_gram)
    return float(np.linalg.norm(hx @ np.asarray(T) @ hy_inv, 2))


def norm_of_compacts_check(M: HilbertModule, xs):
    """(||sum_i |x_i><x_i| ||, ||sum_i <x_i, x_i>||): the two sides of the identity
    asserted for full modules.  Both are computed independently."""
    alg = M.algebra
    T = np.zeros((M.dim, M.dim), dtype=complex)
    a = alg.zero()
    for x in xs:
        T = T + rank_one(M, M, x, x)
        a = a + M.inner(x, x)
    if not len(xs):
        return 0.0, 0.0
    space = ModuleMapSpace(M, M, np.eye(M.dim * M.dim).reshape(-1, M.dim, M.dim))
    return compacts_norm(space, T), alg.norm(a)


def gram_matrix_norm(M: HilbertModule, xs):
    """||[<x_i, x_j>]|| in M_k(B): equals ||sum_i |x_i><x_i| || for any k."""
    k = len(xs)
    if not k:
        return 0.0
    G = np.array([[M.inner(x, y) for y in xs] for x in xs])
    return max(float(np.linalg.norm(m, 2)) for m in inflate(G, M.algebra))
