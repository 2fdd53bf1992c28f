"""Finite-dimensional C*-algebras as block matrix algebras.

Elements of ``BlockAlgebra((n1, ..., nk))`` are stored as coordinate vectors:
the blocks flattened row-major and concatenated, so the standard basis is the
set of matrix units.  ``wedderburn`` recovers such a basis for an abstract
finite-dimensional C*-algebra given only by structure tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .report import StructuralError

DEFAULT_TOL = 1e-9


class BlockAlgebra:
    """The algebra ⊕_j M_{n_j}(C) with matrix-unit coordinates."""

    def __init__(self, blocks):
        self.blocks = tuple(int(n) for n in blocks)
        if not self.blocks or min(self.blocks) < 1:
            raise StructuralError("block sizes must be positive integers")
        sizes = [n * n for n in self.blocks]
        self.offsets = tuple(np.concatenate([[0], np.cumsum(sizes)]).astype(int))
        self.dim = int(sum(sizes))

    def __eq__(self, other):
        return isinstance(other, BlockAlgebra) and self.blocks == other.blocks

    def __hash__(self):
        return hash(self.blocks)

    def __repr__(self):
        return f"BlockAlgebra({list(self.blocks)})"

    # -- coordinates ---------------------------------------------------------

    def to_blocks(self, a):
        a = np.asarray(a)
        return [a[..., o:o + n * n].reshape(a.shape[:-1] + (n, n))
                for o, n in zip(self.offsets, self.blocks)]

    def from_blocks(self, blocks):
        return np.concatenate([np.asarray(b, dtype=complex).reshape(np.shape(b)[:-2] + (-1,))
                               for b in blocks], axis=-1)

    def index(self, j, r, c):
        """Coordinate of the matrix unit e_{rc} in block j."""
        return self.offsets[j] + r * self.blocks[j] + c

    def element(self, data):
        return AlgebraElement(self, np.asarray(data, dtype=complex))

    def identity(self):
        return self.from_blocks([np.eye(n) for n in self.blocks])

    def zero(self):
        return np.zeros(self.dim, dtype=complex)

    def random(self, rng, hermitian=False):
        v = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        return (v + self.star(v)) / 2 if hermitian else v

    # -- arithmetic ----------------------------------------------------------

    def mul(self, a, b):
        return self.from_blocks([x @ y for x, y in zip(self.to_blocks(a), self.to_blocks(b))])

    def star(self, a):
        return self.from_blocks([np.conj(np.swapaxes(x, -1, -2)) for x in self.to_blocks(a)])

    def norm(self, a):
        return float(self.norms(a))

    def norms(self, a):
        """C*-norms of a stack of elements (leading axes are batch axes)."""
        out = None
        for x in self.to_blocks(a):
            if x.shape[-1] == 1:
                v = np.abs(x[..., 0, 0])
            else:
                v = np.linalg.svd(x, compute_uv=False)[..., 0]
            out = v if out is None else np.maximum(out, v)
        return out

    @cached_property
    def mult_tensor(self):
        """T[i, j, k] with e_i e_j = sum_k T[i, j, k] e_k."""
        d = self.dim
        t = np.zeros((d, d, d))
        for j, n in enumerate(self.blocks):
            for r in range(n):
                for c in range(n):
                    for c2 in range(n):
                        t[self.index(j, r, c), self.index(j, c, c2), self.index(j, r, c2)] = 1.0
        t.setflags(write=False)
        return t

    @cached_property
    def invol_matrix(self):
        """J with (a*)_k = sum_i conj(a_i) J[i, k]: e_{rc} -> e_{cr}."""
        d = self.dim
        J = np.zeros((d, d))
        for j, n in enumerate(self.blocks):
            for r in range(n):
                for c in range(n):
                    J[self.index(j, r, c), self.index(j, c, r)] = 1.0
        J.setflags(write=False)
        return J

    def trace(self, a):
        """Faithful positive trace: sum of the block traces."""
        return sum(np.trace(x, axis1=-2, axis2=-1) for x in self.to_blocks(a))

    def min_eig(self, a):
        """Smallest eigenvalue of the Hermitian part."""
        return min(float(np.linalg.eigvalsh((x + x.conj().T) / 2)[0]) for x in self.to_blocks(a))


@dataclass(frozen=True)
class AlgebraElement:
    parent: BlockAlgebra
    data: np.ndarray

    def __add__(self, other):
        return AlgebraElement(self.parent, self.data + other.data)

    def __sub__(self, other):
        return AlgebraElement(self.parent, self.data - other.data)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return AlgebraElement(self.parent, self.parent.mul(self.data, other.data))
        return AlgebraElement(self.parent, self.data * other)

    __rmul__ = __mul__

    def __neg__(self):
        return AlgebraElement(self.parent, -self.data)

    def star(self):
        return AlgebraElement(self.parent, self.parent.star(self.data))

    def blocks(self):
        return self.parent.to_blocks(self.data)


def operator_norm(a: AlgebraElement) -> float:
    """C*-norm: the largest singular value over all blocks."""
    return a.parent.norm(a.data)


def is_positive(a: AlgebraElement, tol: float = DEFAULT_TOL) -> bool:
    alg, v = a.parent, a.data
    scale = 1.0 + alg.norm(v)
    if alg.norm(v - alg.star(v)) > tol * scale:
        return False
    return alg.min_eig(v) >= -tol * scale


def inflate(G, alg: BlockAlgebra):
    """Realize a k x k matrix over ``alg`` (array (k, k, dim)) as one matrix per block."""
    G = np.asarray(G, dtype=complex)
    k = G.shape[0]
    out = []
    for blk in alg.to_blocks(G):            # (k, k, n, n)
        n = blk.shape[-1]
        out.append(blk.transpose(0, 2, 1, 3).reshape(k * n, k * n))
    return out


def deflate(mats, alg: BlockAlgebra, k):
    blocks = [m.reshape(k, n, k, n).transpose(0, 2, 1, 3) for m, n in zip(mats, alg.blocks)]
    return alg.from_blocks(blocks)


def gram_factorize(G, alg: BlockAlgebra, tol: float = DEFAULT_TOL):
    """Return b (k x k over alg) with G_ij = sum_l b_il b_jl^*.

    G must be positive in M_k(alg); b is its positive square root, computed
    blockwise on the inflated matrix.
    """
    G = np.asarray(G, dtype=complex)
    k = G.shape[0]
    mats = inflate(G, alg)
    roots = []
    for m in mats:
        scale = 1.0 + np.linalg.norm(m, 2)
        if np.linalg.norm(m - m.conj().T, 2) > tol * scale:
            raise ValueError("Gram matrix is not self-adjoint")
        w, v = np.linalg.eigh((m + m.conj().T) / 2)
        if w.min(initial=0.0) < -tol * scale:
            raise ValueError(f"Gram matrix is not positive (eigenvalue {w.min():.3e})")
        roots.append((v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T)
    return deflate(roots, alg, k)


def gram_residual(G, b, alg: BlockAlgebra):
    """max-norm of G - b b^* (matrix product over alg)."""
    mats_g, mats_b = inflate(G, alg), inflate(b, alg)
    return max(float(np.abs(g - x @ x.conj().T).max()) for g, x in zip(mats_g, mats_b))


# -- structure recovery -------------------------------------------------------

def left_regular(mult):
    """L[i] is the matrix of left multiplication by e_i: L[i][k, j] = mult[i, j, k]."""
    return np.transpose(mult, (0, 2, 1))


def algebra_unit(mult, tol=1e-7):
    """Solve for the identity element of an algebra given by structure constants."""
    d = mult.shape[0]
    # e * e_j = e_j for all j: sum_i e_i mult[i, j, :] = e_j
    A = np.transpose(mult, (1, 2, 0)).reshape(d * d, d)
    rhs = np.eye(d).reshape(-1)
    e, *_ = np.linalg.lstsq(A, rhs.astype(complex), rcond=None)
    if np.linalg.norm(A @ e - rhs) > tol * (1 + np.linalg.norm(A) * np.linalg.norm(e)):
        raise ValueError("algebra has no unit")
    return e


def _mul(mult, a, b):
    return np.einsum("i,j,ijk->k", a, b, mult)


def _star(J, a):
    return np.conj(a) @ J


def _null(A, tol, scale=0.0):
    """Nullspace with threshold tol * max(sigma_max, scale); ``scale`` keeps an
    all-roundoff matrix from being read as full rank."""
    if A.shape[0] == 0:
        return np.eye(A.shape[1], dtype=complex)
    u, s, vh = np.linalg.svd(A)
    cut = tol * max(s[0] if s.size else 0.0, scale)
    rank = int((s > cut).sum())
    return vh[rank:].conj().T


def _clusters(w, tol):
    """Group sorted eigenvalues into clusters of nearly equal values."""
    groups, cur = [], [0]
    for i in range(1, len(w)):
        if abs(w[i] - w[cur[-1]]) <= tol:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return groups


def wedderburn(mult, J, tol=1e-8, seed=0):
    """Find a matrix-unit basis of a finite-dimensional C*-algebra.

    ``mult`` is (d, d, d) and ``J`` the involution matrix.  Returns
    ``(blocks, C)`` where the columns of C are the matrix units in the given
    coordinates, ordered as BlockAlgebra(blocks) orders them (old = C @ new).
    """
    mult = np.asarray(mult, dtype=complex)
    d = mult.shape[0]
    rng = np.random.default_rng(seed)
    one = algebra_unit(mult)
    L = left_regular(mult)
    trL = np.einsum("ikk->i", L)
    # <a, b> = tr(L_{a* b}) is a faithful positive inner product; e_i^* = J[i, :]
    Q = np.einsum("iq,qjk,k->ij", J, mult, trL, optimize=True)
    Q = (Q + Q.conj().T) / 2
    w, V = np.linalg.eigh(Q)
    if w.min() <= 0:
        raise ValueError("trace form is not positive definite: not a C*-algebra")
    W = V / np.sqrt(w)                          # columns: orthonormal basis
    Winv = np.linalg.inv(W)

    def in_ortho(op):                           # operator on coordinates -> orthonormal frame
        return Winv @ op @ W

    def lmat(a):
        return np.einsum("i,ikj->kj", a, L)

    # centre: z with z e_i = e_i z
    comm = (np.einsum("jik->ikj", mult) - np.einsum("ijk->ikj", mult)).reshape(d * d, d)
    Z = _null(comm, 1e-10, np.abs(mult).max())
    c = Z @ (rng.standard_normal(Z.shape[1]) + 1j * rng.standard_normal(Z.shape[1]))
    h = c + _star(J, c)
    Lh = in_ortho(lmat(h))
    Lh = (Lh + Lh.conj().T) / 2
    ev, EV = np.linalg.eigh(Lh)
    spread = max(1.0, np.abs(ev).max())
    central = []
    for grp in _clusters(ev, 1e-6 * spread):
        P = EV[:, grp] @ EV[:, grp].conj().T    # spectral projection in orthonormal frame
        p = W @ (P @ (Winv @ one))
        central.append((p, len(grp)))
    blocks, columns = [], []
    for p, mlt in central:
        n = int(round(np.sqrt(mlt)))
        if n * n != mlt:
            raise ValueError("central summand dimension is not a square")
        # orthonormal frame of the summand A p = range(L_p)
        Lp = in_ortho(lmat(p))
        Lp = (Lp + Lp.conj().T) / 2
        lw, lv = np.linalg.eigh(Lp)
        Vp = lv[:, lw > 0.5]
        x = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        hx = _mul(mult, x + _star(J, x), p)
        Lx = Vp.conj().T @ in_ortho(lmat(hx)) @ Vp
        Lx = (Lx + Lx.conj().T) / 2
        xv, XV = np.linalg.eigh(Lx)
        groups = _clusters(xv, 1e-7 * max(1.0, np.abs(xv).max()))
        if len(groups) != n or any(len(g) != n for g in groups):
            raise ValueError("could not separate minimal projections")
        punit = Winv @ p
        es = []
        for g in groups:
            P = Vp @ XV[:, g] @ XV[:, g].conj().T @ Vp.conj().T
            es.append(W @ (P @ punit))
        # E_1j = e_1 y e_j normalized
        units = {}
        units[(0, 0)] = es[0]
        for j in range(1, n):
            y = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            e1j = _mul(mult, _mul(mult, es[0], y), es[j])
            ee = _mul(mult, _star(J, e1j), e1j)     # = lam * e_j
            lam = np.vdot(es[j], ee) / np.vdot(es[j], es[j])
            units[(0, j)] = e1j / np.sqrt(lam.real)
        for i in range(n):
            for j in range(n):
                if i == 0:
                    continue
                units[(i, j)] = _mul(mult, _star(J, units[(0, i)]), units[(0, j)])
        blocks.append(n)
        columns += [units[(r, c_)] for r in range(n) for c_ in range(n)]
    C = np.array(columns).T
    return tuple(blocks), C
