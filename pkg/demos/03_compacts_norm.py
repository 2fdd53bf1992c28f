"""Norms of finite sums of rank-one operators.

For a full Hilbert module M over B and vectors x_1..x_k, compare three numbers:

  lhs   = || sum_i |x_i><x_i| ||       in K(M)
  rhs   = || sum_i <x_i, x_i> ||       in B
  gram  = || [<x_i, x_j>]_{ij} ||      in M_k(B)

lhs always equals gram.  lhs = rhs fails in general: over C with the two
standard basis vectors of C^2 the left side is 1 and the right side is 2.
"""

import numpy as np

from fellbundles.cstar import BlockAlgebra
from fellbundles.hilbmod import gram_matrix_norm, norm_of_compacts_check, random_module, standard_module

C2 = standard_module(BlockAlgebra([1]), 2)
xs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
lhs, rhs = norm_of_compacts_check(C2, xs)
print(f"C^2, basis vectors: lhs={lhs:.6f} rhs={rhs:.6f} gram={gram_matrix_norm(C2, xs):.6f}")

rng = np.random.default_rng(0)
for blocks in [(1,), (2,), (1, 2)]:
    M = random_module(BlockAlgebra(blocks), rng)
    xs = [M.random(rng) for _ in range(3)]
    lhs, rhs = norm_of_compacts_check(M, xs)
    print(f"blocks {blocks}: lhs={lhs:.4f} rhs={rhs:.4f} gram={gram_matrix_norm(M, xs):.4f}")
