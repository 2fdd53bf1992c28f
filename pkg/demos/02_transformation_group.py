"""Z/4 acting on M_2 by conjugation, restricted to the subgroup {0, 2}.

The demi-equivalence M = A x X over B = A x| H yields, after the
construction, the semidirect bundle over the transformation groupoid
X x| X/H.  The uniqueness isomorphism sends [x, y] to (x y^-1, yH).
"""

import numpy as np

from fellbundles import fixture_transformation_group, groupoid as gpd, run_fixture
from fellbundles.applications import inner_action
from fellbundles.cstar import BlockAlgebra

m2 = BlockAlgebra([2])
alpha = inner_action(m2, [np.array([1, 0, 0, 1j ** x]) for x in range(4)])
f = fixture_transformation_group(gpd.cyclic_group(4), [0, 2], m2, alpha)
r = run_fixture(f)

print("cosets of H:", f.info["cosets"])
print("stages:")
for stage, (ok, res) in r.stages.items():
    print(f"  {stage:<24} {'ok' if ok else 'FAIL'}  residual {res:.2e}")
e = r.constructed
for g, (x, y) in enumerate(e.groupoid.rep):
    print(f"  [{x},{y}] -> arrow {r.base_map[g]} (formula {f.info['base_formula'][(x, y)]})")
print("passed:", r.passed)
