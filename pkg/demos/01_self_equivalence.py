"""A Fell bundle is equivalent to itself.

Take a random saturated Fell bundle B over a finite groupoid H, view B as a
demi-equivalence over itself, build the imprimitivity bundle K(M) and match it
against B acting on itself by left multiplication.
"""

from fellbundles import (build_imprimitivity_bundle, fixture_self, random_fell_bundle,
                         uniqueness_iso, validate_equivalence, validate_fell_bundle)
from fellbundles.fellbundle import BundleProfile

fb = random_fell_bundle(2024, BundleProfile(max_fibre_dim=3, max_arrows=6))
print("bundle:", fb)
print("fibre dimensions:", fb.dims)
print(validate_fell_bundle(fb).to_text())

f = fixture_self(fb)
e = build_imprimitivity_bundle(f.demi)
print("\nconstructed base groupoid:", e.base)
print("class representatives:", e.groupoid.rep)
print("constructed fibre dimensions:", e.bundle.dims)
print(validate_equivalence(e).to_text())

iso = uniqueness_iso(e, f.expected)
print("\nbase map [x, y] -> arrow of H:", iso.base_map.tolist())
print(iso.report.to_text())
