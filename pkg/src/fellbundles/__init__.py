"""Finite Fell bundles over groupoids, demi-equivalences and their imprimitivity bundles."""

from .applications import (NamedFixture, fixture_kumjian, fixture_matrix, fixture_self,
                           fixture_transformation_group, run_fixture)
from .cstar import BlockAlgebra
from .demiequiv import (DemiEquivalence, derived_properties_check, random_demi_equivalence,
                        validate_demi)
from .fellbundle import FellBundle, random_fell_bundle, validate_fell_bundle
from .groupoid import FiniteGroupoid, ImprimitivityGroupoid, PrincipalAction
from .hilbmod import HilbertModule, norm_of_compacts_check
from .imprimitivity import (Equivalence, ImprimitivityFellBundle, build_imprimitivity_bundle,
                            construction_properties_check, uniqueness_iso, validate_equivalence)
from .report import StructuralError, ValidationReport

__version__ = "0.1.0"
