"""K-frames and K-fusion frames in finite dimensions.

Optimal bounds, restricted inverses, K-duals, fusion multipliers and their
K-inverses, with seeded property checks and a command-line front end.
"""

from .errors import DiagnosticError, KFusionError, NotAKFrameError, PreconditionError, ValidationError
from .fusion import (
    FusionAnalysis,
    canonical_kdual_fusion,
    fusion_analyze,
    kstar_lower_bound_check,
    lemma_v_residual,
    local_dual_identities,
    local_to_global,
    map_family,
    reconstruct,
    verify_kdual_fusion,
)
from .harness import VerificationReport, oracle_rayleigh_min, run_suite
from .kframes import KFrameAnalysis, canonical_kdual_vec, kframe_analyze, verify_kdual_vec
from .multipliers import (
    MultiplierSpec,
    build_multiplier,
    composition_check,
    factorization_check,
    invertibility_check,
    k_side_inverse,
    onb_composition_check,
    ordinary_multiplier,
)
from .numerics import DEFAULT_TOL, RangedOperator, Tolerances, douglas_check, optimal_lower_bound
from .spaces import Instance, Subspace, VectorFamily, WeightedFamily, make_subspace, random_instance

__version__ = "0.1.0"
