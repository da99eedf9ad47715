"""posikit: simultaneous max-|t| constants and universally valid
post-selection confidence intervals for linear designs."""

from .constants import (
    BOUND,
    CLOSED_FORM,
    MONTE_CARLO,
    ConstantEstimate,
    ErrorModel,
    asymptotic_cap_constant,
    cap_bonferroni_bound,
    max_abs_t_draws,
    orth_constant,
    posi1_constant,
    posi_constant,
    scheffe_constant,
)
from .design import (
    CanonicalDesign,
    DesignMatrix,
    Direction,
    DirectionSet,
    ModelId,
    ModelUniverse,
    adjusted_predictor,
    canonicalize,
    direction_stream,
    enumerate_models,
    load_design,
    vif,
)
from .errors import DataError, InfeasibleError
from .families import (
    exchangeable_cosine,
    exchangeable_design,
    exchangeable_direction_formula,
    exchangeable_inverse_param,
    exchangeable_ratio_table,
    exhaustive_worst_posi1_stat,
    fast_worst_posi1_stat,
    rate_function,
    rate_function_max,
    worst_posi1_design,
    worst_posi1_table,
)
from .geometry import (
    CensusReport,
    DualityReport,
    PolytopeSpec,
    directions_match_up_to_sign,
    dual_design,
    orthogonality_census,
    polytope_contains,
    verify_duality,
)
from .inference import (
    CoverageResult,
    FitResult,
    IntervalReport,
    IntervalRow,
    TargetSpec,
    coverage_experiment,
    fit_submodel,
    make_best_r2_selector,
    make_spar1_selector,
    make_spar_selector,
    make_stepwise_selector,
    posi_intervals,
    spar1_select,
    spar_select,
    submodel_target,
    t_ratio,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
