"""Stable model selection for conformal prediction sets."""

from .intervals import PredictionSet, weighted_majority
from .selection import (
    Prior,
    SelectionDistribution,
    SizeProfile,
    StabilityBudget,
    ada_minse,
    certificate_slack,
    derandomize,
    dominance_check,
    exponential_select,
    laplace_select,
    minimal_eta,
    minse,
    sample_selection,
    satisfies_certificate,
)
from .conformal import (
    AbsoluteResidualScore,
    AuxSelector,
    ConformalModel,
    EffectiveRankSequence,
    LabelGrid,
    ScaledResidualScore,
    build_aux_selector,
    calibrate,
    effective_ranks,
    recalibrated_rank,
    recalibrated_set,
    split_conformal_set,
)
from .online import (
    AciPredictor,
    AciState,
    AdaComaOutput,
    ComaWeights,
    OnlineRun,
    aci_step,
    adacoma_step,
    coma_aggregate,
    coma_update,
    run_online,
)
from .experiments import RunMetrics, Scenario, ScenarioParams, run_batch_scenario, run_online_scenario

__version__ = "0.1.0"
