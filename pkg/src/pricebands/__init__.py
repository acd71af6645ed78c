"""Prior-predictive Monte Carlo price bands for data products."""

__version__ = "0.1.0"

from .deal_model import (  # noqa: E402
    CASE_STUDY_DEAL,
    LEVERS,
    SEMICONDUCTOR_NODE_TABLE,
    DealAttributes,
    FormulaParams,
    MultiplierVector,
    NodeTable,
    map_attributes,
)
from .engine import (  # noqa: E402
    PriceBands,
    PriceSampleSet,
    SimulationPlan,
    estimate_mean,
    estimate_quantiles,
    price_one,
    semi_analytic_median,
    simulate,
)
from .errors import (  # noqa: E402
    ConfigurationError,
    DomainError,
    PricingError,
    SamplingConflictError,
    SimulationError,
)
from .priors import ConstraintSet, ParameterVector, Predicate, PriorSpec, sample_governed  # noqa: E402

__all__ = [
    "CASE_STUDY_DEAL", "LEVERS", "SEMICONDUCTOR_NODE_TABLE", "DealAttributes", "FormulaParams",
    "MultiplierVector", "NodeTable", "map_attributes", "PriceBands", "PriceSampleSet",
    "SimulationPlan", "estimate_mean", "estimate_quantiles", "price_one", "semi_analytic_median",
    "simulate", "ConfigurationError", "DomainError", "PricingError", "SamplingConflictError",
    "SimulationError", "ConstraintSet", "ParameterVector", "Predicate", "PriorSpec", "sample_governed",
]
