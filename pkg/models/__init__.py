"""
Models package initialization
"""
from .data_models import (
    UtilityFamily,
    MarketError,
    DistortionRequiredError,
    PrimalInfeasibleError,
    NumericalInstabilityError,
    ObjectSpec,
    UtilitySpec,
    Agent,
    AgentForm,
    Market,
    ObjectTable,
    Bundle,
    ExcessDemand,
    ValidationIssue,
    ValidationReport
)
from .report_models import (
    RunConfig,
    Trace,
    TraceBuilder,
    RunResult,
    DualEvaluation,
    TildeVector,
    EquilibriumReport,
    BoundsEstimate,
    ApproxEquilibriumReport,
    InvariantCheck,
    InvariantReport,
    MWUCertificate,
    RateFit,
    UniformityFit,
    RelaxedPrimalReport
)

__all__ = [
    'UtilityFamily',
    'MarketError',
    'DistortionRequiredError',
    'PrimalInfeasibleError',
    'NumericalInstabilityError',
    'ObjectSpec',
    'UtilitySpec',
    'Agent',
    'AgentForm',
    'Market',
    'ObjectTable',
    'Bundle',
    'ExcessDemand',
    'ValidationIssue',
    'ValidationReport',
    'RunConfig',
    'Trace',
    'TraceBuilder',
    'RunResult',
    'DualEvaluation',
    'TildeVector',
    'EquilibriumReport',
    'BoundsEstimate',
    'ApproxEquilibriumReport',
    'InvariantCheck',
    'InvariantReport',
    'MWUCertificate',
    'RateFit',
    'UniformityFit',
    'RelaxedPrimalReport'
]
