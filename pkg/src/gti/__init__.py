"""Generalized thermodynamic integration for posterior expectations.

The package estimates ``E[f]`` under an unnormalized posterior by
integrating along tempered paths between the posterior and ``|f|``-weighted
versions of it, with standard thermodynamic integration, self-normalized
importance sampling and bridge sampling available for comparison.
"""

__version__ = "0.1.0"

from .baselines import BridgeResult, bridge_from_log_ratios, bridge_from_logs, bridge_sampling, snis, snis_signed
from .density import (
    EvalCounter,
    LogDensity,
    SignedFunction,
    TargetProblem,
    TemperedPath,
    branch_path,
    eval_log_density,
    restrict,
    tempered_log_density,
)
from .errors import (
    ConfigurationError,
    DegenerateFunctionError,
    DomainError,
    EstimationError,
    GTIError,
    InitializationError,
    MetricError,
    OracleResolutionError,
    OverflowEstimateError,
    UndersampledBranchError,
)
from .estimators import (
    GtiConfig,
    GtiResult,
    combine_signed,
    correction_factors,
    gti,
    gti_generic,
    gti_many,
    gti_positive,
    gti_vector,
    node_expectation,
    sample_abs_split,
    ti_log_evidence,
)
from .ladder import Ladder, left_riemann, make_schedule, trapezoid
from .mcmc import ChainConfig, ChainOutput, ProposalSpec, filter_by_support, mh_step, run_chain
from .models import BananaModel, ConjugateNormalModel, ExactGaussianSampler, GaussianModel, banana_truth
from .samplers import MetropolisSampler
from .signed import SignedLogValue
