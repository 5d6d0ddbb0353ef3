"""Unbiased estimation of expectations with coupled, randomized-level underdamped Langevin chains."""

from .coupling import CoupledDraw, PairedCoupledDraw, reflection_max_coupling, sync_pairwise_reflection_coupling
from .dynamics import (
    DynamicsParams, GaussianStepParams, LevelParams, NoisePath, PhaseState,
    apply_kernel, euler_step, transition_params,
)
from .errors import (
    ConfigError, DegenerateTransitionError, DimensionError, FitError, NonMeetingError, NumericalError,
)
from .estimator import (
    EstimatorConfig, ReplicateResult, average_replicates, run_increment_quad,
    run_single_level_pair, sample_level, unbiased_replicate,
)
from .kernels import CoupledPair, QuadState
from .models import (
    CallableModel, DoubleWellModel, GaussianModel, GinzburgLandauModel,
    LogisticRegressionModel, TargetModel, build_model, make_logistic_model,
)
from .streams import CountingStream

__version__ = "0.1.0"
