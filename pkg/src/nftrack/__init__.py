"""Near-field pose tracking with a hybrid large-array receiver.

Simulator library for tracking the position and heading of a multi-antenna
mobile station from analog-combined uplink snapshots: spherical-wavefront
channel model, CTRV dynamics, information-form EKF with predictive analog
combining, Fisher-information/Bayesian-CRB analysis, and a reproducible
Monte Carlo campaign harness.
"""

__version__ = "0.1.0"

from .dynamics import MsState, ProcessNoiseSpec, ctrv_jacobian, ctrv_transition
from .errors import (
    AssumptionViolated,
    ConfigError,
    DegenerateGeometry,
    DegenerateJacobian,
    FilterDiverged,
    NfTrackError,
    RankDeficientCombiner,
    SingularPriorCovariance,
)
from .estimation import Belief, Combiner, ekf_predict, ekf_update, fim, row_space_projection, score
from .geometry import (
    ArrayConfig,
    ChannelDerivatives,
    GeometrySummary,
    Pose,
    channel_derivatives,
    channel_derivatives_asymptotic,
    channel_matrix,
    geometry_summary,
    pair_distance,
)
from .information import (
    AvgFisher,
    BayesianFimState,
    avg_fisher,
    bayesian_fim_init,
    bayesian_fim_step,
    bcrb,
    expected_fim,
    fisher_scaling_bounds,
)
from .combiners import (
    CombinerSpec,
    QomPlan,
    combiner_fd,
    combiner_mo,
    combiner_qom,
    combiner_random,
    combiner_svd_pe,
    qom_plan,
    qom_resolution,
    qom_vector,
)
from .observation import Observation, Pilot, generate_pilot, observation_jacobian, observe
from .harness import (
    CampaignResult,
    ScenarioConfig,
    TrialRecord,
    load_config,
    metrics_nmse,
    metrics_rmse,
    run_campaign,
    run_trial,
)

__all__ = [name for name in dir() if not name.startswith("_")]
