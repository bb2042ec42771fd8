"""Reward recovery from demonstrations with selected polynomial features.

The pipeline: build quadratic candidate features of the state, estimate
trajectory log-probabilities with a Gaussian KDE over demonstrated states,
rank candidates by F-statistic against those log-probabilities, then run
maximum-entropy IRL (with a built-in CEM policy optimizer) on the selected
features. Classic control tasks are implemented from scratch so everything
runs with plain numpy.
"""

from .envs import (
    Continuous,
    Discrete,
    EnvId,
    EnvSpec,
    LinearFeatureReward,
    Trajectory,
    TrueReward,
    episode_return,
    make_spec,
    reset,
    rollout,
    step,
)
from .errors import (
    ConfigError,
    DataError,
    InputError,
    NumericalError,
    PolyIrlError,
)
from .features import (
    FeatureExtractor,
    FeatureStandardizer,
    dataset_feature_expectation,
    evaluate,
    make_candidate_extractor,
    reconstruct_moments,
    state_features,
    trajectory_features,
)
from .density import KdeModel, TrajectoryLabels, fit_kde, log_density, make_labels
from .selection import (
    FeatureScore,
    SelectionResult,
    score_features,
    select_top_k,
)
from .policy import (
    OptBudget,
    PolicyFeatureMode,
    PolicyKind,
    PolicyParams,
    make_policy,
    optimize_policy,
)
from .maxent import (
    IrlConfig,
    IrlResult,
    IrlTrace,
    RewardModel,
    apply_update,
    init_theta,
    run_irl,
)
from .metrics import (
    EvalReport,
    W2Result,
    evaluate_policy,
    project_states,
    visitation_distance,
    wasserstein_2d,
    write_results_csv,
)
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Continuous",
    "DataError",
    "Discrete",
    "EnvId",
    "EnvSpec",
    "EvalReport",
    "FeatureExtractor",
    "FeatureScore",
    "FeatureStandardizer",
    "InputError",
    "IrlConfig",
    "IrlResult",
    "IrlTrace",
    "KdeModel",
    "LinearFeatureReward",
    "NumericalError",
    "OptBudget",
    "PolicyFeatureMode",
    "PolicyKind",
    "PolicyParams",
    "PolyIrlError",
    "RewardModel",
    "SelectionResult",
    "Trajectory",
    "TrajectoryLabels",
    "TrueReward",
    "W2Result",
    "apply_update",
    "dataset_feature_expectation",
    "derive_seed",
    "episode_return",
    "evaluate",
    "evaluate_policy",
    "fit_kde",
    "init_theta",
    "log_density",
    "make_candidate_extractor",
    "make_labels",
    "make_policy",
    "make_spec",
    "optimize_policy",
    "project_states",
    "reconstruct_moments",
    "reset",
    "rollout",
    "run_irl",
    "score_features",
    "select_top_k",
    "state_features",
    "step",
    "trajectory_features",
    "visitation_distance",
    "wasserstein_2d",
    "write_results_csv",
]
