"""Maximum-entropy IRL over selected polynomial state features.

Each epoch: build a reward from the current weights, improve the policy
against that reward (warm-started from the previous epoch), collect
stochastic rollouts, and move the weights along the feature-expectation
gap `mu_expert - mu_agent`. Features are standardized per state using the
pooled expert states, which makes the expert expectation (numerically)
zero and keeps the update well-scaled across tasks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .envs import EnvSpec, LinearFeatureReward, Trajectory, rollout
from .errors import InputError, NumericalError, PolyIrlError
from .features import (
    FeatureExtractor,
    FeatureStandardizer,
    dataset_feature_expectation,
    make_candidate_extractor,
    state_features,
)
from .policy import OptBudget, PolicyParams, make_policy, optimize_policy
from .seeding import derive_seed
from .selection import SelectionResult


@dataclass(eq=False)
class RewardModel:
    """Linear reward theta^T phi_std(s) over selected, standardized features.

    phi_std(s) = (phi_sel(s) - mean) / scale with the standardizer fitted on
    pooled expert states. `theta_raw` maps back to unstandardized feature
    coefficients (the bias from centering does not affect reward ordering).
    """

    theta: np.ndarray
    extractor: FeatureExtractor
    standardizer: FeatureStandardizer

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        k = self.extractor.n_active
        if self.theta.shape != (k,):
            raise InputError(f"theta must have shape ({k},), got {self.theta.shape}")
        if self.standardizer.mean.shape != (k,):
            raise InputError("standardizer does not match the active feature count")
        self._w = self.theta / self.standardizer.scale
        self._bias = -float(self._w @ self.standardizer.mean)

        d = self.extractor.state_dim
        active = (
            np.arange(self.extractor.n_candidates)
            if self.extractor.selected_mask is None
            else self.extractor.selected_mask
        )
        quad = active >= d
        a_idx = np.empty(k, dtype=np.intp)
        a_idx[~quad] = active[~quad]
        qpos = active[quad] - d
        a_idx[quad] = self.extractor.quad_i[qpos]
        self._a_idx = a_idx
        self._quad_pos = np.flatnonzero(quad)
        self._b_sel = self.extractor.quad_j[qpos]

    def reward_at(self, state: np.ndarray) -> float:
        s = np.asarray(state)
        v = s[self._a_idx]
        if len(self._quad_pos):
            v = v.copy()
            v[self._quad_pos] *= s[self._b_sel]
        return float(self._w @ v + self._bias)

    @property
    def theta_raw(self) -> np.ndarray:
        """Coefficients on the unstandardized selected features."""
        return self.theta / self.standardizer.scale

    @property
    def term_names(self) -> list[str]:
        return self.extractor.active_term_names


@dataclass
class IrlConfig:
    epochs: int
    learning_rate: float
    lr_decay: float
    n_rollouts: int
    rl_budget: OptBudget
    seed: int

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise InputError("lr_decay must lie in (0, 1]")
        if self.n_rollouts < 1:
            raise InputError("n_rollouts must be >= 1")


@dataclass
class IrlEpochRecord:
    epoch: int
    alpha: float
    grad_norm: float
    mean_true_return: float
    theta: np.ndarray
    wall_seconds: float


@dataclass
class IrlTrace:
    records: list[IrlEpochRecord] = field(default_factory=list)

    def as_rows(self) -> list[dict]:
        """Rows for the trace CSV; theta and timing stay in memory only."""
        return [
            {
                "epoch": r.epoch,
                "grad_norm": r.grad_norm,
                "mean_true_return": r.mean_true_return,
                "alpha": r.alpha,
            }
            for r in self.records
        ]


@dataclass
class IrlResult:
    reward: RewardModel
    policy: PolicyParams
    trace: IrlTrace
    mu_expert: np.ndarray


def init_theta(k: int, seed: int) -> np.ndarray:
    """Uniform[-1, 1) initial weights, reproducible from the seed."""
    rng = np.random.default_rng(derive_seed(seed, "theta-init"))
    return rng.uniform(-1.0, 1.0, size=k)


def apply_update(
    theta: np.ndarray, mu_expert: np.ndarray, mu_agent: np.ndarray, alpha: float
) -> np.ndarray:
    """One gradient-ascent step on the MaxEnt objective."""
    return theta + alpha * (mu_expert - mu_agent)


def _resolve_extractor(
    state_dim: int, selection: SelectionResult | Sequence[int] | None
) -> FeatureExtractor:
    base = make_candidate_extractor(state_dim)
    if selection is None:
        return base
    if isinstance(selection, SelectionResult):
        return base.with_mask(selection.selected_indices)
    return base.with_mask(np.asarray(list(selection), dtype=np.intp))


def fit_standardizer(
    extractor: FeatureExtractor, dataset: list[Trajectory]
) -> FeatureStandardizer:
    pooled = np.vstack([t.states for t in dataset])
    return FeatureStandardizer.fit(state_features(extractor, pooled))


def irl_epoch(
    spec: EnvSpec,
    reward: RewardModel,
    policy: PolicyParams,
    mu_expert: np.ndarray,
    cfg: IrlConfig,
    epoch: int,
) -> tuple[np.ndarray, PolicyParams, IrlEpochRecord]:
    """One IRL iteration; returns (updated theta, improved policy, record)."""
    t0 = time.perf_counter()
    budget = replace(cfg.rl_budget, seed=derive_seed(cfg.seed, "policy-opt", epoch))
    policy = optimize_policy(spec, LinearFeatureReward(reward), policy, budget)

    rollouts = [
        rollout(
            spec,
            policy,
            LinearFeatureReward(reward),
            derive_seed(cfg.seed, "collect", epoch * cfg.n_rollouts + i),
        )
        for i in range(cfg.n_rollouts)
    ]
    mu_agent = dataset_feature_expectation(
        reward.extractor, rollouts, reward.standardizer
    ).values
    mean_true_return = float(np.mean([t.true_return for t in rollouts]))

    grad = mu_expert - mu_agent
    grad_norm = float(np.linalg.norm(grad))
    if not np.isfinite(grad_norm):
        raise NumericalError(f"epoch {epoch}: feature-expectation gap is non-finite")
    alpha = cfg.learning_rate * cfg.lr_decay**epoch
    theta_new = apply_update(reward.theta, mu_expert, mu_agent, alpha)
    record = IrlEpochRecord(
        epoch=epoch,
        alpha=alpha,
        grad_norm=grad_norm,
        mean_true_return=mean_true_return,
        theta=theta_new.copy(),
        wall_seconds=time.perf_counter() - t0,
    )
    return theta_new, policy, record


def run_irl(
    spec: EnvSpec,
    dataset: list[Trajectory],
    selection: SelectionResult | Sequence[int] | None,
    cfg: IrlConfig,
) -> IrlResult:
    """Full IRL loop. On a mid-run failure the raised error carries the
    partial trace as `err.partial_trace`."""
    if len(dataset) < 1:
        raise InputError("IRL requires at least one expert trajectory")
    extractor = _resolve_extractor(spec.state_dim, selection)
    standardizer = fit_standardizer(extractor, dataset)
    mu_expert = dataset_feature_expectation(extractor, dataset, standardizer).values

    theta = init_theta(extractor.n_active, cfg.seed)
    policy = make_policy(spec)
    trace = IrlTrace()
    try:
        for epoch in range(cfg.epochs):
            reward = RewardModel(theta, extractor, standardizer)
            theta, policy, record = irl_epoch(
                spec, reward, policy, mu_expert, cfg, epoch
            )
            trace.records.append(record)
    except PolyIrlError as err:
        err.partial_trace = trace
        raise
    except Exception as err:  # numeric blow-ups from numpy land here
        wrapped = NumericalError(f"IRL epoch {len(trace.records)} failed: {err}")
        wrapped.partial_trace = trace
        raise wrapped from err
    return IrlResult(
        reward=RewardModel(theta, extractor, standardizer),
        policy=policy,
        trace=trace,
        mu_expert=mu_expert,
    )
