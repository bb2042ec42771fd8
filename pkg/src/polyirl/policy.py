"""Stochastic policies and derivative-free / policy-gradient optimizers.

Policies are linear maps from a state feature vector (raw state or the full
quadratic candidate basis, plus a bias) to action logits (discrete) or to a
Gaussian mean action (continuous). The default optimizer is the
cross-entropy method with elitism; a vanilla Reinforce with return baselines
is available as an alternative. Both evaluate candidates by mean discounted
return over seeded episodes that are shared within an iteration (common
random numbers) and advance across iterations, so optimization is fully
reproducible without overfitting a small set of initial conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .envs import Continuous, Discrete, EnvSpec, RewardFn, episode_return
from .errors import InputError, NumericalError
from .seeding import derive_seed

LOG_STD_MIN = math.log(1e-3)
LOG_STD_MAX = math.log(10.0)


class PolicyKind(str, Enum):
    LINEAR_SOFTMAX = "linear_softmax"
    LINEAR_GAUSSIAN = "linear_gaussian"


class PolicyFeatureMode(str, Enum):
    RAW_STATE = "raw_state"
    CANDIDATE_POLYNOMIAL = "candidate_polynomial"


@lru_cache(maxsize=None)
def _quad_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(d)


def policy_feature_dim(state_dim: int, mode: PolicyFeatureMode) -> int:
    if mode is PolicyFeatureMode.RAW_STATE:
        return state_dim + 1
    return state_dim + state_dim * (state_dim + 1) // 2 + 1


@dataclass
class PolicyParams:
    """Linear policy parameters; immutable by convention once optimized.

    `feature_scale` divides the state before the polynomial expansion so
    every policy feature has roughly unit range; it is a fixed constant per
    task (from known state magnitudes), not a fitted quantity.
    """

    kind: PolicyKind
    weights: np.ndarray  # (n_actions | action_dim, n_policy_features)
    feature_mode: PolicyFeatureMode
    state_dim: int
    log_std: np.ndarray | None = None  # continuous only
    action_lo: np.ndarray | None = None
    action_hi: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = policy_feature_dim(self.state_dim, self.feature_mode)
        if self.weights.ndim != 2 or self.weights.shape[1] != expected:
            raise InputError(
                f"weights must have shape (*, {expected}), got {self.weights.shape}"
            )
        if self.feature_scale is not None:
            self.feature_scale = np.asarray(self.feature_scale, dtype=np.float64)
            if self.feature_scale.shape != (self.state_dim,) or np.any(
                self.feature_scale <= 0
            ):
                raise InputError("feature_scale must be positive with one entry per state dim")
        if self.kind is PolicyKind.LINEAR_GAUSSIAN:
            if self.log_std is None:
                raise InputError("continuous policy requires log_std")
            self.log_std = np.clip(
                np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX
            )
            if self.log_std.shape != (self.weights.shape[0],):
                raise InputError("log_std must have one entry per action dimension")

    def policy_features(self, state: np.ndarray) -> np.ndarray:
        s = np.asarray(state, dtype=np.float64)
        if self.feature_scale is not None:
            s = s / self.feature_scale
        if self.feature_mode is PolicyFeatureMode.RAW_STATE:
            return np.append(s, 1.0)
        qi, qj = _quad_indices(self.state_dim)
        f = np.empty(self.weights.shape[1])
        d = self.state_dim
        f[:d] = s
        f[d:-1] = s[qi] * s[qj]
        f[-1] = 1.0
        return f

    def act(
        self, state: np.ndarray, rng: np.random.Generator, deterministic: bool = False
    ):
        f = self.policy_features(state)
        if self.kind is PolicyKind.LINEAR_SOFTMAX:
            logits = self.weights @ f
            if deterministic:
                return int(np.argmax(logits))
            logits = logits - logits.max()
            probs = np.exp(logits)
            probs /= probs.sum()
            return int(np.searchsorted(np.cumsum(probs), rng.random()))
        mean = self.weights @ f
        if not deterministic:
            mean = mean + np.exp(self.log_std) * rng.standard_normal(len(mean))
        if self.action_lo is not None:
            mean = np.clip(mean, self.action_lo, self.action_hi)
        return mean

    def action_distribution(self, state: np.ndarray) -> np.ndarray:
        """Softmax action probabilities (discrete policies only)."""
        if self.kind is not PolicyKind.LINEAR_SOFTMAX:
            raise InputError("action_distribution is defined for discrete policies")
        logits = self.weights @ self.policy_features(state)
        logits = logits - logits.max()
        probs = np.exp(logits)
        return probs / probs.sum()

    def copy(self) -> "PolicyParams":
        return replace(
            self,
            weights=self.weights.copy(),
            log_std=None if self.log_std is None else self.log_std.copy(),
        )

    def to_json_dict(self) -> dict:
        def opt(arr):
            return None if arr is None else np.asarray(arr).tolist()

        return {
            "kind": self.kind.value,
            "feature_mode": self.feature_mode.value,
            "state_dim": self.state_dim,
            "weights": self.weights.tolist(),
            "log_std": opt(self.log_std),
            "action_lo": opt(self.action_lo),
            "action_hi": opt(self.action_hi),
            "feature_scale": opt(self.feature_scale),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "PolicyParams":
        def opt(x):
            return None if x is None else np.asarray(x, dtype=np.float64)

        return PolicyParams(
            kind=PolicyKind(d["kind"]),
            weights=np.asarray(d["weights"], dtype=np.float64),
            feature_mode=PolicyFeatureMode(d["feature_mode"]),
            state_dim=int(d["state_dim"]),
            log_std=opt(d.get("log_std")),
            action_lo=opt(d.get("action_lo")),
            action_hi=opt(d.get("action_hi")),
            feature_scale=opt(d.get("feature_scale")),
        )


_FEATURE_SCALES = {
    # rough state magnitudes; velocities dominate unscaled quadratics
    "pendulum": np.array([1.0, 1.0, 8.0]),
    "cartpole": np.array([2.4, 2.0, 0.21, 2.0]),
    "acrobot": np.array([1.0, 1.0, 1.0, 1.0, 4.0 * math.pi, 9.0 * math.pi]),
    "double_integrator": np.array([1.0, 1.0]),
}


def make_policy(
    spec: EnvSpec,
    feature_mode: PolicyFeatureMode = PolicyFeatureMode.CANDIDATE_POLYNOMIAL,
    init_log_std: float = -0.5,
) -> PolicyParams:
    """Zero-initialized policy matching the spec's action space."""
    p = policy_feature_dim(spec.state_dim, feature_mode)
    space = spec.action_space
    scale = _FEATURE_SCALES.get(spec.env_id.value)
    if isinstance(space, Discrete):
        return PolicyParams(
            kind=PolicyKind.LINEAR_SOFTMAX,
            weights=np.zeros((space.n, p)),
            feature_mode=feature_mode,
            state_dim=spec.state_dim,
            feature_scale=scale,
        )
    return PolicyParams(
        kind=PolicyKind.LINEAR_GAUSSIAN,
        weights=np.zeros((1, p)),
        feature_mode=feature_mode,
        state_dim=spec.state_dim,
        log_std=np.array([init_log_std]),
        action_lo=np.array([space.lo]),
        action_hi=np.array([space.hi]),
        feature_scale=scale,
    )


@dataclass
class OptBudget:
    """Policy-optimization budget; `method` is "cem" or "reinforce"."""

    method: str
    iterations: int
    gamma: float
    seed: int
    population: int = 32
    elite_frac: float = 0.2
    rollouts_per_eval: int = 4
    init_sigma: float = 1.0  # CEM initial sampling std
    sigma_floor: float = 0.02  # keeps CEM exploration alive
    noise_decay: float = 0.95  # decay of the additive CEM exploration noise
    learning_rate: float = 0.05  # reinforce step size

    def __post_init__(self) -> None:
        if self.method not in ("cem", "reinforce"):
            raise InputError(f"unknown optimizer method {self.method!r}")
        if self.iterations < 0:
            raise InputError("iterations must be >= 0")
        if not 0.0 < self.elite_frac < 1.0:
            raise InputError("elite_frac must lie in (0, 1)")
        if self.population < 4:
            raise InputError("population must be >= 4")
        if not 0.0 < self.gamma <= 1.0:
            raise InputError("gamma must lie in (0, 1]")
        if self.rollouts_per_eval < 1:
            raise InputError("rollouts_per_eval must be >= 1")
        if not 0.0 < self.noise_decay <= 1.0:
            raise InputError("noise_decay must lie in (0, 1]")


def _pack(policy: PolicyParams) -> np.ndarray:
    if policy.kind is PolicyKind.LINEAR_GAUSSIAN:
        return np.concatenate([policy.weights.ravel(), policy.log_std])
    return policy.weights.ravel().copy()


def _unpack(policy: PolicyParams, vec: np.ndarray) -> PolicyParams:
    shape = policy.weights.shape
    n_w = shape[0] * shape[1]
    out = policy.copy()
    out.weights = vec[:n_w].reshape(shape).copy()
    if policy.kind is PolicyKind.LINEAR_GAUSSIAN:
        out.log_std = np.clip(vec[n_w:], LOG_STD_MIN, LOG_STD_MAX)
    return out


def evaluate_params(
    spec: EnvSpec,
    policy: PolicyParams,
    reward_fn: RewardFn,
    eval_seeds: list[int],
    gamma: float,
) -> float:
    """Mean discounted return over the given episode seeds (stochastic policy)."""
    total = 0.0
    for s in eval_seeds:
        total += episode_return(spec, policy, reward_fn, s, gamma)
    return total / len(eval_seeds)


def optimize_policy(
    spec: EnvSpec, reward_fn: RewardFn, init: PolicyParams, budget: OptBudget
) -> PolicyParams:
    """Optimize a policy against `reward_fn`; returns the incumbent parameters.

    All candidates within one iteration are scored on that iteration's
    evaluation seeds (common random numbers), so comparisons inside an
    iteration are fair; the seeds advance across iterations so the optimizer
    sees iterations x rollouts_per_eval distinct initial conditions rather
    than overfitting a handful. The incumbent competes in every population
    and is replaced only by a candidate that beat it under shared seeds.
    """
    if budget.iterations == 0:
        return init.copy()
    if budget.method == "cem":
        return _optimize_cem(spec, reward_fn, init, budget)
    return _optimize_reinforce(spec, reward_fn, init, budget)


def _iter_eval_seeds(budget: OptBudget, iteration: int) -> list[int]:
    base = iteration * budget.rollouts_per_eval
    return [
        derive_seed(budget.seed, "policy-eval", base + i)
        for i in range(budget.rollouts_per_eval)
    ]


def _optimize_cem(
    spec: EnvSpec, reward_fn: RewardFn, init: PolicyParams, budget: OptBudget
) -> PolicyParams:
    rng = np.random.default_rng(derive_seed(budget.seed, "cem-sampling"))

    best_vec = _pack(init)
    mean = best_vec.copy()
    sigma = np.full(len(best_vec), budget.init_sigma)
    n_elite = max(2, int(round(budget.elite_frac * budget.population)))

    for it in range(budget.iterations):
        eval_seeds = _iter_eval_seeds(budget, it)
        pop = mean[None, :] + sigma[None, :] * rng.standard_normal((budget.population, len(mean)))
        pop[0] = best_vec  # elitism: the incumbent always competes
        scores = np.array([
            evaluate_params(spec, _unpack(init, v), reward_fn, eval_seeds, budget.gamma)
            for v in pop
        ])
        if not np.isfinite(scores).all():
            raise NumericalError("policy optimization produced non-finite returns")
        # stable sort: on ties the incumbent in slot 0 keeps its seat
        order = np.argsort(-scores, kind="stable")
        elite = pop[order[:n_elite]]
        mean = elite.mean(axis=0)
        # decaying additive noise staves off premature variance collapse
        extra = budget.init_sigma * budget.noise_decay ** (it + 1)
        sigma = elite.std(axis=0) + max(extra, budget.sigma_floor)
        best_vec = pop[order[0]].copy()
    return _unpack(init, best_vec)


def _grad_log_prob(policy: PolicyParams, state: np.ndarray, action) -> np.ndarray:
    """Gradient of log pi(a|s) w.r.t. the packed parameter vector."""
    f = policy.policy_features(state)
    if policy.kind is PolicyKind.LINEAR_SOFTMAX:
        logits = policy.weights @ f
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        coef = -probs
        coef[int(action)] += 1.0
        return np.outer(coef, f).ravel()
    mean = policy.weights @ f
    std = np.exp(policy.log_std)
    delta = (np.asarray(action, dtype=np.float64) - mean) / (std * std)
    grad_w = np.outer(delta, f).ravel()
    grad_log_std = (np.asarray(action, dtype=np.float64) - mean) ** 2 / (std * std) - 1.0
    return np.concatenate([grad_w, grad_log_std])


def _optimize_reinforce(
    spec: EnvSpec, reward_fn: RewardFn, init: PolicyParams, budget: OptBudget
) -> PolicyParams:
    current = init.copy()
    best = current.copy()
    vec = _pack(current)
    for it in range(budget.iterations):
        episodes = []
        for e in range(budget.rollouts_per_eval):
            ep_seed = derive_seed(budget.seed, "reinforce-episode", it * budget.rollouts_per_eval + e)
            episodes.append(_collect_episode(spec, current, reward_fn, ep_seed, budget.gamma))

        g_totals = [ep[2] for ep in episodes]
        baseline = float(np.mean(g_totals))
        grad = np.zeros_like(vec)
        for states, actions, _, returns_to_go in [
            (ep[0], ep[1], ep[2], ep[3]) for ep in episodes
        ]:
            for s, a, g in zip(states, actions, returns_to_go):
                grad += _grad_log_prob(current, s, a) * (g - baseline)
        grad /= len(episodes)
        if not np.isfinite(grad).all():
            raise NumericalError("reinforce gradient is non-finite")

        vec = vec + budget.learning_rate * grad
        current = _unpack(init, vec)
        # incumbent and challenger are compared on the same fresh seeds
        eval_seeds = _iter_eval_seeds(budget, it)
        score = evaluate_params(spec, current, reward_fn, eval_seeds, budget.gamma)
        best_score = evaluate_params(spec, best, reward_fn, eval_seeds, budget.gamma)
        if not (math.isfinite(score) and math.isfinite(best_score)):
            raise NumericalError("policy optimization produced non-finite returns")
        if score > best_score:
            best = current.copy()
    return best


def _collect_episode(spec, policy, reward_fn, seed, gamma):
    """One stochastic episode: (states, actions, total, discounted returns-to-go)."""
    from .envs import reset, step

    action_rng = np.random.default_rng(derive_seed(seed, "rollout-actions"))
    s = reset(spec, seed)
    states, actions, rewards = [], [], []
    for t in range(spec.max_episode_steps):
        a = policy.act(s, action_rng)
        s_next, r, done = step(spec, s, a, reward_fn, t=t)
        states.append(s)
        actions.append(a)
        rewards.append(r)
        s = s_next
        if done:
            break
    returns_to_go = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        returns_to_go[i] = acc
    return states, actions, float(np.sum(rewards)), returns_to_go
