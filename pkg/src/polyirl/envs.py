"""Deterministic classic-control simulators with a swappable reward function.

Pendulum, CartPole and Acrobot are reimplemented from the published defaults
of the reference simulators (semi-implicit Euler / Euler / RK4), so results
are reproducible without any external environment dependency. A fourth tiny
task, a 1D double integrator with quadratic state cost, is built in for
reward-recovery self-tests.

All operations are functional: an environment is fully described by an
immutable EnvSpec, state is an observation vector, and stepping never touches
shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ConfigError, InputError
from .seeding import derive_seed

TWO_PI = 2.0 * math.pi


class EnvId(str, Enum):
    PENDULUM = "pendulum"
    CARTPOLE = "cartpole"
    ACROBOT = "acrobot"
    DOUBLE_INTEGRATOR = "double_integrator"


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float


@dataclass(frozen=True)
class Discrete:
    n: int


ActionSpace = Continuous | Discrete


@dataclass(frozen=True)
class EnvSpec:
    env_id: EnvId
    state_dim: int
    action_space: ActionSpace
    max_episode_steps: int
    dynamics_params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = _STATE_DIMS[self.env_id]
        if self.state_dim != expected:
            raise ConfigError(
                f"{self.env_id.value} requires state_dim={expected}, got {self.state_dim}"
            )
        if self.max_episode_steps <= 0:
            raise ConfigError("max_episode_steps must be positive")
        for name, value in self.dynamics_params.items():
            if not value > 0.0:
                raise ConfigError(f"dynamics parameter {name!r} must be strictly positive")
        if isinstance(self.action_space, Discrete) and self.action_space.n < 2:
            raise ConfigError("discrete action space needs at least 2 actions")
        if isinstance(self.action_space, Continuous) and not self.action_space.lo < self.action_space.hi:
            raise ConfigError("continuous action space needs lo < hi")


_STATE_DIMS = {
    EnvId.PENDULUM: 3,
    EnvId.CARTPOLE: 4,
    EnvId.ACROBOT: 6,
    EnvId.DOUBLE_INTEGRATOR: 2,
}

_DEFAULT_MAX_STEPS = {
    EnvId.PENDULUM: 200,
    EnvId.CARTPOLE: 500,
    EnvId.ACROBOT: 500,
    EnvId.DOUBLE_INTEGRATOR: 80,
}

# Published defaults of the reference simulators, pinned here so a run config
# fully determines the dynamics.
_DEFAULT_PARAMS: dict[EnvId, dict[str, float]] = {
    EnvId.PENDULUM: {
        "gravity": 10.0,
        "mass": 1.0,
        "length": 1.0,
        "dt": 0.05,
        "max_speed": 8.0,
        "max_torque": 2.0,
    },
    EnvId.CARTPOLE: {
        "gravity": 9.8,
        "masscart": 1.0,
        "masspole": 0.1,
        "length": 0.5,  # half the pole length
        "force_mag": 10.0,
        "dt": 0.02,
        "x_threshold": 2.4,
        "theta_threshold": 12.0 * TWO_PI / 360.0,
    },
    EnvId.ACROBOT: {
        "gravity": 9.8,
        "link_length_1": 1.0,
        "link_mass_1": 1.0,
        "link_mass_2": 1.0,
        "link_com_1": 0.5,
        "link_com_2": 0.5,
        "link_moi": 1.0,
        "dt": 0.2,
        "max_vel_1": 4.0 * math.pi,
        "max_vel_2": 9.0 * math.pi,
        "torque_mag": 1.0,
    },
    EnvId.DOUBLE_INTEGRATOR: {
        "dt": 0.1,
        "max_force": 1.0,
        "max_speed": 5.0,
    },
}


def make_spec(env_id: EnvId | str, max_episode_steps: int | None = None) -> EnvSpec:
    """Build the pinned-default EnvSpec for one of the built-in tasks."""
    env_id = EnvId(env_id)
    if env_id is EnvId.PENDULUM:
        space: ActionSpace = Continuous(-2.0, 2.0)
    elif env_id is EnvId.CARTPOLE:
        space = Discrete(2)
    elif env_id is EnvId.ACROBOT:
        space = Discrete(3)
    else:
        space = Continuous(-1.0, 1.0)
    return EnvSpec(
        env_id=env_id,
        state_dim=_STATE_DIMS[env_id],
        action_space=space,
        max_episode_steps=max_episode_steps or _DEFAULT_MAX_STEPS[env_id],
        dynamics_params=dict(_DEFAULT_PARAMS[env_id]),
    )


@dataclass
class Trajectory:
    """One episode: states (T+1, d), actions (T, adim), true rewards (T,)."""

    env_id: EnvId
    states: np.ndarray
    actions: np.ndarray
    true_rewards: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.true_rewards = np.asarray(self.true_rewards, dtype=np.float64)
        if self.actions.ndim == 1:
            self.actions = self.actions.reshape(-1, 1)
        if len(self.states) != len(self.actions) + 1:
            raise InputError(
                f"need len(states) == len(actions) + 1, got {len(self.states)} vs {len(self.actions)}"
            )
        if len(self.true_rewards) != len(self.actions):
            raise InputError("true_rewards must align with actions")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def true_return(self) -> float:
        return float(self.true_rewards.sum())


@runtime_checkable
class SupportsStateReward(Protocol):
    """Anything that can score a single state, e.g. a learned reward model."""

    def reward_at(self, state: np.ndarray) -> float: ...


@dataclass(frozen=True)
class TrueReward:
    """Marker: use the environment's built-in task reward."""


@dataclass(frozen=True)
class LinearFeatureReward:
    """Learned reward theta^T phi(s'), evaluated at the successor state."""

    model: SupportsStateReward


RewardFn = TrueReward | LinearFeatureReward


class Actor(Protocol):
    """Minimal policy interface consumed by rollouts."""

    def act(
        self, state: np.ndarray, rng: np.random.Generator, deterministic: bool = False
    ): ...


def _angle_normalize(x: float) -> float:
    return ((x + math.pi) % TWO_PI) - math.pi


def reset(spec: EnvSpec, rng_seed: int) -> np.ndarray:
    """Draw an initial state from the task's standard initial distribution."""
    rng = np.random.default_rng(rng_seed)
    env_id = spec.env_id
    if env_id is EnvId.PENDULUM:
        th = rng.uniform(-math.pi, math.pi)
        thdot = rng.uniform(-1.0, 1.0)
        return np.array([math.cos(th), math.sin(th), thdot])
    if env_id is EnvId.CARTPOLE:
        return rng.uniform(-0.05, 0.05, size=4)
    if env_id is EnvId.ACROBOT:
        th1, th2, dth1, dth2 = rng.uniform(-0.1, 0.1, size=4)
        return np.array(
            [math.cos(th1), math.sin(th1), math.cos(th2), math.sin(th2), dth1, dth2]
        )
    if env_id is EnvId.DOUBLE_INTEGRATOR:
        return np.array([rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5)])
    raise ConfigError(f"unknown environment {env_id}")


def _coerce_action(spec: EnvSpec, a) -> float | int:
    """Clip continuous actions to bounds; reject out-of-range discrete ones."""
    space = spec.action_space
    if isinstance(space, Continuous):
        u = float(np.asarray(a).reshape(-1)[0])
        return min(max(u, space.lo), space.hi)
    k = np.asarray(a).reshape(-1)[0]
    ki = int(round(float(k)))
    if abs(float(k) - ki) > 1e-9 or not 0 <= ki < space.n:
        raise InputError(f"discrete action {k!r} not in range(0, {space.n})")
    return ki


def _pendulum_step(p: dict[str, float], s: np.ndarray, u: float) -> tuple[np.ndarray, float]:
    th = math.atan2(float(s[1]), float(s[0]))
    thdot = float(s[2])
    g, m, length, dt = p["gravity"], p["mass"], p["length"], p["dt"]

    angle = _angle_normalize(th)
    cost = angle * angle + 0.1 * thdot * thdot + 0.001 * u * u

    # Semi-implicit Euler on a rod pivoted at one end.
    newthdot = thdot + (1.5 * g / length * math.sin(th) + 3.0 / (m * length * length) * u) * dt
    newthdot = min(max(newthdot, -p["max_speed"]), p["max_speed"])
    newth = th + newthdot * dt
    obs = np.array([math.cos(newth), math.sin(newth), newthdot])
    return obs, -cost


def _cartpole_step(p: dict[str, float], s: np.ndarray, force: float) -> tuple[np.ndarray, bool]:
    x, x_dot, theta, theta_dot = (float(v) for v in s)
    total_mass = p["masscart"] + p["masspole"]
    polemass_length = p["masspole"] * p["length"]
    cos_th = math.cos(theta)
    sin_th = math.sin(theta)

    temp = (force + polemass_length * theta_dot * theta_dot * sin_th) / total_mass
    theta_acc = (p["gravity"] * sin_th - cos_th * temp) / (
        p["length"] * (4.0 / 3.0 - p["masspole"] * cos_th * cos_th / total_mass)
    )
    x_acc = temp - polemass_length * theta_acc * cos_th / total_mass

    dt = p["dt"]
    x += dt * x_dot
    x_dot += dt * x_acc
    theta += dt * theta_dot
    theta_dot += dt * theta_acc

    terminated = abs(x) > p["x_threshold"] or abs(theta) > p["theta_threshold"]
    return np.array([x, x_dot, theta, theta_dot]), terminated


def _acrobot_dsdt(p: dict[str, float], th1: float, th2: float, dth1: float, dth2: float, torque: float):
    m1, m2 = p["link_mass_1"], p["link_mass_2"]
    l1 = p["link_length_1"]
    lc1, lc2 = p["link_com_1"], p["link_com_2"]
    moi = p["link_moi"]
    g = p["gravity"]

    d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * math.cos(th2)) + 2.0 * moi
    d2 = m2 * (lc2 * lc2 + l1 * lc2 * math.cos(th2)) + moi
    phi2 = m2 * lc2 * g * math.cos(th1 + th2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dth2 * dth2 * math.sin(th2)
        - 2.0 * m2 * l1 * lc2 * dth2 * dth1 * math.sin(th2)
        + (m1 * lc1 + m2 * l1) * g * math.cos(th1 - math.pi / 2.0)
        + phi2
    )
    ddth2 = (
        torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dth1 * dth1 * math.sin(th2) - phi2
    ) / (m2 * lc2 * lc2 + moi - d2 * d2 / d1)
    ddth1 = -(d2 * ddth2 + phi1) / d1
    return dth1, dth2, ddth1, ddth2


def _acrobot_step(p: dict[str, float], s: np.ndarray, torque: float) -> tuple[np.ndarray, bool]:
    th1 = math.atan2(float(s[1]), float(s[0]))
    th2 = math.atan2(float(s[3]), float(s[2]))
    dth1, dth2 = float(s[4]), float(s[5])
    dt = p["dt"]

    # One RK4 step over the full dt, matching the reference integrator.
    k1 = _acrobot_dsdt(p, th1, th2, dth1, dth2, torque)
    k2 = _acrobot_dsdt(
        p,
        th1 + 0.5 * dt * k1[0],
        th2 + 0.5 * dt * k1[1],
        dth1 + 0.5 * dt * k1[2],
        dth2 + 0.5 * dt * k1[3],
        torque,
    )
    k3 = _acrobot_dsdt(
        p,
        th1 + 0.5 * dt * k2[0],
        th2 + 0.5 * dt * k2[1],
        dth1 + 0.5 * dt * k2[2],
        dth2 + 0.5 * dt * k2[3],
        torque,
    )
    k4 = _acrobot_dsdt(
        p, th1 + dt * k3[0], th2 + dt * k3[1], dth1 + dt * k3[2], dth2 + dt * k3[3], torque
    )
    th1 += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    th2 += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    dth1 += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    dth2 += dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])

    th1 = _angle_normalize(th1)
    th2 = _angle_normalize(th2)
    dth1 = min(max(dth1, -p["max_vel_1"]), p["max_vel_1"])
    dth2 = min(max(dth2, -p["max_vel_2"]), p["max_vel_2"])

    terminated = -math.cos(th1) - math.cos(th2 + th1) > 1.0
    obs = np.array([math.cos(th1), math.sin(th1), math.cos(th2), math.sin(th2), dth1, dth2])
    return obs, terminated


def _double_integrator_step(p: dict[str, float], s: np.ndarray, u: float) -> np.ndarray:
    x, v = float(s[0]), float(s[1])
    dt = p["dt"]
    x += dt * v
    v += dt * u
    v = min(max(v, -p["max_speed"]), p["max_speed"])
    return np.array([x, v])


def _acrobot_terminated(s: np.ndarray) -> bool:
    th1 = math.atan2(float(s[1]), float(s[0]))
    th2 = math.atan2(float(s[3]), float(s[2]))
    return -math.cos(th1) - math.cos(th2 + th1) > 1.0


def true_reward(spec: EnvSpec, s: np.ndarray, a, s_next: np.ndarray) -> float:
    """Task reward of a transition, per the reference environments.

    Pendulum scores the pre-transition state and torque; CartPole pays +1 per
    step; Acrobot pays -1 until the height threshold is reached; the double
    integrator pays the quadratic state cost -(x^2 + 0.1 v^2) at the
    successor state.
    """
    env_id = spec.env_id
    if env_id is EnvId.PENDULUM:
        th = math.atan2(float(s[1]), float(s[0]))
        u = float(np.asarray(a).reshape(-1)[0])
        angle = _angle_normalize(th)
        thdot = float(s[2])
        return -(angle * angle + 0.1 * thdot * thdot + 0.001 * u * u)
    if env_id is EnvId.CARTPOLE:
        return 1.0
    if env_id is EnvId.ACROBOT:
        return 0.0 if _acrobot_terminated(s_next) else -1.0
    x, v = float(s_next[0]), float(s_next[1])
    return -(x * x + 0.1 * v * v)


def step(
    spec: EnvSpec,
    s: np.ndarray,
    a,
    reward_fn: RewardFn = TrueReward(),
    t: int | None = None,
) -> tuple[np.ndarray, float, bool]:
    """Advance one transition; returns (next state, reward, done).

    `t` is the zero-based index of this transition; when given, the episode
    step cap contributes to `done`. Continuous actions are clipped to the
    action bounds before integration.
    """
    u = _coerce_action(spec, a)
    env_id = spec.env_id

    if env_id is EnvId.PENDULUM:
        s_next, _ = _pendulum_step(spec.dynamics_params, s, u)
        terminated = False
    elif env_id is EnvId.CARTPOLE:
        force = spec.dynamics_params["force_mag"] * (1.0 if u == 1 else -1.0)
        s_next, terminated = _cartpole_step(spec.dynamics_params, s, force)
    elif env_id is EnvId.ACROBOT:
        torque = spec.dynamics_params["torque_mag"] * float(u - 1)
        s_next, terminated = _acrobot_step(spec.dynamics_params, s, torque)
    elif env_id is EnvId.DOUBLE_INTEGRATOR:
        s_next = _double_integrator_step(spec.dynamics_params, s, u)
        terminated = False
    else:
        raise ConfigError(f"unknown environment {env_id}")

    if isinstance(reward_fn, TrueReward):
        reward = true_reward(spec, s, u, s_next)
    else:
        reward = float(reward_fn.model.reward_at(s_next))

    done = terminated or (t is not None and t + 1 >= spec.max_episode_steps)
    return s_next, reward, done


def rollout(
    spec: EnvSpec,
    policy: Actor,
    reward_fn: RewardFn,
    rng_seed: int,
    deterministic: bool = False,
) -> Trajectory:
    """Run one full episode; deterministic given (seed, policy, spec).

    The returned Trajectory always records the environment's true rewards,
    regardless of which reward the policy was optimized against.
    """
    action_rng = np.random.default_rng(derive_seed(rng_seed, "rollout-actions"))
    s = reset(spec, rng_seed)
    states = [s]
    actions: list = []
    rewards: list[float] = []
    for t in range(spec.max_episode_steps):
        u = _coerce_action(spec, policy.act(s, action_rng, deterministic=deterministic))
        s_next, _, done = step(spec, s, u, reward_fn, t=t)
        rewards.append(true_reward(spec, s, u, s_next))
        actions.append(np.atleast_1d(np.asarray(u, dtype=np.float64)))
        states.append(s_next)
        s = s_next
        if done:
            break
    return Trajectory(
        env_id=spec.env_id,
        states=np.stack(states),
        actions=np.stack(actions),
        true_rewards=np.array(rewards),
        seed=rng_seed,
    )


def episode_return(
    spec: EnvSpec,
    policy: Actor,
    reward_fn: RewardFn,
    rng_seed: int,
    gamma: float,
    deterministic: bool = False,
) -> float:
    """Discounted return of one episode under `reward_fn` only.

    Used by policy optimization: when reward_fn is a learned reward, the
    environment's true reward is never evaluated.
    """
    action_rng = np.random.default_rng(derive_seed(rng_seed, "rollout-actions"))
    s = reset(spec, rng_seed)
    total = 0.0
    discount = 1.0
    for t in range(spec.max_episode_steps):
        a = policy.act(s, action_rng, deterministic=deterministic)
        s, r, done = step(spec, s, a, reward_fn, t=t)
        total += discount * r
        discount *= gamma
        if done:
            break
    return total
