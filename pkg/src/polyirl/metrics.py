"""Evaluation: true-reward returns, 2-D visitation distance, projections.

The visitation metric is Wasserstein-2 between projected state clouds with
squared-Euclidean ground cost. Equal-size clouds (up to 2048 points) use the
exact assignment solver; anything larger or unbalanced falls back to
log-domain Sinkhorn with a recorded entropic epsilon.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .envs import EnvId, EnvSpec, Trajectory, TrueReward, rollout
from .errors import DataError, InputError, NumericalError
from .seeding import derive_seed

EXACT_ASSIGNMENT_MAX = 2048

RESULTS_HEADER = [
    "env",
    "feature_set",
    "mean_return",
    "std_return",
    "n_episodes",
    "wasserstein2d",
    "projection",
]


@dataclass
class PolicyEvaluation:
    mean_return: float
    std_return: float  # population std, ddof=0
    n_episodes: int
    returns: np.ndarray
    trajectories: list[Trajectory]


def evaluate_policy(
    spec: EnvSpec,
    policy,
    n_episodes: int,
    seed: int,
    deterministic: bool = True,
) -> PolicyEvaluation:
    """Roll out `n_episodes` episodes (seeds seed..seed+n-1) under the true
    reward and summarize undiscounted returns."""
    if n_episodes < 1:
        raise InputError("n_episodes must be >= 1")
    trajs = [
        rollout(spec, policy, TrueReward(), seed + i, deterministic=deterministic)
        for i in range(n_episodes)
    ]
    returns = np.array([t.true_return for t in trajs])
    return PolicyEvaluation(
        mean_return=float(returns.mean()),
        std_return=float(returns.std(ddof=0)),
        n_episodes=n_episodes,
        returns=returns,
        trajectories=trajs,
    )


# ---------------------------------------------------------------------------
# Wasserstein-2 between 2-D point clouds


@dataclass(frozen=True)
class W2Result:
    value: float
    method: str  # "exact" | "sinkhorn"
    epsilon: float | None = None
    iterations: int | None = None


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # difference form, not the gemm expansion: identical points must give an
    # exact 0.0 so that W2(A, A) == 0 and the 3-4-5 example is exact
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def wasserstein_2d(
    x: np.ndarray,
    y: np.ndarray,
    method: str = "auto",
    epsilon: float | None = None,
    max_iters: int = 5000,
    tol: float = 1e-3,
) -> W2Result:
    """W2 distance between uniform empirical measures on 2-D points.

    `tol` bounds the summed absolute marginal error of the Sinkhorn plan.
    At the default epsilon (1e-3 x mean pairwise cost) the marginals decay
    roughly like 1/iteration, so tolerances much below 1e-3 may exceed the
    iteration cap even though the transport value has long stabilized.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != 2 or y.shape[1] != 2:
        raise InputError("point clouds must have shape (n, 2)")
    if len(x) == 0 or len(y) == 0:
        raise InputError("point clouds must be non-empty")
    if method == "auto":
        method = (
            "exact" if len(x) == len(y) and len(x) <= EXACT_ASSIGNMENT_MAX else "sinkhorn"
        )
    if method == "exact":
        if len(x) != len(y):
            raise InputError("exact assignment requires equally sized clouds")
        if len(x) > EXACT_ASSIGNMENT_MAX:
            raise InputError(
                f"exact assignment limited to {EXACT_ASSIGNMENT_MAX} points per cloud"
            )
        cost = _sq_dists(x, y)
        rows, cols = linear_sum_assignment(cost)
        mean_sq = float(cost[rows, cols].mean())
        return W2Result(value=float(np.sqrt(mean_sq)), method="exact")
    if method != "sinkhorn":
        raise InputError(f"unknown method {method!r}")
    return _sinkhorn_w2(x, y, epsilon, max_iters, tol)


def _sinkhorn_w2(
    x: np.ndarray, y: np.ndarray, epsilon: float | None, max_iters: int, tol: float
) -> W2Result:
    cost = _sq_dists(x, y)
    mean_cost = float(cost.mean())
    if mean_cost == 0.0:
        return W2Result(value=0.0, method="sinkhorn", epsilon=epsilon, iterations=0)
    if epsilon is None:
        epsilon = 1e-3 * mean_cost
    if epsilon <= 0:
        raise InputError("epsilon must be positive")

    n, m = cost.shape
    log_a = -np.log(n)
    log_b = -np.log(m)
    f = np.zeros(n)
    g = np.zeros(m)
    residual = np.inf
    for it in range(1, max_iters + 1):
        f = epsilon * (log_a - logsumexp((g[None, :] - cost) / epsilon, axis=1))
        g = epsilon * (log_b - logsumexp((f[:, None] - cost) / epsilon, axis=0))
        if it % 10 == 0 or it == max_iters:
            log_plan = (f[:, None] + g[None, :] - cost) / epsilon
            plan = np.exp(log_plan)
            residual = float(
                np.abs(plan.sum(axis=1) - 1.0 / n).sum()
                + np.abs(plan.sum(axis=0) - 1.0 / m).sum()
            )
            if residual < tol:
                value = float(np.sqrt(max((plan * cost).sum(), 0.0)))
                return W2Result(
                    value=value, method="sinkhorn", epsilon=epsilon, iterations=it
                )
    raise NumericalError(
        f"sinkhorn failed to converge in {max_iters} iterations "
        f"(marginal residual {residual:.3e}, epsilon {epsilon:.3e})"
    )


# ---------------------------------------------------------------------------
# 2-D projections of state clouds

_PROJECTION_NAMES = {
    EnvId.PENDULUM: "theta_thetadot",
    EnvId.CARTPOLE: "x_theta",
    EnvId.ACROBOT: "theta1_theta1dot",
    EnvId.DOUBLE_INTEGRATOR: "x_v",
}


def projection_name(env_id: EnvId) -> str:
    return _PROJECTION_NAMES[env_id]


def project_states(env_id: EnvId | EnvSpec, states: np.ndarray) -> np.ndarray:
    """Map full states to the task's standard 2-D view (angles unwrapped
    from their cos/sin encoding where applicable)."""
    if isinstance(env_id, EnvSpec):
        env_id = env_id.env_id
    S = np.asarray(states, dtype=np.float64)
    if S.ndim != 2:
        raise InputError("states must be a 2-D array")
    if env_id is EnvId.PENDULUM:
        if S.shape[1] != 3:
            raise InputError("pendulum states have 3 dimensions")
        return np.column_stack([np.arctan2(S[:, 1], S[:, 0]), S[:, 2]])
    if env_id is EnvId.CARTPOLE:
        if S.shape[1] != 4:
            raise InputError("cartpole states have 4 dimensions")
        return S[:, [0, 2]].copy()
    if env_id is EnvId.ACROBOT:
        if S.shape[1] != 6:
            raise InputError("acrobot states have 6 dimensions")
        return np.column_stack([np.arctan2(S[:, 1], S[:, 0]), S[:, 4]])
    if env_id is EnvId.DOUBLE_INTEGRATOR:
        if S.shape[1] != 2:
            raise InputError("double-integrator states have 2 dimensions")
        return S.copy()
    raise InputError(f"no projection defined for {env_id}")


def subsample_rows(states: np.ndarray, n_max: int, seed: int) -> np.ndarray:
    """Seeded subsample without replacement; keeps original row order."""
    S = np.asarray(states)
    if n_max < 1:
        raise InputError("n_max must be >= 1")
    if len(S) <= n_max:
        return S
    rng = np.random.default_rng(derive_seed(seed, "subsample"))
    idx = np.sort(rng.choice(len(S), size=n_max, replace=False))
    return S[idx]


def pooled_projection(
    spec: EnvSpec, trajectories: list[Trajectory], n_max: int, seed: int
) -> np.ndarray:
    """All states of all trajectories, projected to 2-D and subsampled."""
    if not trajectories:
        raise InputError("need at least one trajectory")
    pooled = np.vstack([t.states for t in trajectories])
    return subsample_rows(project_states(spec, pooled), n_max, seed)


def visitation_distance(
    spec: EnvSpec,
    expert: list[Trajectory],
    agent: list[Trajectory],
    n_max: int = 512,
    seed: int = 0,
) -> W2Result:
    """W2 between expert and agent projected state visitations.

    Both clouds are subsampled to the same size so the exact solver applies.
    """
    a = pooled_projection(spec, expert, n_max, derive_seed(seed, "w2-expert"))
    b = pooled_projection(spec, agent, n_max, derive_seed(seed, "w2-agent"))
    n = min(len(a), len(b))
    a = subsample_rows(a, n, derive_seed(seed, "w2-trim-expert"))
    b = subsample_rows(b, n, derive_seed(seed, "w2-trim-agent"))
    return wasserstein_2d(a, b)


# ---------------------------------------------------------------------------
# results.csv


@dataclass
class EvalReport:
    env: str
    feature_set: str
    mean_return: float
    std_return: float
    n_episodes: int
    wasserstein2d: float
    projection: str


def write_results_csv(path: str | Path, rows: list[EvalReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.env,
                    r.feature_set,
                    repr(float(r.mean_return)),
                    repr(float(r.std_return)),
                    r.n_episodes,
                    repr(float(r.wasserstein2d)),
                    r.projection,
                ]
            )


def read_results_csv(path: str | Path) -> list[EvalReport]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise DataError(f"unexpected results header: {header}")
        out = []
        for row in reader:
            out.append(
                EvalReport(
                    env=row[0],
                    feature_set=row[1],
                    mean_return=float(row[2]),
                    std_return=float(row[3]),
                    n_episodes=int(row[4]),
                    wasserstein2d=float(row[5]),
                    projection=row[6],
                )
            )
        return out
