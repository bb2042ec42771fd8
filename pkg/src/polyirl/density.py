"""Gaussian kernel density estimation over pooled expert states.

The density model pools every state of every expert trajectory as kernel
centers, shares one covariance bandwidth across centers, and exposes floored
log-densities via log-sum-exp so distant queries can never produce -inf.
Per-trajectory log-probabilities are sums of per-state log-densities; the
transition dynamics are deliberately ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .envs import Trajectory
from .errors import DataError, InputError

# Per-state density floor; keeps labels finite even for far-out queries.
DENSITY_FLOOR = 1e-300
LOG_DENSITY_FLOOR = math.log(DENSITY_FLOOR)

_QUERY_BLOCK = 2048
_SUPPORT_BLOCK = 16384

BANDWIDTH_RULES = ("scott", "silverman", "fixed")


@dataclass(frozen=True, eq=False)
class KdeModel:
    support_points: np.ndarray  # (n, d) kernel centers
    bandwidth_cov: np.ndarray  # (d, d) SPD
    log_norm_const: float  # log((2 pi)^{d/2} |Sigma|^{1/2})
    chol_lower: np.ndarray  # L with Sigma = L L^T
    white_support: np.ndarray  # support mapped through L^{-1}
    white_sq_norms: np.ndarray  # squared row norms of white_support

    @property
    def n_support(self) -> int:
        return len(self.support_points)

    @property
    def dim(self) -> int:
        return self.support_points.shape[1]


def _pool_states(dataset) -> np.ndarray:
    if isinstance(dataset, np.ndarray):
        return np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    states = [np.asarray(t.states, dtype=np.float64) for t in dataset]
    if not states:
        raise InputError("dataset is empty")
    return np.vstack(states)


def fit_kde(
    dataset,
    bandwidth_rule: str = "scott",
    fixed_cov: np.ndarray | float | None = None,
) -> KdeModel:
    """Fit the KDE on all states pooled across a trajectory dataset.

    `dataset` may be a list of Trajectory or an already-pooled (n, d) array.
    Scott / Silverman produce a diagonal bandwidth h^2 * diag(sample
    variances) with h = n^(-1/(d+4)) resp. (n(d+2)/4)^(-1/(d+4)); "fixed"
    uses the given covariance as-is.
    """
    if bandwidth_rule not in BANDWIDTH_RULES:
        raise InputError(f"bandwidth_rule must be one of {BANDWIDTH_RULES}")
    X = _pool_states(dataset)
    if not np.isfinite(X).all():
        raise DataError("support states contain non-finite values")
    n, d = X.shape

    if bandwidth_rule == "fixed":
        if fixed_cov is None:
            raise InputError("fixed bandwidth requires fixed_cov")
        cov = np.asarray(fixed_cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = cov * np.eye(d)
        if cov.shape != (d, d):
            raise InputError(f"fixed_cov must be {d}x{d}")
    else:
        if n < 2:
            raise DataError("data-driven bandwidths need at least 2 support states")
        variances = X.var(axis=0, ddof=1)
        degenerate = np.flatnonzero(variances <= 0.0)
        if degenerate.size:
            raise DataError(
                f"state dimension {int(degenerate[0])} has zero variance; "
                "sample covariance is singular"
            )
        if bandwidth_rule == "scott":
            h = n ** (-1.0 / (d + 4))
        else:
            h = (n * (d + 2) / 4.0) ** (-1.0 / (d + 4))
        cov = np.diag(h * h * variances)

    try:
        L = cholesky(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InputError(f"bandwidth covariance is not SPD: {exc}") from exc

    log_det_half = float(np.sum(np.log(np.diag(L))))
    log_norm = 0.5 * d * math.log(2.0 * math.pi) + log_det_half
    white = solve_triangular(L, X.T, lower=True).T
    return KdeModel(
        support_points=X,
        bandwidth_cov=cov,
        log_norm_const=log_norm,
        chol_lower=L,
        white_support=white,
        white_sq_norms=np.einsum("ij,ij->i", white, white),
    )


def log_density(model: KdeModel, s: np.ndarray) -> float | np.ndarray:
    """Floored log KDE density at one state (d,) or a batch (m, d)."""
    q = np.asarray(s, dtype=np.float64)
    single = q.ndim == 1
    Q = np.atleast_2d(q)
    if Q.shape[1] != model.dim:
        raise InputError(f"query dimension {Q.shape[1]} != support dimension {model.dim}")

    out = np.empty(len(Q))
    offset = math.log(model.n_support) + model.log_norm_const
    for q0 in range(0, len(Q), _QUERY_BLOCK):
        Qw = solve_triangular(model.chol_lower, Q[q0 : q0 + _QUERY_BLOCK].T, lower=True).T
        qsq = np.einsum("ij,ij->i", Qw, Qw)
        acc = np.full(len(Qw), -np.inf)
        for s0 in range(0, model.n_support, _SUPPORT_BLOCK):
            Sw = model.white_support[s0 : s0 + _SUPPORT_BLOCK]
            d2 = qsq[:, None] + model.white_sq_norms[s0 : s0 + _SUPPORT_BLOCK][None, :]
            d2 -= 2.0 * (Qw @ Sw.T)
            np.maximum(d2, 0.0, out=d2)
            acc = np.logaddexp(acc, logsumexp(-0.5 * d2, axis=1))
        out[q0 : q0 + _QUERY_BLOCK] = acc - offset

    np.maximum(out, LOG_DENSITY_FLOOR, out=out)
    return float(out[0]) if single else out


def trajectory_log_prob(model: KdeModel, traj: Trajectory | np.ndarray) -> float:
    """Sum of floored per-state log-densities over all states of one trajectory."""
    states = traj.states if isinstance(traj, Trajectory) else np.atleast_2d(traj)
    if len(states) == 0:
        raise InputError("trajectory has no states")
    return float(np.sum(log_density(model, states)))


@dataclass
class TrajectoryLabels:
    values: np.ndarray
    trajectory_ids: list[int]


def make_labels(model: KdeModel, dataset: list[Trajectory]) -> TrajectoryLabels:
    """One log-probability label per trajectory, order-aligned with the dataset."""
    if len(dataset) < 2:
        raise DataError("need at least 2 trajectories to produce selection labels")
    # One batched query over the pooled states, then per-trajectory reduction.
    lengths = [len(t.states) for t in dataset]
    pooled = np.vstack([t.states for t in dataset])
    per_state = log_density(model, pooled)
    values = np.empty(len(dataset))
    start = 0
    for i, n in enumerate(lengths):
        values[i] = per_state[start : start + n].sum()
        start += n
    return TrajectoryLabels(values=values, trajectory_ids=list(range(len(dataset))))
