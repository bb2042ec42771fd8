"""Quadratic-polynomial candidate features and feature expectations.

The candidate set for a d-dimensional state is every linear monomial s_i
followed by every unique quadratic monomial s_i*s_j (i <= j), in canonical
order: d + d(d+1)/2 terms total. Matching expectations of this set matches
the mean and covariance of the underlying state distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError
from .envs import Trajectory


class ExpectationSource(str, Enum):
    EXPERT_DATA = "expert_data"
    POLICY_ROLLOUTS = "policy_rollouts"


@dataclass(frozen=True, eq=False)
class FeatureExtractor:
    """Candidate (or masked) polynomial basis over a d-dimensional state.

    `selected_mask` is an index array into the canonical term order; None
    means all terms are active. Instances are immutable after construction.
    """

    state_dim: int
    quad_i: np.ndarray  # first factor index of each quadratic term
    quad_j: np.ndarray  # second factor index, quad_i <= quad_j
    selected_mask: np.ndarray | None = None

    @property
    def n_candidates(self) -> int:
        return self.state_dim + len(self.quad_i)

    @property
    def n_active(self) -> int:
        return self.n_candidates if self.selected_mask is None else len(self.selected_mask)

    @property
    def all_term_names(self) -> list[str]:
        names = [f"s{i}" for i in range(self.state_dim)]
        names += [f"s{i}*s{j}" for i, j in zip(self.quad_i, self.quad_j)]
        return names

    @property
    def active_term_names(self) -> list[str]:
        names = self.all_term_names
        if self.selected_mask is None:
            return names
        return [names[i] for i in self.selected_mask]

    def with_mask(self, indices) -> "FeatureExtractor":
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 1 or len(idx) < 1:
            raise InputError("mask must be a non-empty 1-D index list")
        if len(np.unique(idx)) != len(idx):
            raise InputError("mask indices must be unique")
        if idx.min() < 0 or idx.max() >= self.n_candidates:
            raise InputError(f"mask indices must lie in [0, {self.n_candidates})")
        return FeatureExtractor(self.state_dim, self.quad_i, self.quad_j, idx)


@dataclass
class FeatureExpectation:
    values: np.ndarray
    source: ExpectationSource
    n_trajectories: int


def make_candidate_extractor(d: int) -> FeatureExtractor:
    """Full candidate set for state dimension d: d + d(d+1)/2 terms."""
    if d < 1:
        raise InputError(f"state dimension must be >= 1, got {d}")
    qi, qj = np.triu_indices(d)
    return FeatureExtractor(state_dim=d, quad_i=qi, quad_j=qj)


def state_features(extractor: FeatureExtractor, states: np.ndarray) -> np.ndarray:
    """Feature matrix (n, n_active) for a batch of states (n, d)."""
    S = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if S.shape[1] != extractor.state_dim:
        raise InputError(
            f"states have dimension {S.shape[1]}, extractor expects {extractor.state_dim}"
        )
    full = np.hstack([S, S[:, extractor.quad_i] * S[:, extractor.quad_j]])
    if extractor.selected_mask is None:
        return full
    return full[:, extractor.selected_mask]


def evaluate(extractor: FeatureExtractor, s: np.ndarray) -> np.ndarray:
    """Feature vector of a single state; masked terms are omitted."""
    return state_features(extractor, np.asarray(s).reshape(1, -1))[0]


def trajectory_features(
    extractor: FeatureExtractor,
    traj: Trajectory | np.ndarray,
    standardizer: "FeatureStandardizer | None" = None,
) -> np.ndarray:
    """Undiscounted sum of per-state features over all states of a trajectory."""
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    if len(states) == 0:
        raise InputError("trajectory has no states")
    F = state_features(extractor, states)
    if standardizer is not None:
        F = standardizer.transform(F)
    return F.sum(axis=0)


def dataset_feature_expectation(
    extractor: FeatureExtractor,
    dataset: list[Trajectory],
    standardizer: "FeatureStandardizer | None" = None,
    source: ExpectationSource = ExpectationSource.EXPERT_DATA,
) -> FeatureExpectation:
    """Mean per-trajectory feature sum over a dataset (per-trajectory scale)."""
    if len(dataset) < 1:
        raise InputError("dataset must contain at least one trajectory")
    sums = np.stack([trajectory_features(extractor, t, standardizer) for t in dataset])
    return FeatureExpectation(
        values=sums.mean(axis=0), source=source, n_trajectories=len(dataset)
    )


def reconstruct_moments(
    extractor: FeatureExtractor, mean_features: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Recover (mean, covariance) of the state sample from per-state mean features.

    Only valid for an unmasked candidate extractor: the linear block carries
    E[s] and the quadratic block E[s s^T]; covariance follows by subtracting
    the outer product of means.
    """
    if extractor.selected_mask is not None:
        raise InputError("moment reconstruction requires the full candidate set")
    d = extractor.state_dim
    mu = np.asarray(mean_features, dtype=np.float64)
    if mu.shape != (extractor.n_candidates,):
        raise InputError(f"expected {extractor.n_candidates} mean features")
    mean = mu[:d]
    second = np.zeros((d, d))
    second[extractor.quad_i, extractor.quad_j] = mu[d:]
    second[extractor.quad_j, extractor.quad_i] = mu[d:]
    return mean, second - np.outer(mean, mean)


@dataclass
class FeatureStandardizer:
    """Per-feature affine transform (x - mean) / scale fit on expert states.

    Zero-variance features get scale 1 so the transform stays invertible.
    """

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if np.any(self.scale <= 0):
            raise InputError("standardizer scales must be strictly positive")

    @classmethod
    def fit(cls, per_state_features: np.ndarray) -> "FeatureStandardizer":
        F = np.asarray(per_state_features, dtype=np.float64)
        mean = F.mean(axis=0)
        scale = F.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    @classmethod
    def identity(cls, p: int) -> "FeatureStandardizer":
        return cls(mean=np.zeros(p), scale=np.ones(p))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def restrict(self, indices) -> "FeatureStandardizer":
        idx = np.asarray(indices, dtype=np.intp)
        return FeatureStandardizer(mean=self.mean[idx], scale=self.scale[idx])
