"""Rank candidate features by univariate F-statistic against trajectory labels.

Each feature column (per-trajectory feature sums) is scored independently by
its Pearson correlation r with the trajectory log-probability labels,
converted to F = r^2 (n-2) / (1 - r^2). One pass of O(n) work per feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import TrajectoryLabels
from .errors import InputError

# Finite stand-in for the infinite F of a perfectly correlated feature.
PERFECT_CORRELATION_F = 1e18
_PERFECT_R_TOL = 1e-12


@dataclass
class FeatureScore:
    term_index: int
    term_name: str
    f_statistic: float
    correlation: float


@dataclass
class SelectionResult:
    ranked: list[FeatureScore]  # descending F, ties broken by lower term_index
    selected_indices: list[int]
    k: int


def score_features(
    X: np.ndarray,
    y: TrajectoryLabels | np.ndarray,
    term_names: list[str] | None = None,
) -> list[FeatureScore]:
    """Score every column of the (n, p) per-trajectory feature matrix.

    Constant columns score 0 by convention; |r| = 1 maps to a large finite
    sentinel so ranking and serialization stay total.
    """
    labels = y.values if isinstance(y, TrajectoryLabels) else np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("feature matrix must be 2-D")
    n, p = X.shape
    if labels.shape != (n,):
        raise InputError(f"labels have shape {labels.shape}, expected ({n},)")
    if n < 3:
        raise InputError("F-statistic needs at least 3 trajectories")
    if term_names is None:
        term_names = [f"f{j}" for j in range(p)]
    elif len(term_names) != p:
        raise InputError("term_names must match the number of feature columns")

    Xc = X - X.mean(axis=0)
    yc = labels - labels.mean()
    x_norm = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    y_norm = float(np.sqrt(yc @ yc))
    # exact-range constancy checks: centering leaves ~eps residue otherwise
    x_constant = np.ptp(X, axis=0) == 0.0
    y_constant = np.ptp(labels) == 0.0

    scores: list[FeatureScore] = []
    cross = Xc.T @ yc
    for j in range(p):
        if x_constant[j] or y_constant or x_norm[j] == 0.0 or y_norm == 0.0:
            r = 0.0
            f = 0.0
        else:
            r = float(np.clip(cross[j] / (x_norm[j] * y_norm), -1.0, 1.0))
            if 1.0 - abs(r) <= _PERFECT_R_TOL:
                f = PERFECT_CORRELATION_F
            else:
                f = r * r * (n - 2) / (1.0 - r * r)
        scores.append(
            FeatureScore(term_index=j, term_name=term_names[j], f_statistic=f, correlation=r)
        )
    return scores


def select_top_k(scores: list[FeatureScore], k: int) -> SelectionResult:
    """Top-k features by descending F; exact ties go to the lower term index."""
    p = len(scores)
    if not 1 <= k <= p:
        raise InputError(f"k must lie in [1, {p}], got {k}")
    ranked = sorted(scores, key=lambda sc: (-sc.f_statistic, sc.term_index))
    return SelectionResult(
        ranked=ranked,
        selected_indices=[sc.term_index for sc in ranked[:k]],
        k=k,
    )
