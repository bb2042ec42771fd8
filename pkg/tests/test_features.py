"""Candidate features: dimensions, oracle values, moment reconstruction."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyirl import (
    EnvId,
    InputError,
    Trajectory,
    dataset_feature_expectation,
    evaluate,
    make_candidate_extractor,
    reconstruct_moments,
    state_features,
    trajectory_features,
)
from polyirl.features import FeatureStandardizer


def test_candidate_dimensions_match_published_counts():
    # d + d(d+1)/2 for the three tasks: 9 / 14 / 27
    assert make_candidate_extractor(3).n_candidates == 9
    assert make_candidate_extractor(4).n_candidates == 14
    assert make_candidate_extractor(6).n_candidates == 27


def test_candidate_dimension_formula_holds_generally():
    for d in range(1, 12):
        assert make_candidate_extractor(d).n_candidates == d + d * (d + 1) // 2


def test_rejects_nonpositive_dimension():
    with pytest.raises(InputError):
        make_candidate_extractor(0)


def test_term_order_linear_then_upper_triangular():
    ex = make_candidate_extractor(3)
    assert ex.all_term_names == [
        "s0",
        "s1",
        "s2",
        "s0*s0",
        "s0*s1",
        "s0*s2",
        "s1*s1",
        "s1*s2",
        "s2*s2",
    ]


def test_evaluate_hand_cases():
    ex2 = make_candidate_extractor(2)
    np.testing.assert_array_equal(evaluate(ex2, np.zeros(2)), np.zeros(5))
    np.testing.assert_array_equal(
        evaluate(ex2, np.array([1.0, 2.0])), np.array([1, 2, 1, 2, 4])
    )
    ex1 = make_candidate_extractor(1)
    np.testing.assert_array_equal(
        evaluate(ex1, np.array([-3.0])), np.array([-3.0, 9.0])
    )


def test_state_features_brute_force_oracle():
    """Row i, term (a,b) equals S[i,a]*S[i,b] computed with plain loops."""
    rng = np.random.default_rng(42)
    for d in (2, 3, 5):
        ex = make_candidate_extractor(d)
        S = rng.normal(size=(40, d))
        F = state_features(ex, S)
        for i in range(len(S)):
            expected = list(S[i])
            for a in range(d):
                for b in range(a, d):
                    expected.append(S[i, a] * S[i, b])
            np.testing.assert_allclose(F[i], expected, atol=1e-12)


def test_permutation_invariance_of_dataset_expectation():
    """Mean features ignore state order within and across trajectories."""
    rng = np.random.default_rng(0)
    ex = make_candidate_extractor(3)
    S = rng.normal(size=(30, 3))
    mean_a = state_features(ex, S).mean(axis=0)
    perm = rng.permutation(30)
    mean_b = state_features(ex, S[perm]).mean(axis=0)
    np.testing.assert_allclose(mean_a, mean_b, atol=1e-12)


def test_trajectory_features_is_sum_oracle():
    rng = np.random.default_rng(7)
    ex = make_candidate_extractor(3)
    S = rng.normal(size=(11, 3))
    expected = np.zeros(ex.n_candidates)
    for row in S:
        expected += evaluate(ex, row)
    np.testing.assert_allclose(trajectory_features(ex, S), expected, atol=1e-9)


def test_dataset_expectation_two_loop_oracle():
    rng = np.random.default_rng(3)
    ex = make_candidate_extractor(2)
    trajs = []
    for k in range(5):
        T = int(rng.integers(3, 9))
        states = rng.normal(size=(T + 1, 2))
        trajs.append(
            Trajectory(
                env_id=EnvId.DOUBLE_INTEGRATOR,
                states=states,
                actions=np.zeros((T, 1)),
                true_rewards=np.zeros(T),
                seed=k,
            )
        )
    mu = dataset_feature_expectation(ex, trajs).values
    acc = np.zeros(ex.n_candidates)
    for t in trajs:
        traj_sum = np.zeros(ex.n_candidates)
        for row in t.states:
            traj_sum += evaluate(ex, row)
        acc += traj_sum
    np.testing.assert_allclose(mu, acc / len(trajs), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(min_value=2, max_value=6),
    n=st.integers(min_value=5, max_value=120),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_moment_reconstruction_property(d, n, seed):
    """Proposition-style identity: candidate-feature means determine the
    sample mean and covariance exactly."""
    rng = np.random.default_rng(seed)
    S = rng.normal(scale=rng.uniform(0.5, 3.0), size=(n, d))
    ex = make_candidate_extractor(d)
    mean_features = state_features(ex, S).mean(axis=0)
    mean, cov = reconstruct_moments(ex, mean_features)
    np.testing.assert_allclose(mean, S.mean(axis=0), atol=1e-10)
    direct_cov = np.cov(S, rowvar=False, ddof=0)
    np.testing.assert_allclose(cov, direct_cov, atol=1e-10)


def test_scale_behavior_linear_vs_quadratic():
    ex = make_candidate_extractor(3)
    s = np.array([0.3, -1.2, 0.7])
    c = 2.5
    f1 = evaluate(ex, s)
    f2 = evaluate(ex, c * s)
    np.testing.assert_allclose(f2[:3], c * f1[:3], atol=1e-12)
    np.testing.assert_allclose(f2[3:], c * c * f1[3:], atol=1e-12)


def test_mask_selects_exact_columns():
    rng = np.random.default_rng(9)
    ex = make_candidate_extractor(4)
    idx = np.array([0, 5, 13])
    masked = ex.with_mask(idx)
    S = rng.normal(size=(20, 4))
    np.testing.assert_array_equal(
        state_features(masked, S), state_features(ex, S)[:, idx]
    )
    assert masked.active_term_names == [ex.all_term_names[i] for i in idx]
    assert masked.n_active == 3


def test_mask_validation():
    ex = make_candidate_extractor(3)
    with pytest.raises(InputError):
        ex.with_mask([0, 0])
    with pytest.raises(InputError):
        ex.with_mask([9])
    with pytest.raises(InputError):
        ex.with_mask([])


def test_reconstruct_moments_requires_full_candidate_set():
    ex = make_candidate_extractor(3).with_mask([0, 1])
    with pytest.raises(InputError):
        reconstruct_moments(ex, np.zeros(2))


# ---------------------------------------------------------------------------
# standardizer


def test_standardizer_centers_and_scales():
    rng = np.random.default_rng(11)
    F = rng.normal(loc=3.0, scale=2.0, size=(500, 4))
    std = FeatureStandardizer.fit(F)
    Z = std.transform(F)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(Z.std(axis=0, ddof=0), 1.0, atol=1e-10)


def test_standardizer_constant_column_gets_unit_scale():
    F = np.column_stack([np.full(50, 7.0), np.arange(50, dtype=float)])
    std = FeatureStandardizer.fit(F)
    assert std.scale[0] == 1.0
    Z = std.transform(F)
    np.testing.assert_allclose(Z[:, 0], 0.0, atol=1e-12)


def test_standardizer_restrict_matches_full():
    rng = np.random.default_rng(13)
    F = rng.normal(size=(100, 6)) * np.array([1, 2, 3, 4, 5, 6.0])
    std = FeatureStandardizer.fit(F)
    sub = std.restrict(np.array([1, 4]))
    np.testing.assert_allclose(sub.mean, std.mean[[1, 4]], atol=0)
    np.testing.assert_allclose(sub.scale, std.scale[[1, 4]], atol=0)


def test_standardizer_rejects_nonpositive_scale():
    with pytest.raises(InputError):
        FeatureStandardizer(mean=np.zeros(2), scale=np.array([1.0, 0.0]))
