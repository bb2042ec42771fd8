"""MaxEnt IRL loop: update rule, schedules, trace bookkeeping, reward model."""

from __future__ import annotations

import numpy as np
import pytest

import polyirl.maxent as maxent
from polyirl import InputError, NumericalError, make_spec
from polyirl.envs import LinearFeatureReward, rollout
from polyirl.features import (
    FeatureStandardizer,
    dataset_feature_expectation,
    make_candidate_extractor,
    state_features,
)
from polyirl.maxent import (
    IrlConfig,
    RewardModel,
    apply_update,
    init_theta,
    irl_epoch,
    run_irl,
)
from polyirl.policy import OptBudget
from polyirl.seeding import derive_seed
from polyirl.selection import SelectionResult


def _tiny_cfg(epochs: int, seed: int = 0, n_rollouts: int = 2) -> IrlConfig:
    return IrlConfig(
        epochs=epochs,
        learning_rate=0.2,
        lr_decay=0.97,
        n_rollouts=n_rollouts,
        rl_budget=OptBudget(
            method="cem",
            iterations=1,
            gamma=0.99,
            seed=0,
            population=4,
            rollouts_per_eval=1,
        ),
        seed=seed,
    )


def _di_demos(n: int = 4) -> list:
    spec = make_spec("double_integrator", max_episode_steps=20)
    from polyirl import TrueReward, make_policy

    pol = make_policy(spec)
    return spec, [
        rollout(spec, pol, TrueReward(), derive_seed(7, "demo", i)) for i in range(n)
    ]


def test_init_theta_seeded_and_bounded():
    a = init_theta(12, seed=3)
    b = init_theta(12, seed=3)
    c = init_theta(12, seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(a >= -1.0) and np.all(a < 1.0)


def test_matched_expectations_are_a_fixed_point():
    theta = np.array([0.3, -1.2, 4.0])
    mu = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(apply_update(theta, mu, mu.copy(), 0.7), theta)


def test_update_matches_hand_formula():
    rng = np.random.default_rng(11)
    theta = rng.normal(size=5)
    mu_e = rng.normal(size=5)
    mu_a = rng.normal(size=5)
    got = apply_update(theta, mu_e, mu_a, 0.13)
    np.testing.assert_array_equal(got, theta + 0.13 * (mu_e - mu_a))


def test_alpha_follows_decay_schedule():
    spec, demos = _di_demos()
    res = run_irl(spec, demos, [2, 4], _tiny_cfg(epochs=3))
    alphas = [r.alpha for r in res.trace.records]
    assert alphas == [0.2, 0.2 * 0.97, 0.2 * 0.97**2]


def test_single_epoch_gives_single_record():
    spec, demos = _di_demos()
    res = run_irl(spec, demos, None, _tiny_cfg(epochs=1))
    assert len(res.trace.records) == 1
    assert res.trace.records[0].epoch == 0


def test_zero_epochs_returns_initial_theta():
    spec, demos = _di_demos()
    res = run_irl(spec, demos, [2, 4], _tiny_cfg(epochs=0, seed=9))
    assert res.trace.records == []
    np.testing.assert_array_equal(res.reward.theta, init_theta(2, 9))


def test_trace_rows_schema():
    spec, demos = _di_demos()
    res = run_irl(spec, demos, [2, 4], _tiny_cfg(epochs=2))
    rows = res.trace.as_rows()
    assert len(rows) == 2
    assert list(rows[0]) == ["epoch", "grad_norm", "mean_true_return", "alpha"]


def test_epoch_protocol_is_reproducible_from_seeds():
    """grad_norm and the theta update must be exactly ||mu_e - mu_a|| and
    theta + alpha (mu_e - mu_a) for the rollouts the epoch collected."""
    spec, demos = _di_demos(6)
    cfg = _tiny_cfg(epochs=1, seed=21, n_rollouts=3)
    extractor = maxent._resolve_extractor(spec.state_dim, [2, 4])
    standardizer = maxent.fit_standardizer(extractor, demos)
    mu_e = dataset_feature_expectation(extractor, demos, standardizer).values
    theta0 = init_theta(2, cfg.seed)
    reward = RewardModel(theta0, extractor, standardizer)

    from polyirl import make_policy

    theta1, policy1, record = irl_epoch(spec, reward, make_policy(spec), mu_e, cfg, 0)

    # replay the collection phase with the improved policy and the same seeds
    replays = [
        rollout(
            spec,
            policy1,
            LinearFeatureReward(reward),
            derive_seed(cfg.seed, "collect", i),
        )
        for i in range(cfg.n_rollouts)
    ]
    mu_a = dataset_feature_expectation(extractor, replays, standardizer).values
    assert record.grad_norm == pytest.approx(np.linalg.norm(mu_e - mu_a), abs=1e-12)
    np.testing.assert_allclose(theta1, theta0 + record.alpha * (mu_e - mu_a), atol=1e-12)
    assert record.mean_true_return == pytest.approx(
        np.mean([t.true_return for t in replays])
    )


def test_standardizer_round_trip():
    rng = np.random.default_rng(13)
    ex = make_candidate_extractor(3).with_mask([0, 2, 5])
    std = FeatureStandardizer.fit(state_features(ex, rng.normal(size=(40, 3))))
    theta = rng.normal(size=3)
    model = RewardModel(theta, ex, std)
    np.testing.assert_allclose(model.theta_raw * std.scale, theta, atol=1e-12)


def test_reward_at_matches_affine_formula():
    rng = np.random.default_rng(14)
    for mask in (None, [1, 3, 8, 12]):
        ex = make_candidate_extractor(4)
        if mask is not None:
            ex = ex.with_mask(mask)
        std = FeatureStandardizer.fit(state_features(ex, rng.normal(size=(60, 4))))
        theta = rng.normal(size=ex.n_active)
        model = RewardModel(theta, ex, std)
        for _ in range(50):
            s = rng.normal(size=4)
            phi = state_features(ex, s[None, :])[0]
            want = float(theta @ ((phi - std.mean) / std.scale))
            assert model.reward_at(s) == pytest.approx(want, abs=1e-12)


def test_reward_ordering_invariant_under_positive_scaling():
    rng = np.random.default_rng(15)
    ex = make_candidate_extractor(3).with_mask([0, 2, 4, 8])
    std = FeatureStandardizer.fit(state_features(ex, rng.normal(size=(50, 3))))
    theta = rng.normal(size=4)
    base = RewardModel(theta, ex, std)
    scaled = RewardModel(3.0 * theta, ex, std)
    for _ in range(100):
        a, b = rng.normal(size=3), rng.normal(size=3)
        d1 = base.reward_at(a) - base.reward_at(b)
        d2 = scaled.reward_at(a) - scaled.reward_at(b)
        assert np.sign(d1) == np.sign(d2)
        assert d2 == pytest.approx(3.0 * d1, rel=1e-9, abs=1e-9)


def test_partial_trace_attached_on_failure(monkeypatch):
    spec, demos = _di_demos()
    calls = {"n": 0}
    original = maxent.optimize_policy

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 2:
            raise NumericalError("synthetic optimizer blow-up")
        return original(*args, **kwargs)

    monkeypatch.setattr(maxent, "optimize_policy", flaky)
    with pytest.raises(NumericalError) as ei:
        run_irl(spec, demos, [2, 4], _tiny_cfg(epochs=5))
    assert len(ei.value.partial_trace.records) == 2


def test_foreign_exception_wrapped_with_partial_trace(monkeypatch):
    spec, demos = _di_demos()
    calls = {"n": 0}
    original = maxent.optimize_policy

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 1:
            raise FloatingPointError("overflow in synthetic test")
        return original(*args, **kwargs)

    monkeypatch.setattr(maxent, "optimize_policy", flaky)
    with pytest.raises(NumericalError) as ei:
        run_irl(spec, demos, [2, 4], _tiny_cfg(epochs=4))
    assert len(ei.value.partial_trace.records) == 1
    assert "epoch 1" in str(ei.value)


def test_empty_dataset_rejected():
    spec = make_spec("double_integrator")
    with pytest.raises(InputError):
        run_irl(spec, [], None, _tiny_cfg(epochs=1))


def test_selection_result_and_index_list_agree():
    spec, demos = _di_demos()
    sel = SelectionResult(ranked=[], selected_indices=[2, 4], k=2)
    a = run_irl(spec, demos, sel, _tiny_cfg(epochs=1))
    b = run_irl(spec, demos, [2, 4], _tiny_cfg(epochs=1))
    np.testing.assert_array_equal(a.reward.theta, b.reward.theta)


def test_config_validation():
    ok = OptBudget(method="cem", iterations=1, gamma=0.9, seed=0)
    with pytest.raises(InputError):
        IrlConfig(epochs=-1, learning_rate=0.1, lr_decay=0.9, n_rollouts=1, rl_budget=ok, seed=0)
    with pytest.raises(InputError):
        IrlConfig(epochs=1, learning_rate=0.0, lr_decay=0.9, n_rollouts=1, rl_budget=ok, seed=0)
    with pytest.raises(InputError):
        IrlConfig(epochs=1, learning_rate=0.1, lr_decay=1.5, n_rollouts=1, rl_budget=ok, seed=0)
    with pytest.raises(InputError):
        IrlConfig(epochs=1, learning_rate=0.1, lr_decay=0.9, n_rollouts=0, rl_budget=ok, seed=0)


def test_theta_shape_mismatch_rejected():
    ex = make_candidate_extractor(2).with_mask([0, 1])
    std = FeatureStandardizer.identity(2)
    with pytest.raises(InputError):
        RewardModel(np.zeros(3), ex, std)
