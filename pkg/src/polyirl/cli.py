"""Command-line pipeline: gen-expert -> select-features -> train-irl -> eval.

All stages share one YAML config and one run directory. The manifest in that
directory accumulates stage outputs and stays byte-identical across repeated
runs with the same inputs; wall-clock timing goes to run_info.json instead.

Exit codes: 0 success, 2 configuration problems, 3 data problems,
4 numerical failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .config import FEATURE_SETS, RunConfig, config_echo, load_config
from .density import fit_kde, make_labels
from .envs import EnvId, EnvSpec, TrueReward, make_spec, rollout
from .errors import (
    ConfigError,
    DataError,
    InputError,
    NumericalError,
    PolyIrlError,
)
from .features import make_candidate_extractor, trajectory_features
from .io import git_blob_sha1, load_trajectories, save_trajectories, write_trace_csv
from .manifest import (
    MANIFEST_NAME,
    load_manifest,
    record_run_info,
    require_stage,
    update_manifest,
)
from .maxent import IrlConfig, run_irl
from .metrics import (
    EvalReport,
    evaluate_policy,
    pooled_projection,
    projection_name,
    read_results_csv,
    visitation_distance,
    write_results_csv,
)
from .policy import OptBudget, PolicyParams, make_policy, optimize_policy
from .seeding import derive_seed
from .selection import score_features, select_top_k


def _budget(section, seed: int) -> OptBudget:
    return OptBudget(
        method=section.method,
        iterations=section.iterations,
        gamma=section.gamma,
        seed=seed,
        population=section.population,
        elite_frac=section.elite_frac,
        rollouts_per_eval=section.rollouts_per_eval,
        init_sigma=section.init_sigma,
        sigma_floor=section.sigma_floor,
        noise_decay=section.noise_decay,
        learning_rate=section.learning_rate,
    )


def _apply_seed_override(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    return dataclasses.replace(
        cfg,
        expert=dataclasses.replace(cfg.expert, seed=derive_seed(seed, "expert")),
        irl=dataclasses.replace(cfg.irl, seed=derive_seed(seed, "irl")),
        features=dataclasses.replace(cfg.features, seed=derive_seed(seed, "features")),
        eval=dataclasses.replace(cfg.eval, seed=derive_seed(seed, "eval")),
    )


def _spec(cfg: RunConfig) -> EnvSpec:
    return make_spec(cfg.env.env_id, cfg.env.max_episode_steps)


def _run_paths(cfg: RunConfig, args) -> tuple[Path, Path, Path]:
    out_dir = Path(args.out) if getattr(args, "out", None) else Path(cfg.output_dir)
    dataset = (
        Path(args.dataset)
        if getattr(args, "dataset", None)
        else out_dir / "dataset.jsonl"
    )
    manifest = (
        Path(args.manifest)
        if getattr(args, "manifest", None)
        else out_dir / MANIFEST_NAME
    )
    return out_dir, dataset, manifest


def _load_dataset_checked(path: Path, spec: EnvSpec):
    dataset = load_trajectories(path)
    bad = {t.env_id for t in dataset if t.env_id is not spec.env_id}
    if bad:
        raise DataError(
            f"dataset {path} contains {sorted(e.value for e in bad)} trajectories, "
            f"but config env is {spec.env_id.value}"
        )
    return dataset


# ---------------------------------------------------------------------------
# stages


def cmd_gen_expert(args) -> None:
    t0 = time.perf_counter()
    cfg = _apply_seed_override(load_config(args.config), args.seed)
    spec = _spec(cfg)
    out_dir, dataset_path, manifest_path = _run_paths(cfg, args)

    budget = _budget(cfg.expert.optimizer, derive_seed(cfg.expert.seed, "expert-opt"))
    policy = optimize_policy(spec, TrueReward(), make_policy(spec), budget)

    trajs = [
        rollout(spec, policy, TrueReward(), derive_seed(cfg.expert.seed, "expert-traj", i))
        for i in range(cfg.expert.n_trajectories)
    ]
    returns = np.array([t.true_return for t in trajs])
    mean_ret = float(returns.mean())
    if cfg.expert.min_mean_return is not None and mean_ret < cfg.expert.min_mean_return:
        raise NumericalError(
            f"expert mean return {mean_ret:.2f} is below the configured "
            f"minimum {cfg.expert.min_mean_return:.2f}; increase the expert "
            f"optimizer budget"
        )

    save_trajectories(dataset_path, trajs)
    update_manifest(
        manifest_path,
        "gen-expert",
        {
            "config": config_echo(cfg),
            "env": spec.env_id.value,
            "dataset": {
                "path": str(dataset_path),
                "sha1": git_blob_sha1(dataset_path),
                "n_trajectories": len(trajs),
                "mean_return": mean_ret,
                "std_return": float(returns.std(ddof=0)),
            },
            "expert_policy": policy.to_json_dict(),
        },
    )
    record_run_info(out_dir, "gen-expert", time.perf_counter() - t0)
    print(
        f"gen-expert: {len(trajs)} trajectories, mean return {mean_ret:.2f} "
        f"-> {dataset_path}"
    )


def cmd_select_features(args) -> None:
    t0 = time.perf_counter()
    cfg = _apply_seed_override(load_config(args.config), args.seed)
    spec = _spec(cfg)
    out_dir, dataset_path, manifest_path = _run_paths(cfg, args)
    dataset = _load_dataset_checked(dataset_path, spec)

    kde = fit_kde(
        dataset,
        bandwidth_rule=cfg.kde.bandwidth_rule,
        fixed_cov=cfg.kde.fixed_cov,
    )
    labels = make_labels(kde, dataset)

    extractor = make_candidate_extractor(spec.state_dim)
    X = np.stack([trajectory_features(extractor, t) for t in dataset])
    scores = score_features(X, labels, term_names=extractor.all_term_names)
    selection = select_top_k(scores, cfg.features.k)

    update_manifest(
        manifest_path,
        "select-features",
        {
            "candidates": {"names": extractor.all_term_names},
            "selection": {
                "k": selection.k,
                "selected_indices": [int(i) for i in selection.selected_indices],
                "selected_names": [
                    extractor.all_term_names[i] for i in selection.selected_indices
                ],
                "ranked": [
                    {
                        "term_index": s.term_index,
                        "term_name": s.term_name,
                        "f_statistic": s.f_statistic,
                        "correlation": s.correlation,
                    }
                    for s in selection.ranked
                ],
                "kde": {
                    "bandwidth_rule": cfg.kde.bandwidth_rule,
                    "n_support": kde.n_support,
                    "bandwidth_diag": np.diag(kde.bandwidth_cov).tolist(),
                },
            },
        },
    )
    record_run_info(out_dir, "select-features", time.perf_counter() - t0)
    names = ", ".join(
        extractor.all_term_names[i] for i in selection.selected_indices
    )
    print(f"select-features: top-{selection.k} terms: {names}")


def _handpicked_indices(env_id: EnvId, state_dim: int) -> list[int]:
    res = resources.files("polyirl") / "data" / "handpicked" / f"{env_id.value}.json"
    if not res.is_file():
        raise ConfigError(f"no hand-picked feature list bundled for {env_id.value}")
    spec_names = json.loads(res.read_text())["terms"]
    all_names = make_candidate_extractor(state_dim).all_term_names
    index_of = {name: i for i, name in enumerate(all_names)}
    missing = [n for n in spec_names if n not in index_of]
    if missing:
        raise ConfigError(f"hand-picked terms not in candidate set: {missing}")
    return [index_of[n] for n in spec_names]


def _resolve_feature_set(
    label: str, cfg: RunConfig, spec: EnvSpec, manifest: dict
) -> list[int] | None:
    """Candidate-term indices for a feature-set label; None means all terms."""
    n_cand = make_candidate_extractor(spec.state_dim).n_candidates
    if label == "proposed":
        require_stage(manifest, "select-features", "run select-features first")
        return [int(i) for i in manifest["selection"]["selected_indices"]]
    if label == "linear":
        return list(range(spec.state_dim))
    if label == "all":
        return None
    if label == "random":
        seed = cfg.features.seed if cfg.features.seed is not None else cfg.irl.seed
        rng = np.random.default_rng(derive_seed(seed, "random-features"))
        k = min(cfg.features.k, n_cand)
        return sorted(int(i) for i in rng.choice(n_cand, size=k, replace=False))
    if label == "handpicked":
        return _handpicked_indices(spec.env_id, spec.state_dim)
    raise ConfigError(f"unknown feature set {label!r}; choose from {FEATURE_SETS}")


def _train_label(
    cfg: RunConfig,
    spec: EnvSpec,
    out_dir: Path,
    dataset,
    manifest_path: Path,
    label: str,
) -> dict:
    """Run IRL under one feature-set label and record it in the manifest."""
    manifest = load_manifest(manifest_path)
    indices = _resolve_feature_set(label, cfg, spec, manifest)

    irl_cfg = IrlConfig(
        epochs=cfg.irl.epochs,
        learning_rate=cfg.irl.learning_rate,
        lr_decay=cfg.irl.lr_decay,
        n_rollouts=cfg.irl.n_rollouts,
        rl_budget=_budget(cfg.policy, cfg.irl.seed),
        seed=derive_seed(cfg.irl.seed, "irl-run", _label_index(label)),
    )
    trace_path = out_dir / f"trace_{label}.csv"
    try:
        result = run_irl(spec, dataset, indices, irl_cfg)
    except PolyIrlError as err:
        partial = getattr(err, "partial_trace", None)
        if partial is not None and partial.records:
            write_trace_csv(trace_path, partial.as_rows())
        raise

    write_trace_csv(trace_path, result.trace.as_rows())
    reward = result.reward
    entry = {
        "feature_set": label,
        "selected_indices": (
            None if indices is None else [int(i) for i in indices]
        ),
        "term_names": reward.term_names,
        "theta_std": reward.theta.tolist(),
        "theta_raw": reward.theta_raw.tolist(),
        "standardizer": {
            "mean": reward.standardizer.mean.tolist(),
            "scale": reward.standardizer.scale.tolist(),
        },
        "policy": result.policy.to_json_dict(),
        "trace_csv": str(trace_path),
        "epochs": cfg.irl.epochs,
    }
    irl_section = dict(manifest.get("irl", {}))
    irl_section[label] = entry
    update_manifest(manifest_path, "train-irl", {"irl": irl_section})

    last = result.trace.records[-1] if result.trace.records else None
    tail = (
        f"final grad norm {last.grad_norm:.4f}, mean return {last.mean_true_return:.2f}"
        if last
        else "no epochs run"
    )
    print(f"train-irl[{label}]: {tail} -> {trace_path}")
    return entry


def cmd_train_irl(args) -> None:
    t0 = time.perf_counter()
    cfg = _apply_seed_override(load_config(args.config), args.seed)
    spec = _spec(cfg)
    out_dir, dataset_path, manifest_path = _run_paths(cfg, args)
    dataset = _load_dataset_checked(dataset_path, spec)
    label = args.label or cfg.features.set
    _train_label(cfg, spec, out_dir, dataset, manifest_path, label)
    record_run_info(out_dir, "train-irl", time.perf_counter() - t0)


def _label_index(label: str) -> int:
    return FEATURE_SETS.index(label) if label in FEATURE_SETS else len(FEATURE_SETS)


def cmd_eval(args) -> None:
    t0 = time.perf_counter()
    cfg = _apply_seed_override(load_config(args.config), args.seed)
    spec = _spec(cfg)
    out_dir, dataset_path, manifest_path = _run_paths(cfg, args)
    manifest = load_manifest(manifest_path)

    label = args.label or cfg.features.set
    entry = manifest.get("irl", {}).get(label)
    if entry is None:
        if label == "proposed":
            require_stage(manifest, "train-irl", "run train-irl first")
            trained = sorted(manifest.get("irl", {}))
            raise DataError(
                f"no trained policy for label {label!r}; trained labels: {trained}"
            )
        # baselines are trained on demand so `eval --label linear` is
        # self-contained after gen-expert
        dataset = _load_dataset_checked(dataset_path, spec)
        entry = _train_label(cfg, spec, out_dir, dataset, manifest_path, label)
        manifest = load_manifest(manifest_path)
    policy = PolicyParams.from_json_dict(entry["policy"])

    evaluation = evaluate_policy(
        spec, policy, cfg.eval.n_episodes, cfg.eval.seed, deterministic=True
    )
    expert = _load_dataset_checked(dataset_path, spec)
    w2 = visitation_distance(
        spec,
        expert,
        evaluation.trajectories,
        n_max=cfg.eval.w2_points,
        seed=cfg.eval.seed,
    )
    row = EvalReport(
        env=spec.env_id.value,
        feature_set=label,
        mean_return=evaluation.mean_return,
        std_return=evaluation.std_return,
        n_episodes=evaluation.n_episodes,
        wasserstein2d=w2.value,
        projection=projection_name(spec.env_id),
    )

    results_path = (
        Path(args.results) if args.results else out_dir / "results.csv"
    )
    rows = read_results_csv(results_path) if results_path.exists() else []
    rows = [r for r in rows if not (r.env == row.env and r.feature_set == row.feature_set)]
    rows.append(row)
    rows.sort(key=lambda r: (r.env, r.feature_set))
    write_results_csv(results_path, rows)

    eval_section = dict(manifest.get("eval", {}))
    eval_section[label] = {
        "mean_return": row.mean_return,
        "std_return": row.std_return,
        "n_episodes": row.n_episodes,
        "wasserstein2d": row.wasserstein2d,
        "w2_method": w2.method,
        "w2_epsilon": w2.epsilon,
        "projection": row.projection,
    }
    update_manifest(manifest_path, "eval", {"eval": eval_section})
    record_run_info(out_dir, "eval", time.perf_counter() - t0)
    print(
        f"eval[{label}]: mean return {row.mean_return:.2f} "
        f"(std {row.std_return:.2f}), W2 {row.wasserstein2d:.4f} -> {results_path}"
    )


def cmd_plot_data(args) -> None:
    t0 = time.perf_counter()
    cfg = _apply_seed_override(load_config(args.config), args.seed)
    spec = _spec(cfg)
    out_dir, dataset_path, manifest_path = _run_paths(cfg, args)
    manifest = load_manifest(manifest_path)
    require_stage(manifest, "train-irl", "run train-irl first")

    label = args.label or cfg.features.set
    entry = manifest.get("irl", {}).get(label)
    if entry is None:
        raise DataError(f"no trained policy for label {label!r}")
    policy = PolicyParams.from_json_dict(entry["policy"])

    expert = _load_dataset_checked(dataset_path, spec)
    evaluation = evaluate_policy(
        spec, policy, cfg.eval.n_episodes, cfg.eval.seed, deterministic=True
    )
    expert_cloud = pooled_projection(
        spec, expert, cfg.eval.w2_points, derive_seed(cfg.eval.seed, "plot-expert")
    )
    agent_cloud = pooled_projection(
        spec,
        evaluation.trajectories,
        cfg.eval.w2_points,
        derive_seed(cfg.eval.seed, "plot-agent"),
    )

    payload = {
        "env": spec.env_id.value,
        "feature_set": label,
        "projection": projection_name(spec.env_id),
        "expert_points": expert_cloud.tolist(),
        "agent_points": agent_cloud.tolist(),
        "term_names": entry["term_names"],
        "theta_raw": entry["theta_raw"],
    }
    plot_path = Path(args.plot_out) if args.plot_out else out_dir / f"plot_{label}.json"
    plot_path.parent.mkdir(parents=True, exist_ok=True)
    plot_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    record_run_info(out_dir, "plot-data", time.perf_counter() - t0)
    print(f"plot-data[{label}]: {len(agent_cloud)} agent points -> {plot_path}")


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, label: bool = False) -> None:
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="run directory (default: config output_dir)")
    p.add_argument("--dataset", help="trajectory JSONL (default: <out>/dataset.jsonl)")
    p.add_argument("--manifest", help="manifest path (default: <out>/manifest.json)")
    p.add_argument("--seed", type=int, help="master seed override for all stages")
    if label:
        p.add_argument(
            "--label",
            choices=FEATURE_SETS,
            help="feature set to use (default: features.set from config)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyirl",
        description="Reward recovery from demonstrations with selected polynomial features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-expert", help="train an expert and record demonstrations")
    _add_common(p)
    p.set_defaults(func=cmd_gen_expert)

    p = sub.add_parser("select-features", help="score and select candidate features")
    _add_common(p)
    p.set_defaults(func=cmd_select_features)

    p = sub.add_parser("train-irl", help="recover a reward and policy via MaxEnt IRL")
    _add_common(p, label=True)
    p.set_defaults(func=cmd_train_irl)

    p = sub.add_parser("eval", help="evaluate a trained policy against the expert")
    _add_common(p, label=True)
    p.add_argument("--results", help="results CSV path (default: <out>/results.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot-data", help="dump 2-D projection clouds for plotting")
    _add_common(p, label=True)
    p.add_argument("--plot-out", help="output JSON path (default: <out>/plot_<label>.json)")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, InputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except PolyIrlError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
