"""Trajectory dataset serialization (JSONL) and content hashing."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .envs import EnvId, Trajectory
from .errors import DataError

_REQUIRED_KEYS = ("env_id", "seed", "states", "actions", "true_rewards")


def save_trajectories(path: str | Path, trajectories: list[Trajectory]) -> None:
    """One JSON object per line; floats keep full repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for t in trajectories:
            rec = {
                "env_id": t.env_id.value,
                "seed": int(t.seed),
                "states": t.states.tolist(),
                "actions": t.actions.tolist(),
                "true_rewards": t.true_rewards.tolist(),
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_trajectories(path: str | Path) -> list[Trajectory]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    out: list[Trajectory] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            missing = [k for k in _REQUIRED_KEYS if k not in rec]
            if missing:
                raise DataError(f"{path}:{lineno}: missing keys {missing}")
            try:
                traj = Trajectory(
                    env_id=EnvId(rec["env_id"]),
                    states=np.asarray(rec["states"], dtype=np.float64),
                    actions=np.asarray(rec["actions"], dtype=np.float64),
                    true_rewards=np.asarray(rec["true_rewards"], dtype=np.float64),
                    seed=int(rec["seed"]),
                )
            except (ValueError, TypeError) as err:
                raise DataError(f"{path}:{lineno}: {err}") from err
            out.append(traj)
    if not out:
        raise DataError(f"dataset is empty: {path}")
    return out


TRACE_HEADER = ["epoch", "grad_norm", "mean_true_return", "alpha"]


def write_trace_csv(path: str | Path, rows: list[dict]) -> None:
    """IRL training trace; one row per epoch, floats at full repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for r in rows:
            fh.write(
                f"{r['epoch']},{float(r['grad_norm'])!r},"
                f"{float(r['mean_true_return'])!r},{float(r['alpha'])!r}\n"
            )


def git_blob_sha1(path: str | Path) -> str:
    """SHA-1 of the file exactly as `git hash-object` computes it."""
    data = Path(path).read_bytes()
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()
