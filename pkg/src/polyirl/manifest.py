"""Run manifest: one JSON file that accumulates stage outputs.

The manifest is fully deterministic (sorted keys, no timestamps), so a
repeated run with the same config and seeds produces byte-identical files.
Wall-clock details go to a `run_info.json` sidecar instead. Writes are
atomic: a temp file in the same directory is renamed over the target.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path

from .errors import DataError

MANIFEST_NAME = "manifest.json"
RUN_INFO_NAME = "run_info.json"

STAGES = ("gen-expert", "select-features", "train-irl", "eval", "plot-data")


def _atomic_write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path} (run gen-expert first)")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"manifest {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise DataError(f"manifest {path} must contain a JSON object")
    return data


def save_manifest(path: str | Path, manifest: dict) -> None:
    _atomic_write_json(Path(path), manifest)


def update_manifest(path: str | Path, stage: str, updates: dict) -> dict:
    """Merge stage outputs into the manifest and mark the stage complete."""
    if stage not in STAGES:
        raise DataError(f"unknown stage {stage!r}")
    path = Path(path)
    manifest = load_manifest(path) if path.exists() else {}
    manifest.update(updates)
    stages = list(manifest.get("stages", []))
    if stage not in stages:
        stages.append(stage)
    manifest["stages"] = stages
    save_manifest(path, manifest)
    return manifest


def require_stage(manifest: dict, stage: str, hint: str) -> None:
    if stage not in manifest.get("stages", []):
        raise DataError(f"manifest has no {stage!r} stage yet; {hint}")


def record_run_info(out_dir: str | Path, stage: str, seconds: float) -> None:
    """Append wall-clock info for a stage to the non-deterministic sidecar."""
    path = Path(out_dir) / RUN_INFO_NAME
    info = {}
    if path.exists():
        try:
            info = json.loads(path.read_text())
        except json.JSONDecodeError:
            info = {}
    entries = info.setdefault("stages", [])
    entries.append(
        {
            "stage": stage,
            "wall_seconds": round(seconds, 3),
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
    )
    _atomic_write_json(path, info)
