"""Run manifest: the single source of truth for every reported number.

One JSON file per run directory, updated section-by-section as pipeline
stages complete. Timestamps honor SOURCE_DATE_EPOCH so reproducibility
tests can pin them.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

from .. import __version__

MANIFEST_NAME = "manifest.json"


def now_iso() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def manifest_path(run_dir: str | Path) -> Path:
    return Path(run_dir) / MANIFEST_NAME


def load_manifest(run_dir: str | Path) -> dict:
    path = manifest_path(run_dir)
    if not path.is_file():
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def update_manifest(run_dir: str | Path, updates: dict) -> dict:
    """Replace the given top-level sections and rewrite the manifest."""
    data = load_manifest(run_dir)
    if not data:
        data = {"tool_version": __version__, "created_at": now_iso()}
    data.update(updates)
    data["updated_at"] = now_iso()
    path = manifest_path(run_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data
