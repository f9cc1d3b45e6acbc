"""Canonical JSON, hashing, and run-manifest helpers.

Reports use sorted keys and shortest round-trip float repr, so identical
inputs produce byte-identical files that can be diffed and hashed.
"""

import dataclasses
import datetime
import hashlib
import json
from pathlib import Path

import numpy as np

from traceloc.exceptions import DataIntegrityError


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, full-precision floats."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1)


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def config_hash(config) -> str:
    return sha256_bytes(canonical_json(config).encode())


def now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def write_run_manifest(run_dir, config, entries: dict) -> None:
    """Record config hash plus per-file SHA-256 of every produced artifact."""
    run_dir = Path(run_dir)
    files = {}
    for role, path in entries.items():
        path = Path(path)
        files[role] = {
            "path": str(path.relative_to(run_dir) if path.is_relative_to(run_dir) else path),
            "sha256": sha256_file(path),
        }
    doc = {
        "config_hash": config_hash(config),
        "files": files,
        "created_at": now_iso(),
        "code_version": _package_version(),
    }
    write_json(run_dir / "run_manifest.json", doc)


def validate_run_manifest(run_dir) -> dict:
    """Recompute artifact hashes and compare against the stored manifest."""
    run_dir = Path(run_dir)
    try:
        doc = json.loads((run_dir / "run_manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIntegrityError(f"cannot read run manifest in {run_dir}: {exc}") from exc
    for role, entry in doc["files"].items():
        path = run_dir / entry["path"]
        if not path.exists():
            raise DataIntegrityError(f"manifest file missing: {role} ({entry['path']})")
        actual = sha256_file(path)
        if actual != entry["sha256"]:
            raise DataIntegrityError(
                f"hash mismatch for {role}: stored {entry['sha256']}, actual {actual}"
            )
    return doc


def _package_version() -> str:
    from traceloc import __version__

    return __version__
