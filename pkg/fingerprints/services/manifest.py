# fingerprints/services/manifest.py

from __future__ import annotations

import json
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from cryptography.hazmat.primitives import hashes

from fingerprints.services.config import RunConfig

MANIFEST_NAME = "manifest.json"

TRACKED_PACKAGES = (
    "Django",
    "djangorestframework",
    "python-dotenv",
    "cryptography",
    "numpy",
    "scipy",
    "pandas",
    "scikit-learn",
)


def canonical_json_bytes(payload: Mapping[str, Any]) -> bytes:
    """
    Canonical JSON bytes for hashing:
    - Sorted keys for deterministic field order
    - No extraneous whitespace
    - UTF-8 encoding
    """
    return json.dumps(
        payload,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    digest = hashes.Hash(hashes.SHA256())
    digest.update(data)
    return digest.finalize().hex()


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashes.Hash(hashes.SHA256())
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.finalize().hex()


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def build_manifest(
    command: str,
    config: RunConfig,
    inputs: Optional[Mapping[str, Union[str, Path]]] = None,
) -> Dict[str, Any]:
    """
    Everything needed to reproduce a run: command, effective config and its
    hash, seed, input digests and package versions. No wall-clock fields, so
    the manifest itself is reproducible.
    """
    effective = config.as_dict()
    return {
        "command": command,
        "config": effective,
        "config_hash": sha256_hex(canonical_json_bytes(effective)),
        "seed": config.seed,
        "inputs": {
            name: {"file": Path(path).name, "sha256": file_sha256(path)}
            for name, path in sorted((inputs or {}).items())
        },
        "versions": package_versions(),
    }
