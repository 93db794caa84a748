"""Run manifest assembly and persistence.

The manifest captures everything needed to reproduce an output file:
seed, effective semantic configuration (and its hash), prompt hashes,
backend ids, record counts, and the tool version. Filesystem paths and
parallelism settings are deliberately excluded so logically identical
runs emit byte-identical manifests wherever they write.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Optional

from . import __version__
from .io import manifest_from_record, manifest_to_record
from .types import RunManifest
from .util import canonical_json, sha256_hex


def build_manifest(
    seed: int,
    config: Mapping[str, Any],
    counts: Mapping[str, Any],
    prompt_hashes: Optional[Mapping[str, str]] = None,
    backend_ids: Optional[Mapping[str, str]] = None,
    stages: Optional[Mapping[str, str]] = None,
) -> RunManifest:
    config = dict(config)
    return RunManifest(
        seed=seed,
        config_hash=sha256_hex(canonical_json(config)),
        prompt_hashes=dict(prompt_hashes or {}),
        backend_ids=dict(backend_ids or {}),
        counts=dict(counts),
        tool_version=__version__,
        config=config,
        stages=dict(stages or {}),
    )


def write_manifest(path: str | Path, manifest: RunManifest) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_record(manifest), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def read_manifest(path: str | Path) -> RunManifest:
    return manifest_from_record(json.loads(Path(path).read_text(encoding="utf-8")))


def manifest_path_for(output_path: str | Path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + ".manifest.json")
