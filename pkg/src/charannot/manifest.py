"""Run manifests: a sidecar JSON written next to every output file recording
the resolved configuration, input digests, seeds, and backend identity, so
any artifact can be audited and reproduced."""

from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path

from . import __version__


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def manifest_path(output_path: str | Path) -> Path:
    return Path(str(output_path) + ".manifest")


def write_manifest(
    output_path: str | Path,
    subcommand: str,
    config: dict,
    inputs: list[str | Path],
    *,
    seeds: dict | None = None,
    tokenizer_id: str | None = None,
    backend_id: str | None = None,
) -> Path:
    doc = {
        "tool": "charannot",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": {
            str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()
        },
        "seeds": seeds or {},
        "tokenizer_id": tokenizer_id,
        "backend": backend_id,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(
            timespec="seconds"
        ),
    }
    path = manifest_path(output_path)
    path.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path
