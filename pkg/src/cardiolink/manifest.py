"""Stage manifests: content hashes of every input and output artifact.

Timestamps live only here, so pipeline artifacts themselves stay
byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def path_sha256(path: str | Path) -> str:
    """File hash, or for a directory the hash of its (name, hash) listing."""
    path = Path(path)
    if path.is_dir():
        digest = hashlib.sha256()
        for child in sorted(path.rglob("*")):
            if child.is_file():
                digest.update(str(child.relative_to(path)).encode("utf-8"))
                digest.update(file_sha256(child).encode("ascii"))
        return digest.hexdigest()
    return file_sha256(path)


class Manifest:
    """Append-only JSON list of stage records under the output directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if self.path.exists():
            self.entries = json.loads(self.path.read_text(encoding="utf-8"))
        else:
            self.entries = []
        self._hash_cache: dict[str, str] = {}

    def _hash(self, path) -> str:
        key = str(path)
        if key not in self._hash_cache:
            self._hash_cache[key] = path_sha256(path)
        return self._hash_cache[key]

    def record(self, stage: str, inputs: dict, outputs: dict, params: dict | None = None):
        entry = {
            "stage": stage,
            "timestamp": time.time(),
            "inputs": {name: {"path": str(p), "sha256": self._hash(p)}
                       for name, p in inputs.items() if p is not None},
            "outputs": {name: {"path": str(p), "sha256": self._hash(p)}
                        for name, p in outputs.items() if p is not None},
            "params": params or {},
        }
        self.entries.append(entry)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.entries, sort_keys=True, indent=2),
                             encoding="utf-8")
        return entry
