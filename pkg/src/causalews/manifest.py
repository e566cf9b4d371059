"""Run manifests: every CLI command appends one entry with SHA-256 input
digests and the paths it produced, keeping end-to-end runs reproducible and
verifiable byte-for-byte."""

from __future__ import annotations

import hashlib
from pathlib import Path

from .jsonio import dumps_canonical


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class RunManifest:
    """Append-only command log stored as canonical JSON in the run directory.

    Paths inside entries are stored relative to the manifest directory so two
    identical runs in different directories produce identical bytes.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.path = self.directory / "manifest.json"
        self.doc = {"run_id": None, "entries": []}
        if self.path.exists():
            import json

            self.doc = json.loads(self.path.read_text())

    def _rel(self, path: str | Path) -> str:
        p = Path(path)
        try:
            return p.relative_to(self.directory).as_posix()
        except ValueError:
            return p.as_posix()

    def append(
        self,
        command: str,
        config_hash: str,
        inputs: dict[str, str | Path],
        artifacts: list[str | Path],
        checkpoints: list[str | Path] = (),
    ) -> None:
        entry = {
            "command": command,
            "config_hash": config_hash,
            "inputs": {self._rel(p): sha256_file(p) for p in inputs.values()}
            if isinstance(inputs, dict)
            else {self._rel(p): sha256_file(p) for p in inputs},
            "artifacts": sorted(self._rel(p) for p in artifacts),
            "checkpoints": sorted(self._rel(p) for p in checkpoints),
        }
        if self.doc["run_id"] is None:
            self.doc["run_id"] = sha256_text(dumps_canonical(entry))[:12]
        self.doc["entries"].append(entry)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path.write_text(dumps_canonical(self.doc) + "\n")
