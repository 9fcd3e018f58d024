"""Run manifests: everything that determines a report, hashed."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    inputs: dict = field(default_factory=dict)  # table name -> {"path", "sha256"}
    lexicons: dict = field(default_factory=dict)  # lexicon name -> sha256
    counting_mode: str = "flagged_charts"
    model_mode: str = "per_predictor"
    classifier: str = "off"  # "off" or the model file's sha256
    seed: int = 0
    version: str = field(default_factory=tool_version)

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    @property
    def data_digest(self) -> str:
        """Digest of everything upstream of model fitting (model mode left out)."""
        d = asdict(self)
        d.pop("model_mode")
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode("utf-8")).hexdigest()

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), sort_keys=True, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> RunManifest:
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def build_manifest(tables: dict, lexicon_paths: dict, counting_mode, model_mode, classifier_path=None,
                   seed=0) -> RunManifest:
    """Hash the input tables, lexicon files and optional classifier file.

    Paths are recorded as given; the hashes are what tie a report to its data.
    """
    inputs = {name: {"path": str(p), "sha256": file_sha256(p)} for name, p in sorted(tables.items())}
    lexicons = {name: file_sha256(p) for name, p in sorted(lexicon_paths.items())}
    classifier = file_sha256(classifier_path) if classifier_path else "off"
    return RunManifest(inputs, lexicons, counting_mode, model_mode, classifier, int(seed))
