"""Run manifests: enough to reproduce any CLI run bit for bit.

A manifest records the command, its fully resolved configuration, the seed,
and SHA-256 hashes of every input and output artifact. It is written beside
the outputs. Wall time is informational; it is the one field expected to
differ between reproductions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError

MANIFEST_SUFFIX = ".manifest.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time_s": self.wall_time_s,
            **({"extra": self.extra} if self.extra else {}),
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        try:
            doc = json.loads(Path(path).read_text())
            return cls(
                command=doc["command"],
                argv=list(doc["argv"]),
                config=doc["config"],
                seed=doc["seed"],
                inputs=dict(doc["inputs"]),
                outputs=dict(doc["outputs"]),
                wall_time_s=float(doc["wall_time_s"]),
                extra=doc.get("extra", {}),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad manifest {path}: {exc}") from exc


def manifest_path_for(output: str | Path) -> Path:
    """Sibling manifest path: DIR/manifest.json for directories, else FILE.manifest.json."""
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + MANIFEST_SUFFIX)


def verify_manifest(path: str | Path) -> list[str]:
    """Re-hash all recorded artifacts; returns a list of mismatch messages."""
    manifest = RunManifest.read(path)
    problems = []
    for kind, entries in (("input", manifest.inputs), ("output", manifest.outputs)):
        for artifact, expected in entries.items():
            p = Path(artifact)
            if not p.exists():
                problems.append(f"{kind} {artifact}: missing")
            elif sha256_file(p) != expected:
                problems.append(f"{kind} {artifact}: hash mismatch")
    return problems
