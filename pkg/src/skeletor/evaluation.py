"""Protocol evaluation: corrupt, refine, aggregate per-sequence MSE.

MSE is reported in normalized coordinate units (mean limb length = 1), so
numbers are comparable across corpora. The corruption for a given
(sequence, spec) is fully determined by the spec's seed, which keeps every
model in a comparison looking at exactly the same corrupted cells.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corruption import CorruptionSpec, corrupt
from .errors import ConfigError
from .inference import InferenceConfig, WindowPredictor, refine_windows
from .skeleton import KinematicTree, SkeletonSequence, normalize
from .training import ALL_FRAMES, SCOPES, _scope_mask

SWEEP_AXES = ("noise_s", "train_mask_p", "joint_vs_frame")


@dataclass
class EvalReport:
    """Per-sequence MSEs plus min/ave/max for one protocol point."""

    protocol: dict
    scope: str
    model_id: str
    per_sequence: list[dict]

    @property
    def mses(self) -> list[float]:
        return [entry["mse"] for entry in self.per_sequence]

    @property
    def min_mse(self) -> float:
        return min(self.mses)

    @property
    def ave_mse(self) -> float:
        return float(np.mean(self.mses))

    @property
    def max_mse(self) -> float:
        return max(self.mses)

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "scope": self.scope,
            "model_id": self.model_id,
            "per_sequence": self.per_sequence,
            "min": self.min_mse,
            "ave": self.ave_mse,
            "max": self.max_mse,
        }


def sequence_mse(
    model: WindowPredictor,
    seq: SkeletonSequence,
    tree: KinematicTree,
    spec: CorruptionSpec,
    inference: InferenceConfig,
    scope: str = ALL_FRAMES,
) -> float:
    """Corrupt one sequence, refine it, and measure MSE against the original."""
    normed, _ = normalize(seq, tree)
    corrupted, record = corrupt(normed, spec, tree)
    refined = refine_windows(corrupted.joints, corrupted.confidence, model.predict, inference)
    sq = (refined - normed.joints) ** 2
    mask = _scope_mask(sq.reshape(sq.shape[0], -1).shape, record, scope)
    if mask is None:
        return float(sq.mean())
    flat = sq.reshape(sq.shape[0], -1)
    count = mask.sum()
    if count == 0:
        raise ConfigError("scope selects no cells for this sequence")
    return float((flat * mask).sum() / count)


def evaluate(
    model: WindowPredictor,
    sequences: list[SkeletonSequence],
    tree: KinematicTree,
    spec: CorruptionSpec,
    inference: InferenceConfig | None = None,
    scope: str = ALL_FRAMES,
    model_id: str = "",
) -> EvalReport:
    if not sequences:
        raise ConfigError("evaluation corpus is empty")
    if scope not in SCOPES:
        raise ConfigError(f"scope must be one of {SCOPES}, got {scope!r}")
    inference = inference or InferenceConfig()
    per_sequence = [
        {"id": seq.id, "mse": sequence_mse(model, seq, tree, spec, inference, scope)} for seq in sequences
    ]
    protocol = spec.to_json()
    protocol["window_size"] = inference.window_size
    protocol["radius"] = inference.radius
    return EvalReport(protocol=protocol, scope=scope, model_id=model_id, per_sequence=per_sequence)


def sweep(
    axis: str,
    values: list,
    models: WindowPredictor | list[WindowPredictor],
    sequences: list[SkeletonSequence],
    tree: KinematicTree,
    base_spec: CorruptionSpec,
    inference: InferenceConfig | None = None,
    scope: str = ALL_FRAMES,
    model_ids: list[str] | None = None,
) -> list[EvalReport]:
    """One EvalReport per grid point along the chosen axis.

    noise_s varies the spec's noise strength; joint_vs_frame varies its mode;
    train_mask_p keeps the spec fixed and pairs each value with its own model
    (models must then be a list aligned with values).
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    model_list = models if isinstance(models, list) else [models] * len(values)
    if axis == "train_mask_p" and (not isinstance(models, list) or len(models) != len(values)):
        raise ConfigError("train_mask_p sweeps need one model per grid value")
    if len(model_list) != len(values):
        raise ConfigError("model list must align with grid values")
    ids = model_ids or ["" for _ in values]
    reports = []
    for value, model, mid in zip(values, model_list, ids):
        if axis == "noise_s":
            spec = replace(base_spec, s=float(value))
        elif axis == "joint_vs_frame":
            spec = replace(base_spec, mode=str(value))
        else:
            spec = base_spec
        report = evaluate(model, sequences, tree, spec, inference, scope, model_id=mid)
        report.protocol["axis"] = axis
        report.protocol["value"] = value
        reports.append(report)
    return reports


def format_reports(reports: list[EvalReport]) -> str:
    """Aligned text table mirroring the min/ave/max layout."""
    header = f"{'point':>18} {'min':>10} {'ave':>10} {'max':>10}"
    lines = [header, "-" * len(header)]
    for r in reports:
        label = str(r.protocol.get("value", r.protocol.get("mode", "")))
        lines.append(f"{label:>18} {r.min_mse:>10.4f} {r.ave_mse:>10.4f} {r.max_mse:>10.4f}")
    return "\n".join(lines)
