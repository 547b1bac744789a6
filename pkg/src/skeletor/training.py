"""Windowed training loop: corrupt, reconstruct, MSE, Adam.

Every iteration samples `batch_size` windows uniformly from the normalized
training sequences, corrupts each one (mask or noise, drawn from the
configured mix), and takes one Adam step on the reconstruction MSE against
the uncorrupted window. Dev MSE is monitored on a fixed protocol: the dev
sequences with 15% of frames masked by confidence, cut into non-overlapping
windows. All randomness derives from the run seed through named substreams,
so identical (corpus, config, seed) reproduce bit-identical parameters.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, zero_grads
from .checkpoint import save_checkpoint
from .corruption import MASK_FRAMES, NOISE_FRAMES, CorruptionRecord, CorruptionSpec, corrupt
from .datagen import Corpus
from .errors import ConfigError, NumericalError, ShapeError
from .model import ModelConfig, SkeletorModel, assemble_input
from .optim import AdamState, adam_step
from .rng import substream
from .skeleton import KinematicTree, SkeletonSequence, normalize

log = logging.getLogger(__name__)

ALL_FRAMES = "all_frames"
CORRUPTED_ONLY = "corrupted_only"
SCOPES = (ALL_FRAMES, CORRUPTED_ONLY)

# Monitoring protocol: always the same dev sequences with 15% masked.
DEV_MASK_P = 0.15


def default_corruptions() -> tuple[CorruptionSpec, ...]:
    return (
        CorruptionSpec(mode=MASK_FRAMES, p=0.10),
        CorruptionSpec(mode=NOISE_FRAMES, p=0.15, s=0.3),
    )


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    window_size: int = 32
    stride: int = 1
    batch_size: int = 16
    iterations: int = 5000
    learning_rate: float = 1e-5
    corruptions: tuple[CorruptionSpec, ...] = field(default_factory=default_corruptions)
    mix: tuple[float, ...] = (0.5, 0.5)
    seed: int = 0
    checkpoint_every: int = 1000
    dev_eval_every: int = 1000
    loss_scope: str = ALL_FRAMES

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.iterations < 1 or self.batch_size < 1 or self.window_size < 1:
            raise ConfigError("iterations, batch_size and window_size must be >= 1")
        if self.checkpoint_every < 1 or self.dev_eval_every < 1:
            raise ConfigError("cadences must be >= 1")
        if self.loss_scope not in SCOPES:
            raise ConfigError(f"loss scope must be one of {SCOPES}, got {self.loss_scope!r}")
        if len(self.mix) != len(self.corruptions) or not self.corruptions:
            raise ConfigError("mix weights must match the corruption specs one-to-one")
        if any(w < 0 for w in self.mix) or sum(self.mix) <= 0:
            raise ConfigError("mix weights must be non-negative and sum to > 0")

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "window_size": self.window_size,
            "stride": self.stride,
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "corruptions": [c.to_json() for c in self.corruptions],
            "mix": list(self.mix),
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "dev_eval_every": self.dev_eval_every,
            "loss_scope": self.loss_scope,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        try:
            if "model" in doc:
                doc["model"] = ModelConfig.from_json(doc["model"])
            if "corruptions" in doc:
                doc["corruptions"] = tuple(CorruptionSpec.from_json(c) for c in doc["corruptions"])
            if "mix" in doc:
                doc["mix"] = tuple(doc["mix"])
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from exc


@dataclass
class TrainReport:
    """Dev-MSE checkpoints, final test aggregates, and the config snapshot.

    Wall time is carried in memory but not serialized: re-running the same
    config must reproduce the report file byte for byte, and timing is
    recorded in the run manifest instead.
    """

    checkpoints: list[dict]
    final_test: dict | None
    best_iteration: int
    config: dict
    wall_time_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "checkpoints": self.checkpoints,
            "final_test": self.final_test,
            "best_iteration": self.best_iteration,
            "config": self.config,
        }


def make_windows(seq: SkeletonSequence, window_size: int, stride: int = 1) -> list[SkeletonSequence]:
    """Fixed-size windows at the given stride; short sequences extend the last frame."""
    if stride < 1 or window_size < 1:
        raise ConfigError("window_size and stride must be >= 1")
    t = seq.n_frames
    if t < window_size:
        pad = window_size - t
        joints = np.concatenate([seq.joints, np.repeat(seq.joints[-1:], pad, axis=0)])
        conf = np.concatenate([seq.confidence, np.repeat(seq.confidence[-1:], pad, axis=0)])
        return [SkeletonSequence(joints, conf, seq.id, seq.frame_rate)]
    return [
        SkeletonSequence(
            seq.joints[s : s + window_size].copy(),
            seq.confidence[s : s + window_size].copy(),
            seq.id,
            seq.frame_rate,
        )
        for s in range(0, t - window_size + 1, stride)
    ]


def _scope_mask(shape: tuple[int, ...], record: CorruptionRecord | None, scope: str) -> np.ndarray | None:
    """Coordinate-level 0/1 weights for the requested loss scope (None = all)."""
    if scope == ALL_FRAMES:
        return None
    if scope != CORRUPTED_ONLY:
        raise ConfigError(f"loss scope must be one of {SCOPES}, got {scope!r}")
    if record is None:
        raise ConfigError("corrupted_only scope needs a corruption record")
    return np.repeat(record.cells, 3, axis=1).astype(np.float64).reshape(shape)


def mse_loss(pred, target: np.ndarray, record: CorruptionRecord | None = None, scope: str = ALL_FRAMES) -> Tensor:
    """Mean squared coordinate error over the scoped cells; differentiable."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target {target.shape}")
    diff = ad.sub(pred, Tensor(target))
    sq = ad.mul(diff, diff)
    mask = _scope_mask(pred.shape, record, scope)
    if mask is None:
        return ad.mean_all(sq)
    count = mask.sum()
    if count == 0:
        raise ConfigError("loss scope selects no cells")
    return ad.scale(ad.sum_all(ad.mul(sq, Tensor(mask))), 1.0 / count)


def _flatten(joints: np.ndarray) -> np.ndarray:
    return joints.reshape(joints.shape[0], -1)


class _WindowPool:
    """Normalized training windows addressed by (sequence, start) pairs."""

    def __init__(self, sequences: list[SkeletonSequence], tree: KinematicTree, window_size: int, stride: int):
        self.window_size = window_size
        self.index: list[tuple[int, int]] = []
        self.normalized: list[SkeletonSequence] = []
        self.padded: dict[int, SkeletonSequence] = {}
        for si, seq in enumerate(sequences):
            normed, _ = normalize(seq, tree)
            self.normalized.append(normed)
            if normed.n_frames < window_size:
                self.padded[si] = make_windows(normed, window_size, stride)[0]
                self.index.append((si, 0))
            else:
                for s in range(0, normed.n_frames - window_size + 1, stride):
                    self.index.append((si, s))
        if not self.index:
            raise ConfigError("no training windows; corpus is empty")

    def __len__(self) -> int:
        return len(self.index)

    def window(self, k: int) -> SkeletonSequence:
        si, start = self.index[k]
        if si in self.padded:
            return self.padded[si].copy()
        seq = self.normalized[si]
        return SkeletonSequence(
            seq.joints[start : start + self.window_size].copy(),
            seq.confidence[start : start + self.window_size].copy(),
            seq.id,
            seq.frame_rate,
        )


def build_dev_windows(
    sequences: list[SkeletonSequence], tree: KinematicTree, window_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed monitoring batch: dev sequences, 15% confidence-masked, tiled.

    Returns (inputs_coords, inputs_conf, targets) stacked over windows.
    """
    spec = CorruptionSpec(mode=MASK_FRAMES, p=DEV_MASK_P)
    coords, confs, targets = [], [], []
    for seq in sequences:
        normed, _ = normalize(seq, tree)
        corrupted, _ = corrupt(normed, spec, tree)
        clean_windows = make_windows(normed, window_size, stride=window_size)
        dirty_windows = make_windows(corrupted, window_size, stride=window_size)
        for clean, dirty in zip(clean_windows, dirty_windows):
            coords.append(_flatten(dirty.joints))
            confs.append(dirty.confidence)
            targets.append(_flatten(clean.joints))
    if not coords:
        raise ConfigError("no dev windows; corpus is empty")
    return np.stack(coords), np.stack(confs), np.stack(targets)


def dev_mse(model: SkeletorModel, dev_batch: tuple[np.ndarray, np.ndarray, np.ndarray], chunk: int = 64) -> float:
    coords, confs, targets = dev_batch
    total, count = 0.0, 0
    for i in range(0, coords.shape[0], chunk):
        pred = model.predict(coords[i : i + chunk], confs[i : i + chunk])
        total += float(((pred - targets[i : i + chunk]) ** 2).sum())
        count += targets[i : i + chunk].size
    return total / count


def train(
    corpus: Corpus,
    config: TrainConfig,
    checkpoint_path: str | Path | None = None,
) -> tuple[SkeletorModel, TrainReport]:
    """Run the full loop; returns the best-dev-MSE model and the report.

    When `checkpoint_path` is given, the best-dev parameters are written
    there and cadence checkpoints appear as stamped siblings
    (`<stem>-<iteration>.ckpt`), all in the binary checkpoint format.
    """
    if not corpus.train or not corpus.dev:
        raise ConfigError("corpus must have non-empty train and dev splits")
    t_start = time.monotonic()
    tree = corpus.tree
    model = SkeletorModel.init(config.model, substream(config.seed, "init"))
    adam = AdamState(learning_rate=config.learning_rate)
    batch_rng = substream(config.seed, "batching")
    corrupt_rng = substream(config.seed, "corruption")

    pool = _WindowPool(corpus.train, tree, config.window_size, config.stride)
    dev_batch = build_dev_windows(corpus.dev, tree, config.window_size)
    mix = np.asarray(config.mix, dtype=np.float64)
    mix = mix / mix.sum()

    out_path = Path(checkpoint_path) if checkpoint_path is not None else None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
    ckpt_config = {"model": config.model.to_json(), "tree": tree.to_json()}

    checkpoints: list[dict] = []
    best = {"iteration": 0, "mse": float("inf"), "params": None}

    def record_dev(iteration: int) -> None:
        mse = dev_mse(model, dev_batch)
        checkpoints.append({"iteration": iteration, "dev_mse": mse})
        if mse < best["mse"]:
            best.update(iteration=iteration, mse=mse, params={k: v.data.copy() for k, v in model.params.items()})
        log.info("iteration %d: dev MSE %.6f", iteration, mse)

    record_dev(0)
    for it in range(1, config.iterations + 1):
        picks = batch_rng.integers(0, len(pool), size=config.batch_size)
        spec_ids = corrupt_rng.choice(len(config.corruptions), size=config.batch_size, p=mix)
        inputs_c, inputs_f, targets, masks = [], [], [], []
        for k, spec_id in zip(picks, spec_ids):
            window = pool.window(int(k))
            spec = config.corruptions[int(spec_id)]
            corrupted, record = corrupt(window, spec, tree, rng=corrupt_rng)
            inputs_c.append(_flatten(corrupted.joints))
            inputs_f.append(corrupted.confidence)
            targets.append(_flatten(window.joints))
            masks.append(np.repeat(record.cells, 3, axis=1))
        batch_in = assemble_input(np.stack(inputs_c), np.stack(inputs_f), config.model)
        batch_target = np.stack(targets)
        pred = model.forward(batch_in)
        if config.loss_scope == ALL_FRAMES:
            loss = mse_loss(pred, batch_target)
        else:
            weights = np.stack(masks).astype(np.float64)
            count = weights.sum()
            if count == 0:
                raise ConfigError("loss scope selects no cells in this batch")
            diff = ad.sub(pred, Tensor(batch_target))
            loss = ad.scale(ad.sum_all(ad.mul(ad.mul(diff, diff), Tensor(weights))), 1.0 / count)
        if not np.isfinite(loss.data):
            raise NumericalError(f"loss became non-finite at iteration {it}")
        backward(loss)
        adam_step(adam, model.params, {k: p.grad for k, p in model.params.items()})
        zero_grads(model.params.values())

        if it % config.dev_eval_every == 0 or it == config.iterations:
            if not checkpoints or checkpoints[-1]["iteration"] != it:
                record_dev(it)
        if out_path is not None and (it % config.checkpoint_every == 0 or it == config.iterations):
            stamped = out_path.with_name(f"{out_path.stem}-{it:06d}.ckpt")
            save_checkpoint(stamped, model.params, ckpt_config)

    best_params = best["params"] if best["params"] is not None else {k: v.data.copy() for k, v in model.params.items()}
    best_model = SkeletorModel(config.model, {k: Tensor(v, requires_grad=True) for k, v in best_params.items()})
    if out_path is not None:
        save_checkpoint(out_path, best_model.params, ckpt_config)

    final_test = None
    if corpus.test:
        from .evaluation import evaluate  # local import; evaluation depends on this module
        from .inference import InferenceConfig

        report = evaluate(
            best_model,
            corpus.test,
            tree,
            CorruptionSpec(mode=MASK_FRAMES, p=DEV_MASK_P),
            InferenceConfig(window_size=config.window_size, radius=min(2, (config.window_size - 1) // 2)),
            scope=ALL_FRAMES,
        )
        final_test = {"min": report.min_mse, "ave": report.ave_mse, "max": report.max_mse}

    report = TrainReport(
        checkpoints=checkpoints,
        final_test=final_test,
        best_iteration=int(best["iteration"]),
        config=config.to_json(),
        wall_time_s=time.monotonic() - t_start,
    )
    return best_model, report
