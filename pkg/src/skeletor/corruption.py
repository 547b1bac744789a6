"""Deterministic corruption of skeleton sequences.

Four protocols: mask whole frames, mask individual joints, add bounded
uniform noise to whole frames, or to individual joints. Frame/joint
selection ranks by detection confidence (highest first, ties to the lower
index) or draws uniformly under the spec seed, so a fixed spec always
corrupts the same cells of the same sequence.

Masking zeroes both coordinates and confidence, matching the network's
masked-input encoding. Noise leaves confidences untouched; each coordinate
is perturbed independently by U(-s*limb_i, s*limb_i), where limb_i is the
sequence-average length of the bone ending at joint i and the root (which
has no limb) uses the mean limb length as its bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .skeleton import KinematicTree, SkeletonSequence, limb_lengths

MASK_FRAMES = "mask_frames"
MASK_JOINTS = "mask_joints"
NOISE_FRAMES = "noise_frames"
NOISE_JOINTS = "noise_joints"
MODES = (MASK_FRAMES, MASK_JOINTS, NOISE_FRAMES, NOISE_JOINTS)

BY_CONFIDENCE = "by_confidence"
RANDOM = "random"
SELECTIONS = (BY_CONFIDENCE, RANDOM)


@dataclass(frozen=True)
class CorruptionSpec:
    mode: str
    p: float
    s: float = 0.0
    seed: int = 0
    selection: str = BY_CONFIDENCE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown corruption mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"selection fraction p must lie in [0, 1], got {self.p}")
        if self.s < 0.0:
            raise ConfigError(f"noise strength s must be >= 0, got {self.s}")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"unknown selection {self.selection!r}; expected one of {SELECTIONS}")

    @property
    def is_noise(self) -> bool:
        return self.mode in (NOISE_FRAMES, NOISE_JOINTS)

    def to_json(self) -> dict:
        return {"mode": self.mode, "p": self.p, "s": self.s, "seed": self.seed, "selection": self.selection}

    @classmethod
    def from_json(cls, doc: dict) -> "CorruptionSpec":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad corruption spec: {exc}") from exc


@dataclass
class CorruptionRecord:
    """Which cells were corrupted, and by how much.

    `cells` is a (T, N) boolean mask; `offsets` holds the applied noise per
    coordinate (zero where nothing was added, None for mask modes). Enough
    to restrict a loss to the corrupted positions.
    """

    mode: str
    cells: np.ndarray
    frame_indices: tuple[int, ...]
    offsets: np.ndarray | None = None

    @property
    def cell_pairs(self) -> list[tuple[int, int]]:
        return [(int(t), int(j)) for t, j in np.argwhere(self.cells)]

    def to_json(self) -> dict:
        doc = {
            "mode": self.mode,
            "frame_indices": list(self.frame_indices),
            "cells": [[int(t), int(j)] for t, j in self.cell_pairs],
        }
        if self.offsets is not None:
            doc["offsets"] = [
                {"frame": int(t), "joint": int(j), "offset": self.offsets[t, j].tolist()}
                for t, j in np.argwhere(self.cells)
            ]
        return doc


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def select_frames_by_confidence(seq: SkeletonSequence, p: float) -> list[int]:
    """Indices of the round(p*T) frames with the highest mean joint confidence."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"selection fraction p must lie in [0, 1], got {p}")
    count = round_half_up(p * seq.n_frames)
    means = seq.confidence.mean(axis=1)
    order = np.lexsort((np.arange(seq.n_frames), -means))
    return sorted(int(i) for i in order[:count])


def _select_cells(seq: SkeletonSequence, p: float, selection: str, rng: np.random.Generator) -> np.ndarray:
    """Boolean (T, N) mask with exactly round(p*T*N) cells set."""
    t, n = seq.confidence.shape
    count = round_half_up(p * t * n)
    flat_conf = seq.confidence.reshape(-1)
    if selection == BY_CONFIDENCE:
        order = np.lexsort((np.arange(t * n), -flat_conf))
        chosen = order[:count]
    else:
        chosen = rng.permutation(t * n)[:count]
    mask = np.zeros(t * n, dtype=bool)
    mask[chosen] = True
    return mask.reshape(t, n)


def _frame_cells(seq: SkeletonSequence, frames: list[int]) -> np.ndarray:
    mask = np.zeros((seq.n_frames, seq.n_joints), dtype=bool)
    mask[frames, :] = True
    return mask


def mask_frames(seq: SkeletonSequence, spec: CorruptionSpec) -> tuple[SkeletonSequence, CorruptionRecord]:
    if spec.mode != MASK_FRAMES:
        raise ConfigError(f"mask_frames called with mode {spec.mode!r}")
    frames = select_frames_by_confidence(seq, spec.p)
    out = seq.copy()
    out.joints[frames, :, :] = 0.0
    out.confidence[frames, :] = 0.0
    return out, CorruptionRecord(spec.mode, _frame_cells(seq, frames), tuple(frames))


def mask_joints(seq: SkeletonSequence, spec: CorruptionSpec) -> tuple[SkeletonSequence, CorruptionRecord]:
    if spec.mode != MASK_JOINTS:
        raise ConfigError(f"mask_joints called with mode {spec.mode!r}")
    cells = _select_cells(seq, spec.p, spec.selection, np.random.default_rng(spec.seed))
    out = seq.copy()
    out.joints[cells] = 0.0
    out.confidence[cells] = 0.0
    frames = tuple(int(t) for t in np.flatnonzero(cells.any(axis=1)))
    return out, CorruptionRecord(spec.mode, cells, frames)


def add_joint_noise(
    seq: SkeletonSequence,
    spec: CorruptionSpec,
    tree: KinematicTree,
    rng: np.random.Generator | None = None,
) -> tuple[SkeletonSequence, CorruptionRecord]:
    """Perturb selected cells by per-coordinate uniform noise bounded by s*limb."""
    if not spec.is_noise:
        raise ConfigError(f"add_joint_noise called with mode {spec.mode!r}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.mode == NOISE_FRAMES:
        frames = select_frames_by_confidence(seq, spec.p)
        cells = _frame_cells(seq, frames)
    else:
        cells = _select_cells(seq, spec.p, spec.selection, rng)
        frames = [int(t) for t in np.flatnonzero(cells.any(axis=1))]
    limbs = limb_lengths(seq, tree)
    nonroot = np.arange(tree.n_joints) != tree.root
    bounds = limbs.copy()
    bounds[tree.root] = limbs[nonroot].mean()
    offsets = np.zeros_like(seq.joints)
    # One draw per coordinate of every selected cell, in fixed (t, j) order.
    unit = rng.uniform(-1.0, 1.0, size=(int(cells.sum()), 3))
    scale = spec.s * bounds[np.argwhere(cells)[:, 1]]
    offsets[cells] = unit * scale[:, None]
    out = seq.copy()
    out.joints = out.joints + offsets
    return out, CorruptionRecord(spec.mode, cells, tuple(frames), offsets)


def corrupt(
    seq: SkeletonSequence,
    spec: CorruptionSpec,
    tree: KinematicTree | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[SkeletonSequence, CorruptionRecord]:
    """Apply `spec` to `seq`; noise modes need the kinematic tree."""
    if spec.mode == MASK_FRAMES:
        return mask_frames(seq, spec)
    if spec.mode == MASK_JOINTS:
        return mask_joints(seq, spec)
    if tree is None:
        raise ConfigError(f"mode {spec.mode!r} needs a kinematic tree for limb lengths")
    return add_joint_noise(seq, spec, tree, rng)
