"""Synthetic articulated-motion corpus, the desk-scale training stand-in.

Each non-root joint's bone direction swings around its rest direction by two
angle channels (yaw, pitch), each a sum of sinusoids; positions follow by
forward kinematics down the tree, so bone lengths are exact at every frame.
Motion is bandlimited by construction and additionally validated against the
smoothness invariant: no joint may move more than half the shortest bone
between consecutive frames.

Confidences default to 1 (clean ground truth). A nonzero
``confidence_variation`` lowers them along smooth seeded waves, which the
corpus builder uses so that confidence-ranked corruption has something to
rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import substream
from .skeleton import KinematicTree, SkeletonSequence, default_tree
from .uplift import Sequence2D

# Rest-pose tables for the shipped 50-joint layout, indexed like the tree.
_FINGER_LENGTHS = {
    "thumb": (0.070, 0.060, 0.050, 0.040),
    "index": (0.085, 0.060, 0.050, 0.045),
    "middle": (0.090, 0.065, 0.050, 0.045),
    "ring": (0.085, 0.060, 0.050, 0.040),
    "pinky": (0.070, 0.050, 0.045, 0.040),
}
_FINGER_SPREAD = {"thumb": -0.8, "index": -0.15, "middle": 0.0, "ring": 0.15, "pinky": 0.30}


def _default_rest_pose(tree: KinematicTree) -> tuple[np.ndarray, np.ndarray]:
    """(bone_lengths, rest_directions) for the shipped upper-body layout."""
    if tree.names is None:
        raise ConfigError("default rest pose needs a named tree; supply bone_lengths and rest_directions")
    n = tree.n_joints
    lengths = np.zeros(n)
    dirs = np.zeros((n, 3))
    for j, name in enumerate(tree.names):
        if j == tree.root:
            continue
        side = -1.0 if name.startswith("right") else 1.0
        if name == "neck":
            lengths[j], dirs[j] = 0.22, (0.0, -1.0, 0.0)
        elif name.endswith("shoulder"):
            lengths[j], dirs[j] = 0.18, (side, -0.2, 0.0)
        elif name.endswith("elbow"):
            lengths[j], dirs[j] = 0.28, (0.25 * side, -1.0, 0.0)
        elif name.endswith("wrist"):
            lengths[j], dirs[j] = 0.25, (0.0, -1.0, 0.35)
        elif name.endswith("palm"):
            lengths[j], dirs[j] = 0.09, (0.0, -1.0, 0.30)
        else:
            _, finger, seg = name.split("_")
            lengths[j] = _FINGER_LENGTHS[finger][int(seg) - 1]
            dirs[j] = (side * _FINGER_SPREAD[finger], -1.0, 0.25)
    dirs[np.arange(n) != tree.root] /= np.linalg.norm(dirs[np.arange(n) != tree.root], axis=1, keepdims=True)
    return lengths, dirs


@dataclass
class MotionSpec:
    """Everything generate() needs; fully explicit, so generation is pure."""

    tree: KinematicTree
    bone_lengths: np.ndarray  # (N,)
    rest_directions: np.ndarray  # (N, 3) unit vectors, ignored at the root
    amplitudes: np.ndarray  # (N, 2, K) radians per angle channel and term
    frequencies: np.ndarray  # (N, 2, K) Hz
    phases: np.ndarray  # (N, 2, K)
    n_frames: int = 200
    frame_rate: float = 25.0
    seed: int = 0
    confidence_variation: float = 0.0
    planar: bool = False  # in-plane rotations only; every joint keeps z = 0
    sequence_id: str = ""

    def __post_init__(self):
        n = self.tree.n_joints
        self.bone_lengths = np.asarray(self.bone_lengths, dtype=np.float64)
        self.rest_directions = np.asarray(self.rest_directions, dtype=np.float64)
        for name, arr, shape in (
            ("bone_lengths", self.bone_lengths, (n,)),
            ("rest_directions", self.rest_directions, (n, 3)),
        ):
            if arr.shape != shape:
                raise ConfigError(f"{name} must have shape {shape}, got {arr.shape}")
        if self.amplitudes.shape != self.frequencies.shape or self.amplitudes.shape != self.phases.shape:
            raise ConfigError("amplitudes, frequencies and phases must share one (N, 2, K) shape")
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if not 0.0 <= self.confidence_variation <= 0.95:
            raise ConfigError("confidence_variation must lie in [0, 0.95]")

    @classmethod
    def sample(
        cls,
        seed: int,
        tree: KinematicTree | None = None,
        n_frames: int = 200,
        frame_rate: float = 25.0,
        base_amplitude: float = 0.55,
        base_frequency: float = 0.13,
        n_terms: int = 2,
        confidence_variation: float = 0.0,
        planar: bool = False,
        sequence_id: str = "",
    ) -> "MotionSpec":
        """Draw a random but smoothness-safe spec for one sequence."""
        tree = tree or default_tree()
        lengths, dirs = _default_rest_pose(tree)
        if planar:
            dirs[:, 2] = 0.0
            nonroot = np.arange(tree.n_joints) != tree.root
            dirs[nonroot] /= np.linalg.norm(dirs[nonroot], axis=1, keepdims=True)
        rng = substream(seed, "motion")
        n = tree.n_joints
        # Joints deep in the tree swing shorter chains, so they may move more.
        depth_scale = np.select([tree.depths() <= 2, tree.depths() <= 4], [0.4, 1.0], default=1.5)
        amplitudes = base_amplitude * depth_scale[:, None, None] * rng.uniform(0.3, 1.0, size=(n, 2, n_terms))
        frequencies = base_frequency * rng.uniform(0.3, 1.0, size=(n, 2, n_terms))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, 2, n_terms))
        return cls(
            tree=tree,
            bone_lengths=lengths,
            rest_directions=dirs,
            amplitudes=amplitudes,
            frequencies=frequencies,
            phases=phases,
            n_frames=n_frames,
            frame_rate=frame_rate,
            seed=seed,
            confidence_variation=confidence_variation,
            planar=planar,
            sequence_id=sequence_id,
        )


def _confidences(spec: MotionSpec) -> np.ndarray:
    t, n = spec.n_frames, spec.tree.n_joints
    if spec.confidence_variation == 0.0:
        return np.ones((t, n))
    rng = substream(spec.seed, "confidence")
    time = np.arange(t) / spec.frame_rate
    frame_wave = np.zeros(t)
    for _ in range(5):
        a, f, ph = rng.uniform(0.5, 1.0), rng.uniform(0.15, 0.55), rng.uniform(0.0, 2.0 * np.pi)
        frame_wave += a * np.sin(2.0 * np.pi * f * time + ph)
    lo, hi = frame_wave.min(), frame_wave.max()
    frame_wave = (frame_wave - lo) / (hi - lo) if hi > lo else np.zeros(t)
    # Per-frame jitter keeps dips short and scattered, like real detector output.
    frame_level = 0.75 * frame_wave + 0.25 * rng.uniform(size=t)
    g = rng.uniform(0.05, 0.40, size=n)
    rho = rng.uniform(0.0, 2.0 * np.pi, size=n)
    joint_wave = 0.5 + 0.5 * np.sin(2.0 * np.pi * g[None, :] * time[:, None] + rho[None, :])
    drop = spec.confidence_variation * (0.75 * frame_level[:, None] + 0.25 * joint_wave)
    return np.clip(1.0 - drop, 0.01, 1.0)


def generate(spec: MotionSpec) -> SkeletonSequence:
    """Forward-kinematics rollout of the spec; bone lengths exact per frame."""
    tree = spec.tree
    t_axis = (np.arange(spec.n_frames) / spec.frame_rate)[:, None, None, None]
    angles = (spec.amplitudes * np.sin(2.0 * np.pi * spec.frequencies * t_axis + spec.phases)).sum(axis=-1)
    d0 = spec.rest_directions
    if spec.planar:
        # Rotate about the view axis only, so z stays exactly 0.
        theta = angles[:, :, 0]
        ct, st = np.cos(theta), np.sin(theta)
        dirs = np.stack(
            [d0[None, :, 0] * ct - d0[None, :, 1] * st, d0[None, :, 0] * st + d0[None, :, 1] * ct, np.zeros_like(ct)],
            axis=-1,
        )
    else:
        yaw, pitch = angles[:, :, 0], angles[:, :, 1]
        cp, sp = np.cos(pitch), np.sin(pitch)
        x1 = np.broadcast_to(d0[None, :, 0], cp.shape)
        y1 = d0[None, :, 1] * cp - d0[None, :, 2] * sp
        z1 = d0[None, :, 1] * sp + d0[None, :, 2] * cp
        cy, sy = np.cos(yaw), np.sin(yaw)
        dirs = np.stack([x1 * cy + z1 * sy, y1, -x1 * sy + z1 * cy], axis=-1)

    joints = np.zeros((spec.n_frames, tree.n_joints, 3))
    for j in tree.topological_order():
        if j == tree.root:
            continue
        joints[:, j] = joints[:, tree.parents[j]] + spec.bone_lengths[j] * dirs[:, j]

    seq = SkeletonSequence(joints, _confidences(spec), id=spec.sequence_id, frame_rate=spec.frame_rate)
    _check_smoothness(seq, spec)
    return seq


def _check_smoothness(seq: SkeletonSequence, spec: MotionSpec) -> None:
    if seq.n_frames < 2:
        return
    nonroot = np.arange(spec.tree.n_joints) != spec.tree.root
    limit = 0.5 * spec.bone_lengths[nonroot].min()
    step = np.linalg.norm(np.diff(seq.joints, axis=0), axis=2).max()
    if step >= limit:
        raise ConfigError(
            f"spec violates smoothness: max per-frame displacement {step:.4f} >= 0.5 * shortest bone {limit:.4f}"
        )


def project_orthographic(seq: SkeletonSequence) -> Sequence2D:
    """Drop z; confidences carry over unchanged."""
    return Sequence2D(seq.joints[:, :, :2].copy(), seq.confidence.copy(), id=seq.id, frame_rate=seq.frame_rate)


@dataclass
class Corpus:
    """Train/dev/test sequences over one tree, split disjointly by id."""

    tree: KinematicTree
    train: list[SkeletonSequence] = field(default_factory=list)
    dev: list[SkeletonSequence] = field(default_factory=list)
    test: list[SkeletonSequence] = field(default_factory=list)

    @property
    def splits(self) -> dict[str, str]:
        out = {}
        for name in ("train", "dev", "test"):
            for seq in getattr(self, name):
                out[seq.id] = name
        return out

    def split(self, name: str) -> list[SkeletonSequence]:
        if name not in ("train", "dev", "test"):
            raise ConfigError(f"unknown split {name!r}")
        return getattr(self, name)


def build_corpus(
    n_sequences: int = 200,
    n_frames: int = 200,
    seed: int = 0,
    tree: KinematicTree | None = None,
    confidence_variation: float = 0.4,
    split_fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
    base_amplitude: float = 0.55,
    base_frequency: float = 0.13,
) -> Corpus:
    """Deterministic synthetic corpus with disjoint id-based splits."""
    if n_sequences < 3:
        raise ConfigError("need at least 3 sequences to populate all splits")
    if abs(sum(split_fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {split_fractions}")
    tree = tree or default_tree()
    sequences = []
    for i in range(n_sequences):
        spec = MotionSpec.sample(
            seed=int(substream(seed, f"sequence-{i}").integers(0, 2**31 - 1)),
            tree=tree,
            n_frames=n_frames,
            confidence_variation=confidence_variation,
            base_amplitude=base_amplitude,
            base_frequency=base_frequency,
            sequence_id=f"seq-{i:04d}",
        )
        sequences.append(generate(spec))
    order = substream(seed, "split").permutation(n_sequences)
    n_train = round(split_fractions[0] * n_sequences)
    n_dev = max(1, round(split_fractions[1] * n_sequences))
    corpus = Corpus(tree=tree)
    for rank, idx in enumerate(order):
        if rank < n_train:
            corpus.train.append(sequences[idx])
        elif rank < n_train + n_dev:
            corpus.dev.append(sequences[idx])
        else:
            corpus.test.append(sequences[idx])
    if not (corpus.train and corpus.dev and corpus.test):
        raise ConfigError("split fractions left an empty split")
    return corpus
