"""Skeleton sequences, the kinematic tree, and coordinate normalization.

A skeleton is one frame of N joints; a sequence stores all frames as dense
arrays: ``joints`` with shape (T, N, 3) and per-joint ``confidence`` with
shape (T, N). A confidence of 0 marks a missing/masked joint; by convention
such joints sit at the origin once the sequence is normalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    DegenerateGeometryError,
    FormatError,
    InvalidStateError,
    StructuralError,
)

ROOT_PARENT = -1


@dataclass(frozen=True)
class KinematicTree:
    """Parent links over the joint set; limb i is the bone ending at joint i.

    ``parents[i]`` is the parent joint index, with ``-1`` at the single root.
    The links must form one connected acyclic tree.
    """

    parents: tuple[int, ...]
    root: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.parents)
        if n == 0:
            raise StructuralError("tree has no joints")
        roots = [i for i, p in enumerate(self.parents) if p == ROOT_PARENT]
        if roots != [self.root]:
            raise StructuralError(f"expected exactly one root at index {self.root}, found roots {roots}")
        if self.names is not None and len(self.names) != n:
            raise StructuralError("names length does not match parents length")
        for i, p in enumerate(self.parents):
            if i == self.root:
                continue
            if not (0 <= p < n):
                raise StructuralError(f"joint {i} has out-of-range parent {p}")
        # Walk each joint to the root; a walk longer than n joints means a cycle.
        for i in range(n):
            j, steps = i, 0
            while j != self.root:
                j = self.parents[j]
                steps += 1
                if steps > n:
                    raise StructuralError(f"parent links contain a cycle reachable from joint {i}")

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    def topological_order(self) -> list[int]:
        """Joint indices ordered parent-before-child, root first."""
        children: list[list[int]] = [[] for _ in self.parents]
        for i, p in enumerate(self.parents):
            if i != self.root:
                children[p].append(i)
        order, stack = [], [self.root]
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(reversed(children[j]))
        return order

    def depths(self) -> np.ndarray:
        """Hop count from the root, per joint."""
        d = np.zeros(self.n_joints, dtype=int)
        for j in self.topological_order():
            if j != self.root:
                d[j] = d[self.parents[j]] + 1
        return d

    def to_json(self) -> dict:
        doc = {"parents": list(self.parents), "root": self.root}
        if self.names is not None:
            doc["names"] = list(self.names)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "KinematicTree":
        try:
            parents = tuple(int(p) for p in doc["parents"])
            root = int(doc["root"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad tree document: {exc}") from exc
        names = tuple(doc["names"]) if "names" in doc else None
        return cls(parents=parents, root=root, names=names)


def default_tree() -> KinematicTree:
    """The shipped 50-joint upper-body layout (trunk + arms + two hands)."""
    text = resources.files("skeletor.data").joinpath("upper_body_50.json").read_text()
    return KinematicTree.from_json(json.loads(text))


@dataclass
class SkeletonSequence:
    """T frames of N joints: positions (T, N, 3) and confidences (T, N)."""

    joints: np.ndarray
    confidence: np.ndarray
    id: str = ""
    frame_rate: float | None = None

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.joints.ndim != 3 or self.joints.shape[2] != 3:
            raise StructuralError(f"joints must have shape (T, N, 3), got {self.joints.shape}")
        if self.confidence.shape != self.joints.shape[:2]:
            raise StructuralError(
                f"confidence shape {self.confidence.shape} does not match frames {self.joints.shape[:2]}"
            )
        if self.joints.shape[0] < 1:
            raise StructuralError("sequence must have at least one frame")
        if not np.isfinite(self.joints).all():
            raise StructuralError("joint coordinates must be finite")
        if self.confidence.min() < 0.0 or self.confidence.max() > 1.0:
            raise StructuralError("confidences must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.joints.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joints.shape[1]

    def copy(self) -> "SkeletonSequence":
        return SkeletonSequence(self.joints.copy(), self.confidence.copy(), self.id, self.frame_rate)


@dataclass(frozen=True)
class NormalizationState:
    """Affine frame fixed by normalize(); suffices to invert it exactly."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        if not (self.scale > 0.0 and np.isfinite(self.scale)):
            raise InvalidStateError(f"scale must be positive and finite, got {self.scale}")


def _check_tree(seq: SkeletonSequence, tree: KinematicTree) -> None:
    if seq.n_joints != tree.n_joints:
        raise StructuralError(f"sequence has {seq.n_joints} joints but tree defines {tree.n_joints}")


def limb_lengths(seq: SkeletonSequence, tree: KinematicTree) -> np.ndarray:
    """Per-joint limb length: |joint - parent| averaged over frames; 0 at the root."""
    _check_tree(seq, tree)
    parents = np.asarray(tree.parents)
    lengths = np.zeros(tree.n_joints)
    nonroot = np.arange(tree.n_joints) != tree.root
    diffs = seq.joints[:, nonroot] - seq.joints[:, parents[nonroot]]
    lengths[nonroot] = np.linalg.norm(diffs, axis=2).mean(axis=0)
    return lengths


def _confident_mean_limb(seq: SkeletonSequence, tree: KinematicTree) -> float:
    """Mean limb length, skipping limbs with a zero-confidence endpoint.

    Falls back to the unfiltered mean when nothing is observed, so corrupted
    inputs still normalize and clean inputs match limb_lengths() exactly.
    """
    parents = np.asarray(tree.parents)
    nonroot = np.arange(tree.n_joints) != tree.root
    norms = np.linalg.norm(seq.joints[:, nonroot] - seq.joints[:, parents[nonroot]], axis=2)
    seen = (seq.confidence[:, nonroot] > 0.0) & (seq.confidence[:, parents[nonroot]] > 0.0)
    if seen.any():
        return float(norms[seen].mean())
    return float(norms.mean())


def normalize(seq: SkeletonSequence, tree: KinematicTree) -> tuple[SkeletonSequence, NormalizationState]:
    """Root-center on the first confident frame and scale mean limb length to 1.

    The returned state inverts the map exactly (up to float rounding).
    """
    _check_tree(seq, tree)
    root_seen = np.flatnonzero(seq.confidence[:, tree.root] > 0.0)
    t0 = int(root_seen[0]) if root_seen.size else 0
    center = seq.joints[t0, tree.root].copy()
    scale = _confident_mean_limb(seq, tree)
    if not (scale > 1e-12):
        raise DegenerateGeometryError("all limbs have (near-)zero length; cannot fix a scale")
    state = NormalizationState(center=center, scale=scale)
    out = SkeletonSequence(
        (seq.joints - center) / scale, seq.confidence.copy(), seq.id, seq.frame_rate
    )
    return out, state


def denormalize(seq: SkeletonSequence, state: NormalizationState) -> SkeletonSequence:
    """Exact inverse of normalize() under the same state."""
    if not (state.scale > 0.0):
        raise InvalidStateError(f"scale must be positive, got {state.scale}")
    return SkeletonSequence(
        seq.joints * state.scale + state.center, seq.confidence.copy(), seq.id, seq.frame_rate
    )
