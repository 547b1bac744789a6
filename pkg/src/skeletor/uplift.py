"""2D-to-3D lifting by per-joint optimization.

The head (tree root) is pinned at its observed image coordinates with depth
0. Bone lengths come from averaging observed 2D parent-child distances over
the whole sequence. Every other joint is then solved frame by frame in
parent-before-child order by gradient descent on

    w_projection * |projection(J) - observed_2d|^2
  + w_trajectory * |J - J_previous_frame|^2
  + w_bone       * (|J - parent| - bone_length)^2

with an orthographic projection (x, y, z) -> (x, y). The trajectory term is
absent on the first frame, the projection term wherever the joint was not
observed (confidence 0). Steps that would increase the loss are rejected and
halve the step size, so accepted loss values never increase.

Depth is inherently ambiguous here: negating every z leaves all three terms
unchanged, and with z initialized at 0 the solver settles near the zero-depth
solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StructuralError
from .skeleton import KinematicTree, SkeletonSequence

log = logging.getLogger(__name__)


@dataclass
class Sequence2D:
    """T frames of N image-plane joints: (T, N, 2) points plus confidences."""

    points: np.ndarray
    confidence: np.ndarray
    id: str = ""
    frame_rate: float | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[2] != 2:
            raise StructuralError(f"points must have shape (T, N, 2), got {self.points.shape}")
        if self.confidence.shape != self.points.shape[:2]:
            raise StructuralError(
                f"confidence shape {self.confidence.shape} does not match frames {self.points.shape[:2]}"
            )
        if self.points.shape[0] < 1:
            raise StructuralError("sequence must have at least one frame")
        if not np.isfinite(self.points).all():
            raise StructuralError("2D coordinates must be finite")
        if self.confidence.min() < 0.0 or self.confidence.max() > 1.0:
            raise StructuralError("confidences must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.points.shape[0]

    @property
    def n_joints(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class UpliftConfig:
    w_projection: float = 1.0
    w_trajectory: float = 0.1
    w_bone: float = 0.5
    iterations: int = 200
    step_size: float = 1e-2

    def __post_init__(self):
        if self.w_projection <= 0.0:
            raise ConfigError("w_projection must be > 0")
        if self.w_trajectory < 0.0 or self.w_bone < 0.0:
            raise ConfigError("term weights must be >= 0")
        if self.iterations < 1 or self.step_size <= 0.0:
            raise ConfigError("iterations must be >= 1 and step_size > 0")


def project_to_image(joints: np.ndarray) -> np.ndarray:
    """Orthographic camera: drop the depth coordinate."""
    return joints[..., :2]


def estimate_bone_lengths(seq2d: Sequence2D, tree: KinematicTree) -> np.ndarray:
    """Mean observed 2D parent-child distance per bone; 0 at the root.

    Frames where either endpoint has confidence 0 are excluded. A bone never
    observed falls back to the mean of the observed bones (logged), since the
    tree itself carries no lengths.
    """
    if seq2d.n_joints != tree.n_joints:
        raise StructuralError(f"sequence has {seq2d.n_joints} joints but tree defines {tree.n_joints}")
    lengths = np.zeros(tree.n_joints)
    unseen = []
    for j in range(tree.n_joints):
        if j == tree.root:
            continue
        p = tree.parents[j]
        seen = (seq2d.confidence[:, j] > 0.0) & (seq2d.confidence[:, p] > 0.0)
        if seen.any():
            lengths[j] = np.linalg.norm(seq2d.points[seen, j] - seq2d.points[seen, p], axis=1).mean()
        else:
            unseen.append(j)
    if unseen:
        observed = [j for j in range(tree.n_joints) if j != tree.root and j not in unseen]
        fallback = float(np.mean(lengths[observed])) if observed else 1.0
        log.warning("bones ending at joints %s never observed; using fallback length %.4f", unseen, fallback)
        for j in unseen:
            lengths[j] = fallback
    return lengths


def total_loss(
    joints3d: np.ndarray,
    seq2d: Sequence2D,
    tree: KinematicTree,
    bone_lengths: np.ndarray,
    config: UpliftConfig,
) -> float:
    """The full objective summed over frames and non-root joints."""
    total = 0.0
    for t in range(seq2d.n_frames):
        for j in range(tree.n_joints):
            if j == tree.root:
                continue
            jx, jy, jz = joints3d[t, j]
            if seq2d.confidence[t, j] > 0.0:
                du, dv = jx - seq2d.points[t, j, 0], jy - seq2d.points[t, j, 1]
                total += config.w_projection * (du * du + dv * dv)
            if t > 0:
                dx, dy, dz = joints3d[t, j] - joints3d[t - 1, j]
                total += config.w_trajectory * (dx * dx + dy * dy + dz * dz)
            dx, dy, dz = joints3d[t, j] - joints3d[t, tree.parents[j]]
            err = math.sqrt(dx * dx + dy * dy + dz * dz) - bone_lengths[j]
            total += config.w_bone * err * err
    return total


def _solve_joint(
    x: float, y: float, z: float,
    u: float, v: float, observed: bool,
    qx: float, qy: float, qz: float, has_prev: bool,
    ax: float, ay: float, az: float, bone: float,
    wp: float, wt: float, wb: float,
    iterations: int, step: float,
) -> tuple[float, float, float]:
    """Gradient descent for one joint of one frame, in plain floats for speed."""

    def loss(jx, jy, jz):
        l = 0.0
        if observed:
            du, dv = jx - u, jy - v
            l += wp * (du * du + dv * dv)
        if has_prev:
            dx, dy, dz = jx - qx, jy - qy, jz - qz
            l += wt * (dx * dx + dy * dy + dz * dz)
        dx, dy, dz = jx - ax, jy - ay, jz - az
        err = math.sqrt(dx * dx + dy * dy + dz * dz) - bone
        return l + wb * err * err

    current = loss(x, y, z)
    for _ in range(iterations):
        gx = gy = gz = 0.0
        if observed:
            gx += 2.0 * wp * (x - u)
            gy += 2.0 * wp * (y - v)
        if has_prev:
            gx += 2.0 * wt * (x - qx)
            gy += 2.0 * wt * (y - qy)
            gz += 2.0 * wt * (z - qz)
        dx, dy, dz = x - ax, y - ay, z - az
        norm = math.sqrt(dx * dx + dy * dy + dz * dz)
        if norm > 1e-12:
            c = 2.0 * wb * (norm - bone) / norm
            gx += c * dx
            gy += c * dy
            gz += c * dz
        while step >= 1e-14:
            tx, ty, tz = x - step * gx, y - step * gy, z - step * gz
            trial = loss(tx, ty, tz)
            if trial <= current:
                x, y, z, current = tx, ty, tz, trial
                break
            step *= 0.5
        else:
            break
    return x, y, z


def uplift(
    seq2d: Sequence2D,
    tree: KinematicTree,
    config: UpliftConfig | None = None,
    bone_lengths: np.ndarray | None = None,
) -> SkeletonSequence:
    """Lift an image-plane sequence to 3D; see the module docstring."""
    config = config or UpliftConfig()
    if seq2d.n_joints != tree.n_joints:
        raise StructuralError(f"sequence has {seq2d.n_joints} joints but tree defines {tree.n_joints}")
    if seq2d.confidence[0, tree.root] <= 0.0:
        raise ConfigError("the head joint must be observed in the first frame")
    if bone_lengths is None:
        bone_lengths = estimate_bone_lengths(seq2d, tree)
    order = [j for j in tree.topological_order() if j != tree.root]
    t_frames, root = seq2d.n_frames, tree.root
    out = np.zeros((t_frames, tree.n_joints, 3))
    for t in range(t_frames):
        if seq2d.confidence[t, root] > 0.0:
            out[t, root, 0], out[t, root, 1] = seq2d.points[t, root]
        else:
            out[t, root] = out[t - 1, root]
        for j in order:
            observed = bool(seq2d.confidence[t, j] > 0.0)
            u, v = seq2d.points[t, j]
            px, py, pz = out[t, tree.parents[j]]
            if t > 0:
                x0, y0, z0 = out[t - 1, j]
                qx, qy, qz = out[t - 1, j]
                has_prev = True
            else:
                x0, y0, z0 = (u, v, 0.0) if observed else (px, py - bone_lengths[j], pz)
                qx = qy = qz = 0.0
                has_prev = False
            x, y, z = _solve_joint(
                x0, y0, z0, float(u), float(v), observed,
                qx, qy, qz, has_prev,
                px, py, pz, float(bone_lengths[j]),
                config.w_projection, config.w_trajectory, config.w_bone,
                config.iterations, config.step_size,
            )
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
                # Diverged; fall back to carrying the previous-frame offset.
                log.warning("joint %d diverged at frame %d; using previous-frame offset", j, t)
                if t > 0:
                    off = out[t - 1, j] - out[t - 1, tree.parents[j]]
                else:
                    off = np.array([0.0, -bone_lengths[j], 0.0])
                x, y, z = out[t, tree.parents[j]] + off
            out[t, j] = (x, y, z)
    return SkeletonSequence(out, seq2d.confidence.copy(), id=seq2d.id, frame_rate=seq2d.frame_rate)
