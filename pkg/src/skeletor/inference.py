"""Sliding-window refinement with prediction averaging.

The sequence is padded on both ends by repeating the boundary frames, then
every stride-1 window is pushed through the model; each output frame is the
mean of the predictions at its position in the 2r+1 windows whose centers
are nearest to it (a window's center is start + floor(n1/2)). The padding
amount ceil(r + n1/2) guarantees every needed window exists, including at
the boundaries. Accumulation runs in fixed index order, so the result does
not depend on how the window evaluations are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError
from .skeleton import KinematicTree, SkeletonSequence, denormalize, normalize

_CHUNK = 64  # windows per model call; no effect on results


class WindowPredictor(Protocol):
    def predict(self, coords: np.ndarray, confidence: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class InferenceConfig:
    window_size: int = 32
    radius: int = 2

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.radius < 0:
            raise ConfigError("radius must be >= 0")
        if self.radius > (self.window_size - 1) // 2:
            raise ConfigError(
                f"radius {self.radius} too large: only windows containing a frame may be averaged, "
                f"so radius must be <= {(self.window_size - 1) // 2} for window_size {self.window_size}"
            )


def pad_amount(window_size: int, radius: int) -> int:
    # ceil(r + n1/2) for integer r.
    return radius + (window_size + 1) // 2


def pad_sequence(seq: SkeletonSequence, window_size: int, radius: int = 0) -> SkeletonSequence:
    """Repeat the first frame forwards and the last frame backwards."""
    p = pad_amount(window_size, radius)
    joints = np.concatenate([np.repeat(seq.joints[:1], p, axis=0), seq.joints, np.repeat(seq.joints[-1:], p, axis=0)])
    conf = np.concatenate(
        [np.repeat(seq.confidence[:1], p, axis=0), seq.confidence, np.repeat(seq.confidence[-1:], p, axis=0)]
    )
    return SkeletonSequence(joints, conf, seq.id, seq.frame_rate)


def refine_windows(
    joints: np.ndarray,
    confidence: np.ndarray,
    predict: Callable[[np.ndarray, np.ndarray], np.ndarray],
    config: InferenceConfig,
) -> np.ndarray:
    """Window-averaged prediction in normalized space.

    `joints` is (T, N, 3), `confidence` (T, N); `predict` maps batched
    flattened windows (B, n1, 3N) plus confidences (B, n1, N) to (B, n1, 3N).
    Returns refined (T, N, 3).
    """
    t, n = joints.shape[0], joints.shape[1]
    n1, r = config.window_size, config.radius
    p = pad_amount(n1, r)

    # Zero-confidence cells carry the masked-input sentinel: coordinates 0.
    work = joints.copy()
    work[confidence == 0.0] = 0.0
    padded = SkeletonSequence(
        np.concatenate([np.repeat(work[:1], p, axis=0), work, np.repeat(work[-1:], p, axis=0)]),
        np.concatenate([np.repeat(confidence[:1], p, axis=0), confidence, np.repeat(confidence[-1:], p, axis=0)]),
    )

    # Window with start s has center s + n1//2. Frame i sits at padded index
    # i + p; the 2r+1 nearest centers are i + p - r .. i + p + r, so the
    # needed starts are i + d - (n1//2 - p + r) for d in [0, 2r], i.e. the
    # consecutive run below.
    first_start = p - r - n1 // 2
    n_windows = t + 2 * r
    coords = np.stack([padded.joints[s : s + n1].reshape(n1, 3 * n) for s in range(first_start, first_start + n_windows)])
    confs = np.stack([padded.confidence[s : s + n1] for s in range(first_start, first_start + n_windows)])
    preds = np.concatenate(
        [predict(coords[i : i + _CHUNK], confs[i : i + _CHUNK]) for i in range(0, n_windows, _CHUNK)]
    )

    out = np.zeros((t, 3 * n))
    for d in range(2 * r + 1):
        out += preds[d : d + t, r - d + n1 // 2]
    return (out / (2 * r + 1)).reshape(t, n, 3)


def refine(
    seq: SkeletonSequence,
    model: WindowPredictor,
    tree: KinematicTree,
    config: InferenceConfig | None = None,
) -> SkeletonSequence:
    """Refine a raw-coordinate sequence; normalization is handled internally.

    Output confidences are carried over from the input.
    """
    config = config or InferenceConfig()
    normed, state = normalize(seq, tree)
    refined = refine_windows(normed.joints, normed.confidence, model.predict, config)
    out = denormalize(SkeletonSequence(refined, seq.confidence.copy(), seq.id, seq.frame_rate), state)
    return out
