"""File formats: sequence JSON (3D and 2D), tree JSON, detector keypoints, CSV.

A 3D sequence document is one JSON object:

    {"id": "...", "frame_rate": 25.0,
     "joints": [[[x, y, z] per joint] per frame],
     "confidence": [[c per joint] per frame]}

The 2D format mirrors it with 2-vectors under "joints". A tree file holds
{"parents": [...], "root": k} with an optional "names" list.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .skeleton import KinematicTree, SkeletonSequence
from .uplift import Sequence2D


def _load_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc


def _sequence_doc(doc: dict, path, width: int) -> tuple[np.ndarray, np.ndarray, str, float | None]:
    try:
        joints = np.asarray(doc["joints"], dtype=np.float64)
        confidence = np.asarray(doc["confidence"], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad sequence document: {exc}") from exc
    if joints.ndim != 3 or joints.shape[2] != width:
        raise FormatError(f"{path}: joints must be T x N x {width}, got shape {joints.shape}")
    rate = doc.get("frame_rate")
    return joints, confidence, str(doc.get("id", "")), None if rate is None else float(rate)


def read_sequence(path: str | Path) -> SkeletonSequence:
    joints, conf, seq_id, rate = _sequence_doc(_load_json(path), path, 3)
    return SkeletonSequence(joints, conf, id=seq_id, frame_rate=rate)


def write_sequence(path: str | Path, seq: SkeletonSequence) -> None:
    doc = {
        "id": seq.id,
        "frame_rate": seq.frame_rate,
        "joints": seq.joints.tolist(),
        "confidence": seq.confidence.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def read_sequence_2d(path: str | Path) -> Sequence2D:
    points, conf, seq_id, rate = _sequence_doc(_load_json(path), path, 2)
    return Sequence2D(points, conf, id=seq_id, frame_rate=rate)


def write_sequence_2d(path: str | Path, seq: Sequence2D) -> None:
    doc = {
        "id": seq.id,
        "frame_rate": seq.frame_rate,
        "joints": seq.points.tolist(),
        "confidence": seq.confidence.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def read_tree(path: str | Path) -> KinematicTree:
    return KinematicTree.from_json(_load_json(path))


def write_tree(path: str | Path, tree: KinematicTree) -> None:
    Path(path).write_text(json.dumps(tree.to_json()) + "\n")


def read_index_map(path: str | Path, n_joints: int) -> list[int]:
    """Detector-to-tree joint mapping: entry j is the detector keypoint index
    feeding tree joint j, or -1 for joints the detector does not provide."""
    doc = _load_json(path)
    mapping = doc.get("map") if isinstance(doc, dict) else doc
    if not isinstance(mapping, list) or len(mapping) != n_joints:
        raise FormatError(f"{path}: index map must list one detector index per tree joint ({n_joints})")
    return [int(i) for i in mapping]


def read_keypoint_frames(paths: list[str | Path], index_map: list[int], frame_rate: float | None = None) -> Sequence2D:
    """Ingest per-frame detector files of flat [x, y, confidence, ...] arrays.

    Each file holds one frame, either as a bare array or under a "keypoints"
    key. Unmapped joints (index -1) get confidence 0 at the origin.
    """
    if not paths:
        raise FormatError("no keypoint frame files given")
    n = len(index_map)
    points = np.zeros((len(paths), n, 2))
    confidence = np.zeros((len(paths), n))
    for t, path in enumerate(sorted(Path(p) for p in paths)):
        doc = _load_json(path)
        flat = doc.get("keypoints") if isinstance(doc, dict) else doc
        if not isinstance(flat, list) or len(flat) % 3 != 0:
            raise FormatError(f"{path}: expected a flat [x, y, confidence, ...] array")
        kp = np.asarray(flat, dtype=np.float64).reshape(-1, 3)
        for j, src in enumerate(index_map):
            if src < 0:
                continue
            if src >= kp.shape[0]:
                raise FormatError(f"{path}: index map wants keypoint {src} but file has {kp.shape[0]}")
            points[t, j] = kp[src, :2]
            confidence[t, j] = np.clip(kp[src, 2], 0.0, 1.0)
    return Sequence2D(points, confidence, frame_rate=frame_rate)


def dump_csv(path: str | Path, seq: SkeletonSequence) -> None:
    """Per-frame joint CSV for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "joint", "x", "y", "z", "confidence"])
        for t in range(seq.n_frames):
            for j in range(seq.n_joints):
                x, y, z = seq.joints[t, j]
                writer.writerow([t, j, repr(x), repr(y), repr(z), repr(float(seq.confidence[t, j]))])
