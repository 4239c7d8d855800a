"""Joint-angle geometry and biomechanical handshape metrics.

Each interior joint's angle is the angle at the joint between the bone to
its chain parent and the bone to its chain child (arccos of the normalized
dot product), which is invariant under rigid motions of the frame by
construction. There are 15 interior joints: three per finger.

Metrics: finger independence (pairwise angle spread within the MCP, PIP and
DIP groups), thumb effort (mean deviation of thumb angles from the closest
resting reference), and handshape distance (mean absolute angle difference
between two frames).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .graphs import MEDIAPIPE, HandTopology

# interior joint -> (chain parent, chain child), MediaPipe indexing
JOINT_CHAIN: dict[int, tuple[int, int]] = {}
for _chain in MEDIAPIPE.fingers:
    _path = (MEDIAPIPE.wrist,) + _chain
    for _i in range(1, len(_path) - 1):
        JOINT_CHAIN[_path[_i]] = (_path[_i - 1], _path[_i + 1])

MCP_JOINTS = (5, 9, 13, 17)
PIP_JOINTS = (6, 10, 14, 18)
DIP_JOINTS = (7, 11, 15, 19)
THUMB_JOINTS = (1, 2, 3)
FINGER_GROUPS = (MCP_JOINTS, PIP_JOINTS, DIP_JOINTS)
ALL_JOINTS = tuple(sorted(JOINT_CHAIN))


class DegenerateGeometryError(ValueError):
    """Adjacent keypoints coincide, so a joint angle is undefined."""


@dataclass(frozen=True)
class RestingReference:
    """A named reference configuration of thumb joint angles, in radians."""

    name: str
    angles: dict[int, float]


def joint_angles(frame: np.ndarray, topology: HandTopology = MEDIAPIPE) -> dict[int, float]:
    """Angle in [0, pi] at every interior joint of the frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (21, 3):
        raise ValueError(f"expected a (21, 3) frame, got {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError("frame contains non-finite coordinates")
    angles = {}
    for joint, (parent, child) in JOINT_CHAIN.items():
        u = frame[parent] - frame[joint]
        v = frame[child] - frame[joint]
        nu = np.linalg.norm(u)
        nv = np.linalg.norm(v)
        if nu < 1e-12 or nv < 1e-12:
            raise DegenerateGeometryError(f"coincident keypoints at joint {joint}")
        cos = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
        angles[joint] = float(np.arccos(cos))
    return angles


def finger_independence(frame: np.ndarray) -> float:
    """Sum over the MCP/PIP/DIP groups of pairwise absolute angle differences.

    Zero exactly when every group holds its four fingers at equal angles;
    the thumb does not participate.
    """
    angles = joint_angles(frame)
    total = 0.0
    for group in FINGER_GROUPS:
        vals = [angles[j] for j in group]
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                total += abs(vals[i] - vals[j])
    return total


def thumb_effort(frame: np.ndarray, references: list[RestingReference]) -> float:
    """Minimum over references of the mean absolute thumb-angle deviation."""
    if not references:
        raise ValueError("thumb_effort requires at least one resting reference")
    angles = joint_angles(frame)
    best = math.inf
    for ref in references:
        missing = [j for j in THUMB_JOINTS if j not in ref.angles]
        if missing:
            raise ValueError(f"reference '{ref.name}' lacks thumb joints {missing}")
        dev = sum(abs(angles[j] - ref.angles[j]) for j in THUMB_JOINTS) / len(THUMB_JOINTS)
        best = min(best, dev)
    return best


def handshape_distance(a: np.ndarray, b: np.ndarray, include_thumb: bool = True) -> float:
    """Mean absolute joint-angle difference between two frames."""
    angles_a = joint_angles(a)
    angles_b = joint_angles(b)
    joints = ALL_JOINTS if include_thumb else tuple(j for j in ALL_JOINTS if j not in THUMB_JOINTS)
    return sum(abs(angles_a[j] - angles_b[j]) for j in joints) / len(joints)


def load_references(path: str | Path) -> list[RestingReference]:
    """Read references from JSON: {name: {joint index: angle radians}}."""
    doc = json.loads(Path(path).read_text())
    refs = [
        RestingReference(name=name, angles={int(k): float(v) for k, v in entries.items()})
        for name, entries in doc.items()
    ]
    if not refs:
        raise ValueError(f"no references found in {path}")
    return refs


def default_references() -> list[RestingReference]:
    """The bundled neutral open-hand reference."""
    with resources.files("handshape_gnn.assets").joinpath("resting_references.json").open() as fh:
        doc = json.load(fh)
    return [
        RestingReference(name=name, angles={int(k): float(v) for k, v in entries.items()})
        for name, entries in doc.items()
    ]


@dataclass
class Histogram:
    metric: str
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    median: float
    modes: list[float]

    def rows(self) -> list[tuple[float, float, int]]:
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]), int(self.counts[i]))
            for i in range(len(self.counts))
        ]


def _histogram(metric: str, values: np.ndarray, bins: int) -> Histogram:
    counts, edges = np.histogram(values, bins=bins)
    centers = (edges[:-1] + edges[1:]) / 2.0
    modes = []
    for i, c in enumerate(counts):
        left = counts[i - 1] if i > 0 else -1
        right = counts[i + 1] if i + 1 < len(counts) else -1
        if c > 0 and c > left and c > right:
            modes.append(float(centers[i]))
    return Histogram(
        metric=metric,
        bin_edges=edges,
        counts=counts,
        mean=float(values.mean()),
        median=float(np.median(values)),
        modes=modes,
    )


def metric_distributions(
    frames: list[np.ndarray],
    references: list[RestingReference] | None = None,
    bins: int = 50,
) -> dict[str, Histogram]:
    """Histograms of the three metrics over a set of selected frames.

    Handshape distance is computed over unordered frame pairs, thinned
    deterministically to at most 20,000 pairs to stay desk-scale.
    """
    if not frames:
        raise ValueError("metric_distributions requires a non-empty frame set")
    refs = references if references is not None else default_references()
    fi = np.array([finger_independence(f) for f in frames])
    te = np.array([thumb_effort(f, refs) for f in frames])
    pairs = [(i, j) for i in range(len(frames)) for j in range(i + 1, len(frames))]
    if len(pairs) > 20000:
        stride = len(pairs) // 20000 + 1
        pairs = pairs[::stride]
    if pairs:
        hd = np.array([handshape_distance(frames[i], frames[j]) for i, j in pairs])
    else:
        hd = np.zeros(1)
    return {
        "finger_independence": _histogram("finger_independence", fi, bins),
        "thumb_effort": _histogram("thumb_effort", te, bins),
        "handshape_distance": _histogram("handshape_distance", hd, bins),
    }


def write_histogram_csv(hist: Histogram, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in hist.rows():
            writer.writerow([repr(left), repr(right), count])
