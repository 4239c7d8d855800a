"""Motion-based selection of the representative static frame of a sequence."""

from __future__ import annotations

import numpy as np


def motion_profile(frames: np.ndarray) -> np.ndarray:
    """Per-step displacement scores v_t for t = 0..T-2.

    v_t is the mean over the 21 keypoints of the Euclidean displacement
    between frame t and frame t+1, attached to the earlier frame of the
    pair. A single-frame sequence yields an empty profile.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[1:] != (21, 3):
        raise ValueError(f"expected frames of shape (T, 21, 3), got {frames.shape}")
    if frames.shape[0] < 2:
        return np.zeros(0)
    deltas = np.linalg.norm(frames[1:] - frames[:-1], axis=2)
    return deltas.mean(axis=1)


def select_frame(frames: np.ndarray) -> int:
    """Index of the lowest-motion frame; ties break toward the earliest frame.

    Single-frame sequences return 0. Candidates are frames 0..T-2 since each
    score is attached to the earlier frame of its pair.
    """
    profile = motion_profile(frames)
    if profile.size == 0:
        return 0
    return int(np.argmin(profile))
