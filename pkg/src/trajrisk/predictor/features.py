"""Feature extraction for the trajectory predictor.

Each example is summarised by its four history displacements rotated
into a heading-aligned frame, plus the current speed.  The heading
frame is set by the most recent nonzero history displacement; a fully
stationary history falls back to the identity rotation.
"""

from __future__ import annotations

import numpy as np

FEATURE_DIM = 9


def heading_rotation(history: np.ndarray) -> np.ndarray:
    """2x2 rotation taking heading-frame vectors to world frame."""
    diffs = np.diff(np.asarray(history, dtype=float), axis=0)
    for d in diffs[::-1]:
        n = float(np.hypot(d[0], d[1]))
        if n > 0.0:
            c, s = d[0] / n, d[1] / n
            return np.array([[c, -s], [s, c]])
    return np.eye(2)


def build_features(history: np.ndarray, dt: float = 0.5):
    """Return (features, rotation) for one example's history window.

    features[:8] are the history displacements expressed in the heading
    frame (most recent motion points along +x), features[8] is the
    current speed in m/s.
    """
    history = np.asarray(history, dtype=float)
    diffs = np.diff(history, axis=0)
    R = heading_rotation(history)
    local = diffs @ R  # row-vector form of R^T @ d
    speed = float(np.hypot(diffs[-1, 0], diffs[-1, 1])) / dt
    feats = np.empty(FEATURE_DIM)
    feats[:8] = local.reshape(-1)
    feats[8] = speed
    return feats, R
