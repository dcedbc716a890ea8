"""Shared builders for the test suite.

Most tests want a tiny hand-built dataset rather than a simulated one, so
the helpers here construct minimal scenes with known geometry.
"""

import numpy as np
import pytest

from trajrisk.dataset import (
    AgentClass,
    MapSpec,
    Rect,
    Scene,
    SceneDataset,
    Track,
)


def straight_track(agent_id, agent_class, start, step, n_frames,
                   first_frame=0):
    """Constant-velocity track: start + k * step, k = 0..n_frames-1."""
    start = np.asarray(start, dtype=float)
    step = np.asarray(step, dtype=float)
    pos = start[None, :] + np.arange(n_frames)[:, None] * step[None, :]
    return Track(agent_id=agent_id, agent_class=agent_class,
                 first_frame=first_frame, positions=pos)


def tiny_map(map_id="m0", size=100.0):
    return MapSpec(
        map_id=map_id, x_min=0.0, y_min=0.0, x_max=size, y_max=size,
        drivable=[Rect(0.0, 40.0, size, 60.0)],
        crosswalks=[Rect(45.0, 40.0, 55.0, 60.0)],
    )


@pytest.fixture
def mapspec():
    return tiny_map()


@pytest.fixture
def small_dataset(mapspec):
    """Two scenes, 13+ frames each: enough for exactly windowed examples.

    Scene s0: one moving vehicle, one stationary vehicle, one pedestrian.
    Scene s1: one vehicle only (no VRU pair -> contributes no histogram mass).
    """
    s0 = Scene(scene_id="s0", map_id="m0", tracks=[
        straight_track("v0", AgentClass.VEHICLE, (5.0, 50.0), (2.0, 0.0), 15),
        straight_track("v1", AgentClass.VEHICLE, (80.0, 42.0), (0.0, 0.0), 15),
        straight_track("p0", AgentClass.PEDESTRIAN, (50.0, 41.0), (0.0, 0.7), 15),
    ])
    s1 = Scene(scene_id="s1", map_id="m0", tracks=[
        straight_track("v0", AgentClass.VEHICLE, (10.0, 44.0), (3.0, 0.0), 14),
    ])
    return SceneDataset(scenes=[s0, s1], maps=[mapspec], frame_rate_hz=2.0)
