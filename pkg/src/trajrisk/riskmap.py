"""Location-risk heatmaps built from closest vehicle-VRU interactions.

For every (scene, frame) the single closest pair between a non-stationary
vehicle and a vulnerable road user increments the grid bin containing the
pair's midpoint.  Counts are rescaled to weights in [1, 10] which re-weight
the training loss and define the low/medium/high risk strata used by the
evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import AgentClass, MapSpec, SceneDataset
from .errors import DomainError

GRID_N_DEFAULT = 100
WEIGHT_MIN = 1.0
WEIGHT_MAX = 10.0
# Equal quarters of the [1, 10] weight range.
QUARTER_BOUNDS = (3.25, 5.5, 7.75)


class RiskStratum(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


def bin_index(
    position,
    extents: tuple[float, float, float, float],
    grid_n: int = GRID_N_DEFAULT,
) -> tuple[int, int]:
    """Grid bin of a point: floor(grid_n * (p - min) / (max - min)) per axis,
    clamped into [0, grid_n - 1] so lookups are total."""
    x_min, y_min, x_max, y_max = extents
    ix = int(np.floor(grid_n * (float(position[0]) - x_min) / (x_max - x_min)))
    iy = int(np.floor(grid_n * (float(position[1]) - y_min) / (y_max - y_min)))
    ix = min(max(ix, 0), grid_n - 1)
    iy = min(max(iy, 0), grid_n - 1)
    return ix, iy


@dataclass
class RiskHeatmap:
    """Per-map interaction counts and the derived [1, 10] weights.

    ``grid`` and ``weights`` are (grid_n, grid_n) arrays indexed [ix, iy].
    """

    map_id: str
    extents: tuple[float, float, float, float]
    grid: np.ndarray      # int64 counts
    weights: np.ndarray   # float64 in [1, 10]

    @property
    def grid_n(self) -> int:
        return self.grid.shape[0]

    def to_json(self) -> dict:
        x_min, y_min, x_max, y_max = self.extents
        return {
            "map_id": self.map_id,
            "extents": {"x_min": x_min, "y_min": y_min,
                        "x_max": x_max, "y_max": y_max},
            "grid_n": self.grid_n,
            # row-major over ix then iy
            "counts": self.grid.reshape(-1).tolist(),
            "weights": self.weights.reshape(-1).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RiskHeatmap":
        ext = obj["extents"]
        n = int(obj["grid_n"])
        return cls(
            map_id=str(obj["map_id"]),
            extents=(float(ext["x_min"]), float(ext["y_min"]),
                     float(ext["x_max"]), float(ext["y_max"])),
            grid=np.array(obj["counts"], dtype=np.int64).reshape(n, n),
            weights=np.array(obj["weights"], dtype=float).reshape(n, n),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RiskHeatmap":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def closest_pair_midpoint(vehicles, vrus):
    """Closest (vehicle, VRU) pair by Euclidean distance.

    ``vehicles`` and ``vrus`` are lists of (agent_id, (2,) position).
    Exact distance ties break on the lowest (vehicle_id, vru_id) pair.
    Returns the midpoint, or None when either side is empty.
    """
    if not vehicles or not vrus:
        return None
    vp = np.array([p for _, p in vehicles], dtype=float)
    up = np.array([p for _, p in vrus], dtype=float)
    d = np.linalg.norm(vp[:, None, :] - up[None, :, :], axis=2)
    dmin = d.min()
    ties = np.argwhere(d == dmin)
    if len(ties) > 1:
        keys = [(vehicles[i][0], vrus[j][0]) for i, j in ties]
        i, j = ties[min(range(len(keys)), key=keys.__getitem__)]
    else:
        i, j = ties[0]
    return (vp[i] + up[j]) / 2.0


def build_risk_histogram(
    train: SceneDataset,
    mapspec: MapSpec,
    grid_n: int = GRID_N_DEFAULT,
) -> np.ndarray:
    """Count, per grid bin, the frames whose riskiest interaction fell there.

    For each scene on this map and each frame, the closest pair between a
    non-stationary vehicle and a VRU (if any) increments the bin holding
    the pair's midpoint; frames without such a pair contribute nothing.
    """
    counts = np.zeros((grid_n, grid_n), dtype=np.int64)
    for scene in train.scenes:
        if scene.map_id != mapspec.map_id:
            continue
        veh_tracks = [t for t in scene.tracks
                      if t.agent_class is AgentClass.VEHICLE
                      and not t.is_stationary_track]
        vru_tracks = [t for t in scene.tracks if t.agent_class.is_vru]
        if not veh_tracks or not vru_tracks:
            continue
        lo = min(t.first_frame for t in scene.tracks)
        hi = max(t.last_frame for t in scene.tracks)
        for frame in range(lo, hi + 1):
            vehicles = [(t.agent_id, t.position_at(frame))
                        for t in veh_tracks if t.present_at(frame)]
            vrus = [(t.agent_id, t.position_at(frame))
                    for t in vru_tracks if t.present_at(frame)]
            mid = closest_pair_midpoint(vehicles, vrus)
            if mid is None:
                continue
            ix, iy = bin_index(mid, mapspec.extents, grid_n)
            counts[ix, iy] += 1
    return counts


def normalize_to_weights(counts: np.ndarray) -> np.ndarray:
    """Affine rescale of counts to [1, 10]; constant grids map to all ones."""
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise DomainError("counts must be non-negative")
    cmin = counts.min()
    cmax = counts.max()
    if cmax == cmin:
        return np.ones(counts.shape, dtype=float)
    return WEIGHT_MIN + (WEIGHT_MAX - WEIGHT_MIN) * (
        (counts - cmin) / float(cmax - cmin))


def build_heatmap(
    train: SceneDataset,
    mapspec: MapSpec,
    grid_n: int = GRID_N_DEFAULT,
) -> RiskHeatmap:
    counts = build_risk_histogram(train, mapspec, grid_n)
    return RiskHeatmap(map_id=mapspec.map_id, extents=mapspec.extents,
                       grid=counts, weights=normalize_to_weights(counts))


def lookup_weight(heatmap: RiskHeatmap, position) -> float:
    """Weight of the bin containing ``position`` (clamped binning)."""
    ix, iy = bin_index(position, heatmap.extents, heatmap.grid_n)
    return float(heatmap.weights[ix, iy])


def assign_risk_stratum(weight: float, agent_class: AgentClass) -> RiskStratum:
    """Quarter-split of [1, 10] with the class-specific merges.

    Vehicles: low [1, 3.25), medium [3.25, 5.5), high [5.5, 10] (third and
    fourth quarters merged).  Pedestrians and cyclists: low [1, 3.25),
    high [3.25, 10] (second through fourth quarters merged).
    """
    w = float(weight)
    if w < WEIGHT_MIN - 1e-12 or w > WEIGHT_MAX + 1e-12:
        raise DomainError(f"weight {w} outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")
    q1, q2, _ = QUARTER_BOUNDS
    if agent_class is AgentClass.VEHICLE:
        if w < q1:
            return RiskStratum.LOW
        if w < q2:
            return RiskStratum.MEDIUM
        return RiskStratum.HIGH
    return RiskStratum.LOW if w < q1 else RiskStratum.HIGH
