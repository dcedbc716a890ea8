"""Trajectory data model: file ingestion, stationary smoothing, kinematics,
windowing into prediction examples, and deterministic scene-level splits.

Dataset files are UTF-8 CSV with header ``scene_id,agent_id,agent_class,
frame,x,y`` plus a companion JSON map file (single map object or a list of
maps).  With a multi-map file, each scene binds to a map via a
``"<map_id>/..."`` prefix on its scene_id; with a single map, every scene
binds to it.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DatasetParseError,
    FrameGapError,
    MapReferenceError,
    SplitError,
)

log = logging.getLogger(__name__)

FRAME_RATE_HZ_DEFAULT = 2.0
HISTORY_FRAMES = 5   # t_ref-4 .. t_ref (2 s of history plus the current frame)
FUTURE_FRAMES = 8    # t_ref+1 .. t_ref+8 (4 s)
WINDOW_FRAMES = HISTORY_FRAMES + FUTURE_FRAMES
STATIONARY_PATH_THRESHOLD_M = 1.0

CSV_HEADER = ["scene_id", "agent_id", "agent_class", "frame", "x", "y"]


class AgentClass(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"

    @property
    def is_vru(self) -> bool:
        """Pedestrians and cyclists count as vulnerable road users."""
        return self is not AgentClass.VEHICLE

    @property
    def model_class(self) -> "AgentClass":
        """Cyclists are predicted by the pedestrian-class model."""
        if self is AgentClass.CYCLIST:
            return AgentClass.PEDESTRIAN
        return self


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in meters, closed on all edges."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def to_json(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1}

    @classmethod
    def from_json(cls, obj: dict) -> "Rect":
        return cls(float(obj["x0"]), float(obj["y0"]),
                   float(obj["x1"]), float(obj["y1"]))


@dataclass
class MapSpec:
    """Named map with grid extents, drivable area and crosswalk rectangles."""

    map_id: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    drivable: list[Rect] = field(default_factory=list)
    crosswalks: list[Rect] = field(default_factory=list)

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"map {self.map_id!r}: empty extents")
        bounds = Rect(self.x_min, self.y_min, self.x_max, self.y_max)
        for kind, rects in (("drivable", self.drivable),
                            ("crosswalk", self.crosswalks)):
            for r in rects:
                if not (bounds.contains((r.x0, r.y0))
                        and bounds.contains((r.x1, r.y1))):
                    raise ValueError(
                        f"map {self.map_id!r}: {kind} rectangle {r} exceeds extents")

    @property
    def extents(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def clamp(self, xy: np.ndarray) -> np.ndarray:
        """Clamp an (N, 2) position array into the extents."""
        out = np.array(xy, dtype=float, copy=True)
        out[:, 0] = np.clip(out[:, 0], self.x_min, self.x_max)
        out[:, 1] = np.clip(out[:, 1], self.y_min, self.y_max)
        return out

    def to_json(self) -> dict:
        return {
            "map_id": self.map_id,
            "extents": {"x_min": self.x_min, "y_min": self.y_min,
                        "x_max": self.x_max, "y_max": self.y_max},
            "drivable": [r.to_json() for r in self.drivable],
            "crosswalks": [r.to_json() for r in self.crosswalks],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MapSpec":
        ext = obj["extents"]
        return cls(
            map_id=str(obj["map_id"]),
            x_min=float(ext["x_min"]), y_min=float(ext["y_min"]),
            x_max=float(ext["x_max"]), y_max=float(ext["y_max"]),
            drivable=[Rect.from_json(r) for r in obj.get("drivable", [])],
            crosswalks=[Rect.from_json(r) for r in obj.get("crosswalks", [])],
        )


@dataclass
class Track:
    """One agent's gap-free positions within a scene, one row per frame."""

    agent_id: str
    agent_class: AgentClass
    first_frame: int
    positions: np.ndarray  # (L, 2) float64, L >= 1
    is_stationary_track: bool = False

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2 \
                or len(self.positions) < 1:
            raise ValueError(f"track {self.agent_id!r}: bad positions shape "
                             f"{self.positions.shape}")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self.positions) - 1

    def present_at(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def position_at(self, frame: int) -> np.ndarray:
        return self.positions[frame - self.first_frame]

    def path_length(self) -> float:
        """Sum of consecutive-frame displacements over the whole track."""
        if len(self.positions) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.positions, axis=0),
                                           axis=1)))


@dataclass
class Scene:
    scene_id: str
    map_id: str
    tracks: list[Track] = field(default_factory=list)


@dataclass
class SceneDataset:
    """Scenes bound to named maps; the unit the pipeline passes around."""

    scenes: list[Scene] = field(default_factory=list)
    maps: list[MapSpec] = field(default_factory=list)
    frame_rate_hz: float = FRAME_RATE_HZ_DEFAULT

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate_hz

    def map_by_id(self, map_id: str) -> MapSpec:
        for m in self.maps:
            if m.map_id == map_id:
                return m
        raise MapReferenceError(f"unknown map_id {map_id!r}")

    def validate(self) -> None:
        seen = set()
        for m in self.maps:
            if m.map_id in seen:
                raise MapReferenceError(f"duplicate map_id {m.map_id!r}")
            seen.add(m.map_id)
        for scene in self.scenes:
            self.map_by_id(scene.map_id)

    def n_tracks(self) -> int:
        return sum(len(s.tracks) for s in self.scenes)


@dataclass
class PredictionExample:
    """One (agent, reference-time) window: 5 history + 8 future frames."""

    scene_id: str
    agent_id: str
    agent_class: AgentClass
    t_ref: int
    history: np.ndarray          # (5, 2), frames t_ref-4 .. t_ref
    future: np.ndarray           # (8, 2), frames t_ref+1 .. t_ref+8
    current_position: np.ndarray  # (2,) == history[-1]
    max_history_speed: float     # m/s over the 4 history displacements
    window_path_length: float    # meters over the 13 window frames
    whole_track_stationary: bool


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

def load_maps(maps_path) -> tuple[list[MapSpec], float]:
    """Read the companion map JSON (single object or list of objects).

    Returns the maps plus the frame rate (``frame_rate_hz`` field,
    default 2 Hz; multi-map files must agree on it).
    """
    maps_path = Path(maps_path)
    try:
        raw = json.loads(maps_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{maps_path}: invalid JSON: {exc}") from exc
    objs = raw if isinstance(raw, list) else [raw]
    if not objs:
        raise DatasetParseError(f"{maps_path}: no maps defined")
    rates = set()
    maps = []
    for obj in objs:
        try:
            maps.append(MapSpec.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetParseError(f"{maps_path}: bad map entry: {exc}") from exc
        rates.add(float(obj.get("frame_rate_hz", FRAME_RATE_HZ_DEFAULT)))
    if len(rates) > 1:
        raise DatasetParseError(f"{maps_path}: maps disagree on frame_rate_hz")
    return maps, rates.pop()


def default_maps_path(dataset_path) -> Path:
    """Convention: dataset.csv pairs with dataset.map.json."""
    p = Path(dataset_path)
    return p.with_suffix(".map.json")


def _scene_map_id(scene_id: str, maps: list[MapSpec]) -> str:
    if len(maps) == 1:
        return maps[0].map_id
    prefix = scene_id.split("/", 1)[0]
    for m in maps:
        if m.map_id == prefix:
            return prefix
    raise MapReferenceError(
        f"scene {scene_id!r}: unknown map_id prefix {prefix!r} "
        f"(known: {sorted(m.map_id for m in maps)})")


def load_dataset(path, maps_path=None) -> SceneDataset:
    """Load a dataset CSV plus its companion map file.

    Rows are sorted by (scene, agent, frame); each track must be gap-free;
    positions outside the map extents are clamped (a warning reports the
    clamp count).
    """
    path = Path(path)
    maps_path = Path(maps_path) if maps_path is not None else default_maps_path(path)
    maps, frame_rate = load_maps(maps_path)

    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(f"{path}:1: empty file, expected header "
                                    f"{','.join(CSV_HEADER)}") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DatasetParseError(
                f"{path}:1: bad header {header!r}, expected {CSV_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DatasetParseError(
                    f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, "
                    f"got {len(row)}")
            scene_id, agent_id, cls_raw, frame_raw, x_raw, y_raw = row
            try:
                cls = AgentClass(cls_raw.strip())
            except ValueError:
                raise DatasetParseError(
                    f"{path}:{lineno}: unknown agent_class {cls_raw!r}") from None
            try:
                frame = int(frame_raw)
                x, y = float(x_raw), float(y_raw)
            except ValueError as exc:
                raise DatasetParseError(f"{path}:{lineno}: {exc}") from exc
            if not (np.isfinite(x) and np.isfinite(y)):
                raise DatasetParseError(
                    f"{path}:{lineno}: non-finite position ({x_raw}, {y_raw})")
            rows.append((scene_id, agent_id, cls, frame, x, y, lineno))

    rows.sort(key=lambda r: (r[0], r[1], r[3]))

    scenes: list[Scene] = []
    clamped = 0
    i = 0
    while i < len(rows):
        scene_id = rows[i][0]
        map_id = _scene_map_id(scene_id, maps)
        mapspec = next(m for m in maps if m.map_id == map_id)
        scene = Scene(scene_id=scene_id, map_id=map_id)
        while i < len(rows) and rows[i][0] == scene_id:
            agent_id = rows[i][1]
            cls = rows[i][2]
            frames, pts = [], []
            while i < len(rows) and rows[i][0] == scene_id and rows[i][1] == agent_id:
                _, _, row_cls, frame, x, y, lineno = rows[i]
                if row_cls is not cls:
                    raise DatasetParseError(
                        f"{path}:{lineno}: agent {agent_id!r} changes class "
                        f"{cls.value!r} -> {row_cls.value!r}")
                if frames and frame == frames[-1]:
                    raise DatasetParseError(
                        f"{path}:{lineno}: duplicate frame {frame} for agent "
                        f"{agent_id!r} in scene {scene_id!r}")
                frames.append(frame)
                pts.append((x, y))
                i += 1
            for prev, cur in zip(frames, frames[1:]):
                if cur != prev + 1:
                    raise FrameGapError(
                        f"scene {scene_id!r} agent {agent_id!r}: "
                        f"gap at frame {prev + 1}")
            positions = np.array(pts, dtype=float)
            clamped_pos = mapspec.clamp(positions)
            clamped += int(np.sum(np.any(clamped_pos != positions, axis=1)))
            scene.tracks.append(Track(
                agent_id=agent_id, agent_class=cls,
                first_frame=frames[0], positions=clamped_pos))
        scenes.append(scene)

    if clamped:
        log.warning("%s: clamped %d positions to map extents", path, clamped)

    ds = SceneDataset(scenes=scenes, maps=maps, frame_rate_hz=frame_rate)
    ds.validate()
    return ds


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly and is deterministic
    return repr(float(v))


def save_dataset(ds: SceneDataset, path, maps_path=None) -> None:
    """Write the dataset CSV and its companion map JSON."""
    path = Path(path)
    maps_path = Path(maps_path) if maps_path is not None else default_maps_path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for scene in ds.scenes:
            for track in scene.tracks:
                for k, (x, y) in enumerate(track.positions):
                    writer.writerow([scene.scene_id, track.agent_id,
                                     track.agent_class.value,
                                     track.first_frame + k, _fmt(x), _fmt(y)])
    payload = [dict(m.to_json(), frame_rate_hz=ds.frame_rate_hz) for m in ds.maps]
    if len(payload) == 1:
        payload = payload[0]
    maps_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def apply_stationary_smoothing(
    ds: SceneDataset,
    threshold: float = STATIONARY_PATH_THRESHOLD_M,
) -> SceneDataset:
    """Replace near-stationary vehicle tracks by their mean position.

    A vehicle track whose whole-track path length is below ``threshold``
    has every position set to the track mean (per-frame velocity becomes
    exactly 0) and is flagged ``is_stationary_track``.  Pedestrian and
    cyclist tracks are never smoothed.  Tracks already flagged are left
    untouched, which makes the transform idempotent bit for bit.
    """
    out_scenes = []
    for scene in ds.scenes:
        tracks = []
        for track in scene.tracks:
            if (track.agent_class is AgentClass.VEHICLE
                    and not track.is_stationary_track
                    and track.path_length() < threshold):
                mean = track.positions.mean(axis=0)
                positions = np.tile(mean, (len(track.positions), 1))
                tracks.append(Track(
                    agent_id=track.agent_id, agent_class=track.agent_class,
                    first_frame=track.first_frame, positions=positions,
                    is_stationary_track=True))
            else:
                tracks.append(Track(
                    agent_id=track.agent_id, agent_class=track.agent_class,
                    first_frame=track.first_frame,
                    positions=track.positions.copy(),
                    is_stationary_track=track.is_stationary_track))
        out_scenes.append(Scene(scene_id=scene.scene_id, map_id=scene.map_id,
                                tracks=tracks))
    return SceneDataset(scenes=out_scenes, maps=copy.deepcopy(ds.maps),
                        frame_rate_hz=ds.frame_rate_hz)


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------

def extract_examples(ds: SceneDataset) -> list[PredictionExample]:
    """Slide the 13-frame window over every track.

    One example per (track, t_ref) with 4 history frames before and 8
    future frames after t_ref; tracks shorter than 13 frames yield none.
    Output order is (scene_id, agent_id, t_ref).
    """
    dt = ds.dt
    examples = []
    for scene in sorted(ds.scenes, key=lambda s: s.scene_id):
        for track in sorted(scene.tracks, key=lambda t: t.agent_id):
            n = len(track.positions)
            if n < WINDOW_FRAMES:
                continue
            steps = np.linalg.norm(np.diff(track.positions, axis=0), axis=1)
            for start in range(0, n - WINDOW_FRAMES + 1):
                t_ref = track.first_frame + start + HISTORY_FRAMES - 1
                window = track.positions[start:start + WINDOW_FRAMES]
                history = window[:HISTORY_FRAMES].copy()
                future = window[HISTORY_FRAMES:].copy()
                hist_steps = steps[start:start + HISTORY_FRAMES - 1]
                examples.append(PredictionExample(
                    scene_id=scene.scene_id,
                    agent_id=track.agent_id,
                    agent_class=track.agent_class,
                    t_ref=t_ref,
                    history=history,
                    future=future,
                    current_position=history[-1].copy(),
                    max_history_speed=float(hist_steps.max() / dt),
                    window_path_length=float(
                        steps[start:start + WINDOW_FRAMES - 1].sum()),
                    whole_track_stationary=track.is_stationary_track,
                ))
    return examples


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_scenes(
    ds: SceneDataset,
    test_fraction: float,
    seed: int,
) -> tuple[SceneDataset, SceneDataset]:
    """Deterministic scene-level split; no scene appears in both halves."""
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(ds.scenes)
    if n < 2:
        raise SplitError(f"need at least 2 scenes to split, got {n}")
    n_test = int(round(test_fraction * n))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx = set(perm[:n_test].tolist())

    def subset(indices):
        scenes = [copy.deepcopy(ds.scenes[i]) for i in range(n) if i in indices]
        return SceneDataset(scenes=scenes, maps=copy.deepcopy(ds.maps),
                            frame_rate_hz=ds.frame_rate_hz)

    train = subset(set(range(n)) - test_idx)
    test = subset(test_idx)
    return train, test
