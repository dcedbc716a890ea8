"""Seeded synthetic traffic worlds.

A world is a pair of arterial roads carrying staggered through
traffic: vehicles enter at one road end sometime during the scene,
drive to the far end and leave (tracks never turn around).  Ordinary
drivers cruise at city speeds and yield to pedestrians engaged at a
marked crosswalk; a fast minority blasts through without yielding —
which is exactly what makes the crosswalk neighborhoods risky.
Pedestrians patrol the sidewalk around a home crosswalk and cross
with a configured probability, waiting at the curb until a vehicle
that can actually stop is near (or one is already held at the line),
so crossings produce close vehicle-VRU interactions instead of empty
road.  A configured fraction of vehicles is parked at the curb and
never moves.

Everything is driven by per-scene RNG streams keyed (seed, scene
index), so scenes are independent of each other and the whole dataset
is a pure function of the config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import AgentClass, MapSpec, Rect, Scene, SceneDataset, Track
from .errors import ConfigError

WALK_SPEED = 1.4          # m/s
CYCLE_SPEED = 4.0         # m/s
YIELD_DECEL = 3.0         # m/s^2
ACCEL = 2.0               # m/s^2
STOP_GAP = 1.5            # m between stop point and crosswalk edge
HEADWAY_S = 3.0           # s: curb-waiting ped steps out for a car this close
MAX_WAIT_FRAMES = 40      # curb patience before crossing anyway
EDGE_MARGIN = 6.0         # m kept clear of crosswalks/parking at road ends
PATROL_RANGE = 10.0       # m peds wander around their home crosswalk
CLEAR_MARGIN = 1.0        # m past a car's lane at which a crosser stops blocking it
MIN_THROUGH_FRAMES = 20   # scene frames left when the last vehicle may enter


@dataclass
class RoadSpec:
    """A straight road across the full map extent.

    axis "x": travel along x, lateral offset is y (and vice versa).
    """
    axis: str = "x"
    center: float = 60.0
    width: float = 6.0

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ConfigError(f"road axis must be 'x' or 'y', got {self.axis!r}")
        if self.width <= 0:
            raise ConfigError("road width must be positive")


@dataclass
class CrosswalkSpec:
    road: int
    along: float
    half_length: float = 3.0


@dataclass
class WorldConfig:
    map_id: str = "simworld"
    x_min: float = 0.0
    y_min: float = 0.0
    x_max: float = 200.0
    y_max: float = 200.0
    roads: list = field(default_factory=lambda: [
        RoadSpec(axis="x", center=60.0),
        RoadSpec(axis="x", center=140.0),
    ])
    crosswalks: list = field(default_factory=lambda: [
        CrosswalkSpec(road=0, along=60.0),
        CrosswalkSpec(road=0, along=140.0),
        CrosswalkSpec(road=1, along=100.0),
        CrosswalkSpec(road=1, along=160.0),
    ])
    n_scenes: int = 50
    frames_per_scene: int = 60
    vehicles_per_scene: int = 10
    pedestrians_per_scene: int = 8
    cyclists_per_scene: int = 0
    stationary_vehicle_fraction: float = 0.27
    high_speed_fraction: float = 0.2
    crossing_probability: float = 0.9
    cruise_speed_range: tuple = (8.0, 13.0)
    high_speed_range: tuple = (16.0, 22.0)
    lane_offset: float = 2.0
    sidewalk_offset: float = 2.0
    frame_rate_hz: float = 2.0
    seed: int = 42

    def validate(self):
        if not self.roads:
            raise ConfigError("no drivable area: configure at least one road")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError("degenerate map extents")
        if self.frames_per_scene < 13:
            raise ConfigError("frames_per_scene must be at least 13 "
                              "(history + future window)")
        if not 0.0 <= self.stationary_vehicle_fraction <= 1.0:
            raise ConfigError("stationary_vehicle_fraction must be in [0, 1]")
        if not 0.0 <= self.high_speed_fraction <= 1.0:
            raise ConfigError("high_speed_fraction must be in [0, 1]")
        if self.stationary_vehicle_fraction + self.high_speed_fraction > 1.0:
            raise ConfigError("vehicle role fractions exceed 1")
        if not 0.0 <= self.crossing_probability <= 1.0:
            raise ConfigError("crossing_probability must be in [0, 1]")
        if self.n_scenes < 1 or self.vehicles_per_scene < 0:
            raise ConfigError("need at least one scene")
        for i, cw in enumerate(self.crosswalks):
            if not 0 <= cw.road < len(self.roads):
                raise ConfigError(f"crosswalk {i} references road {cw.road}")


def _road_span(cfg: WorldConfig, road: RoadSpec):
    if road.axis == "x":
        return cfg.x_min, cfg.x_max
    return cfg.y_min, cfg.y_max


def _road_rect(cfg: WorldConfig, road: RoadSpec) -> Rect:
    lo, hi = _road_span(cfg, road)
    half = road.width / 2.0
    if road.axis == "x":
        return Rect(lo, road.center - half, hi, road.center + half)
    return Rect(road.center - half, lo, road.center + half, hi)


def _crosswalk_rect(cfg: WorldConfig, cw: CrosswalkSpec) -> Rect:
    road = cfg.roads[cw.road]
    half = road.width / 2.0
    if road.axis == "x":
        return Rect(cw.along - cw.half_length, road.center - half,
                    cw.along + cw.half_length, road.center + half)
    return Rect(road.center - half, cw.along - cw.half_length,
                road.center + half, cw.along + cw.half_length)


def _to_world(road: RoadSpec, s: float, lat: float):
    if road.axis == "x":
        return (s, road.center + lat)
    return (road.center + lat, s)


def generate_world(config: WorldConfig) -> MapSpec:
    """Build the MapSpec for a world config (validating the geometry)."""
    config.validate()
    drivable = [_road_rect(config, r) for r in config.roads]
    crosswalks = [_crosswalk_rect(config, cw) for cw in config.crosswalks]
    for i, road in enumerate(config.roads):
        half = road.width / 2.0
        lo_lat = road.center - half
        hi_lat = road.center + half
        lat_min, lat_max = ((config.y_min, config.y_max) if road.axis == "x"
                            else (config.x_min, config.x_max))
        if lo_lat < lat_min or hi_lat > lat_max:
            raise ConfigError(f"road {i} leaves the map extents")
    for i, cw in enumerate(config.crosswalks):
        lo, hi = _road_span(config, config.roads[cw.road])
        if not (lo + EDGE_MARGIN <= cw.along - cw.half_length
                and cw.along + cw.half_length <= hi - EDGE_MARGIN):
            raise ConfigError(f"crosswalk {i} too close to the road end")
    return MapSpec(
        map_id=config.map_id,
        x_min=config.x_min, y_min=config.y_min,
        x_max=config.x_max, y_max=config.y_max,
        drivable=drivable, crosswalks=crosswalks)


@dataclass
class GroundTruthAnnotations:
    """What the simulator planted, for tests that recover it later."""
    hotspots: list            # crosswalk Rects with at least one crossing
    labels: dict              # scene_id -> agent_id -> behavior label
    seed: int
    n_scenes: int

    def to_json(self) -> dict:
        return {
            "hotspots": [r.to_json() for r in self.hotspots],
            "labels": self.labels,
            "seed": self.seed,
            "n_scenes": self.n_scenes,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruthAnnotations":
        return cls(
            hotspots=[Rect.from_json(r) for r in obj["hotspots"]],
            labels=obj["labels"],
            seed=int(obj["seed"]),
            n_scenes=int(obj["n_scenes"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruthAnnotations":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class _Vehicle:
    __slots__ = ("road", "d", "lat", "s", "v", "cruise", "stationary",
                 "yielded", "compliant", "born", "gone")

    def __init__(self, road, d, lat, s, cruise, stationary, compliant=True,
                 born=0):
        self.road = road
        self.d = d
        self.lat = lat
        self.s = s
        self.v = 0.0 if stationary else cruise
        self.cruise = cruise
        self.stationary = stationary
        self.yielded = False
        # compliant drivers yield at occupied crosswalks; the fast
        # minority does not, which is what makes them risky there
        self.compliant = compliant
        self.born = born   # first frame the track exists
        self.gone = False  # set when the vehicle leaves the far road end


class _Walker:
    __slots__ = ("road", "d", "side", "s", "lat", "speed", "mode", "cw",
                 "wait_frames", "crossed", "can_cross", "engaged_cws",
                 "lo", "hi")

    def __init__(self, road, d, side, s, lat, speed, can_cross, lo, hi):
        self.road = road
        self.d = d
        self.side = side
        self.s = s
        self.lat = lat
        self.speed = speed
        self.mode = "walk"
        self.cw = -1          # crosswalk index while waiting/crossing
        self.wait_frames = 0
        self.crossed = False
        self.can_cross = can_cross
        self.engaged_cws = []  # every crosswalk this walker committed to
        self.lo = lo          # patrol bounds along the road
        self.hi = hi


def _reflect(s, lo, hi, d):
    if s > hi:
        return 2.0 * hi - s, -d
    if s < lo:
        return 2.0 * lo - s, -d
    return s, d


def simulate_scenes(mapspec: MapSpec, config: WorldConfig):
    """Run the simulation; returns (SceneDataset, GroundTruthAnnotations)."""
    config.validate()
    dt = 1.0 / config.frame_rate_hz
    n_frames = config.frames_per_scene
    cw_by_road = {}
    for idx, cw in enumerate(config.crosswalks):
        cw_by_road.setdefault(cw.road, []).append(idx)
    scenes = []
    labels = {}
    hotspot_seen = set()

    # role quotas accumulate across scenes so the global fractions land
    # on target even when round(fraction * V) cannot
    v_per = config.vehicles_per_scene
    stat_quota = [
        int(round(config.stationary_vehicle_fraction * v_per * (i + 1)))
        - int(round(config.stationary_vehicle_fraction * v_per * i))
        for i in range(config.n_scenes)]
    high_quota = [
        int(round(config.high_speed_fraction * v_per * (i + 1)))
        - int(round(config.high_speed_fraction * v_per * i))
        for i in range(config.n_scenes)]

    for si in range(config.n_scenes):
        rng = np.random.default_rng([config.seed, si])
        scene_id = f"s{si:04d}"
        vehicles = _spawn_vehicles(config, rng, stat_quota[si], high_quota[si],
                                   n_frames)
        walkers = _spawn_walkers(config, rng, cw_by_road)
        pos_v = [[] for _ in vehicles]
        pos_w = [np.empty((n_frames, 2)) for _ in walkers]

        for f in range(n_frames):
            alive = []
            for i, veh in enumerate(vehicles):
                if veh.born <= f and not veh.gone:
                    pos_v[i].append(_to_world(
                        config.roads[veh.road], veh.s, veh.lat))
                    alive.append(veh)
            for i, wk in enumerate(walkers):
                pos_w[i][f] = _to_world(config.roads[wk.road], wk.s, wk.lat)
            if f == n_frames - 1:
                break
            _step_walkers(config, walkers, alive, rng, dt)
            _step_vehicles(config, alive, walkers, dt)

        tracks = []
        scene_labels = {}
        for i, veh in enumerate(vehicles):
            aid = f"veh{i:02d}"
            tracks.append(Track(agent_id=aid, agent_class=AgentClass.VEHICLE,
                                first_frame=veh.born,
                                positions=np.array(pos_v[i])))
            if veh.stationary:
                lbl = "stationary"
            elif veh.yielded:
                lbl = "yielding"
            elif veh.cruise > config.cruise_speed_range[1]:
                lbl = "high_speed"
            else:
                lbl = "cruising"
            scene_labels[aid] = lbl
        for i, wk in enumerate(walkers):
            cls = (AgentClass.CYCLIST if wk.speed > WALK_SPEED
                   else AgentClass.PEDESTRIAN)
            aid = f"ped{i:02d}" if cls is AgentClass.PEDESTRIAN else f"cyc{i:02d}"
            tracks.append(Track(agent_id=aid, agent_class=cls,
                                first_frame=0, positions=pos_w[i]))
            scene_labels[aid] = "crossing" if wk.crossed else "cruising"
            hotspot_seen.update(wk.engaged_cws)
        labels[scene_id] = scene_labels
        scenes.append(Scene(scene_id=scene_id, map_id=config.map_id,
                            tracks=tracks))

    dataset = SceneDataset(
        scenes=scenes,
        maps=[generate_world(config)],
        frame_rate_hz=config.frame_rate_hz)
    annotations = GroundTruthAnnotations(
        hotspots=[_crosswalk_rect(config, config.crosswalks[i])
                  for i in sorted(hotspot_seen)],
        labels=labels,
        seed=config.seed,
        n_scenes=config.n_scenes)
    return dataset, annotations


def _spawn_vehicles(config: WorldConfig, rng, n_stat: int, n_high: int,
                    n_frames: int):
    n = config.vehicles_per_scene
    n_stat = min(n_stat, n)
    n_high = min(n_high, n - n_stat)
    roles = (["stationary"] * n_stat + ["high"] * n_high
             + ["cruise"] * (n - n_stat - n_high))
    rng.shuffle(roles)
    vehicles = []
    for role in roles:
        ri = int(rng.integers(len(config.roads)))
        road = config.roads[ri]
        lo, hi = _road_span(config, road)
        d = 1 if rng.random() < 0.5 else -1
        lat = d * config.lane_offset
        if role == "stationary":
            # parked at the curb, kept off the crosswalks
            s = float(rng.uniform(lo + EDGE_MARGIN, hi - EDGE_MARGIN))
            for _ in range(20):
                if all(abs(s - cw.along) > cw.half_length + 4.0
                       for cw in config.crosswalks if cw.road == ri):
                    break
                s = float(rng.uniform(lo + EDGE_MARGIN, hi - EDGE_MARGIN))
            vehicles.append(_Vehicle(ri, d, lat, s, 0.0, True))
        else:
            # through traffic: enters at one road end sometime during the
            # scene and leaves at the far end; the fast minority does not
            # yield at crosswalks
            rng_range = (config.high_speed_range if role == "high"
                         else config.cruise_speed_range)
            cruise = float(rng.uniform(*rng_range))
            s = lo if d > 0 else hi
            born = int(rng.integers(0, max(1, n_frames - MIN_THROUGH_FRAMES)))
            vehicles.append(_Vehicle(ri, d, lat, s, cruise, False,
                                     compliant=(role != "high"), born=born))
    return vehicles


def _spawn_walkers(config: WorldConfig, rng, cw_by_road):
    walkers = []
    specs = ([(WALK_SPEED, True)] * config.pedestrians_per_scene
             + [(CYCLE_SPEED, False)] * config.cyclists_per_scene)
    # deal crosswalks round-robin from a shuffled deck so every crosswalk
    # is manned each scene; independent draws leave some unattended
    if config.crosswalks:
        deck = rng.permutation(len(config.crosswalks))
    n_dealt = 0
    for speed, can_cross in specs:
        d = 1 if rng.random() < 0.5 else -1
        side = 1 if rng.random() < 0.5 else -1
        if config.crosswalks and can_cross:
            # home crosswalk; the walker patrols the block around it
            ci = int(deck[n_dealt % len(deck)])
            n_dealt += 1
            cw = config.crosswalks[ci]
            ri = cw.road
            road = config.roads[ri]
            span_lo, span_hi = _road_span(config, road)
            lo = max(cw.along - PATROL_RANGE, span_lo + EDGE_MARGIN)
            hi = min(cw.along + PATROL_RANGE, span_hi - EDGE_MARGIN)
            s = cw.along - d * float(rng.uniform(2.0, 12.0))
            s = min(max(s, lo), hi)
        else:
            ri = int(rng.integers(len(config.roads)))
            road = config.roads[ri]
            span_lo, span_hi = _road_span(config, road)
            s = float(rng.uniform(span_lo + EDGE_MARGIN,
                                  span_hi - EDGE_MARGIN))
            lo = max(s - PATROL_RANGE, span_lo + EDGE_MARGIN)
            hi = min(s + PATROL_RANGE, span_hi - EDGE_MARGIN)
        lat = side * (road.width / 2.0 + config.sidewalk_offset)
        walkers.append(_Walker(ri, d, side, s, lat, speed, can_cross, lo, hi))
    return walkers


def _crosswalk_engagements(walkers):
    """Map crosswalk index -> walkers currently waiting at or on it."""
    eng = {}
    for wk in walkers:
        if wk.mode in ("wait", "cross"):
            eng.setdefault(wk.cw, []).append(wk)
    return eng


def _blocks_vehicle(wk, veh):
    """A committed walker blocks the car until it has passed its lane."""
    if wk.mode == "wait":
        return True
    # crossing: cleared once CLEAR_MARGIN beyond the car's lane center
    return (veh.lat - wk.lat) * wk.side < CLEAR_MARGIN


def _step_walkers(config, walkers, vehicles, rng, dt):
    for wk in walkers:
        road = config.roads[wk.road]
        lo, hi = wk.lo, wk.hi
        sidewalk = road.width / 2.0 + config.sidewalk_offset
        if wk.mode == "walk":
            s_new = wk.s + wk.d * wk.speed * dt
            if wk.can_cross:
                for ci, cw in enumerate(config.crosswalks):
                    if cw.road != wk.road:
                        continue
                    if (wk.s - cw.along) * (s_new - cw.along) <= 0.0 \
                            and wk.s != s_new:
                        if rng.random() < config.crossing_probability:
                            wk.mode = "wait"
                            wk.cw = ci
                            wk.engaged_cws.append(ci)
                            wk.wait_frames = 0
                            jitter = float(rng.uniform(
                                -(cw.half_length - 0.5),
                                cw.half_length - 0.5))
                            s_new = cw.along + jitter
                        break
            wk.s, wk.d = _reflect(s_new, lo, hi, wk.d)
        elif wk.mode == "wait":
            wk.wait_frames += 1
            cw = config.crosswalks[wk.cw]
            # step out for a car that is already held at the stripes, or
            # for an approaching one that is close yet still able to stop
            near = False
            for veh in vehicles:
                if veh.road != wk.road or veh.stationary:
                    continue
                gap = cw.along - veh.s
                if veh.v < 0.1 and abs(gap) <= cw.half_length + 2.0:
                    near = True
                    break
                to_line = abs(gap) - cw.half_length - STOP_GAP
                if (gap * veh.d > 0.0
                        and abs(gap) <= HEADWAY_S * veh.v
                        and to_line * 2.0 * YIELD_DECEL >= veh.v * veh.v):
                    near = True
                    break
            if near or wk.wait_frames >= MAX_WAIT_FRAMES:
                wk.mode = "cross"
                wk.crossed = True
        else:  # cross
            step = -wk.side * wk.speed * dt
            wk.lat += step
            if abs(wk.lat) >= sidewalk:
                wk.lat = -wk.side * sidewalk
                wk.side = -wk.side
                wk.mode = "walk"
                wk.cw = -1


def _step_vehicles(config, vehicles, walkers, dt):
    engaged = _crosswalk_engagements(walkers)
    for veh in vehicles:
        if veh.stationary:
            continue
        road = config.roads[veh.road]
        lo, hi = _road_span(config, road)
        stop_s = None
        best = None
        if veh.compliant:
            for ci, crossers in engaged.items():
                cw = config.crosswalks[ci]
                if cw.road != veh.road:
                    continue
                if not any(_blocks_vehicle(wk, veh) for wk in crossers):
                    continue
                s_stop = cw.along - veh.d * (cw.half_length + STOP_GAP)
                dist = veh.d * (s_stop - veh.s)
                if dist >= -0.25 and (best is None or dist < best):
                    best = dist
                    stop_s = s_stop
        if stop_s is not None:
            brake_dist = veh.v * veh.v / (2.0 * YIELD_DECEL)
            if best <= brake_dist + veh.v * dt:
                veh.v = max(0.0, veh.v - YIELD_DECEL * dt)
                veh.yielded = True
            else:
                veh.v = min(veh.cruise, veh.v + ACCEL * dt)
            s_new = veh.s + veh.d * veh.v * dt
            if best >= 0.0 and veh.d * (s_new - stop_s) > 0.0:
                s_new = stop_s
                veh.v = 0.0
        else:
            veh.v = min(veh.cruise, veh.v + ACCEL * dt)
            s_new = veh.s + veh.d * veh.v * dt
        if lo <= s_new <= hi:
            veh.s = s_new
        else:
            veh.gone = True  # left the far end; the track stops here
