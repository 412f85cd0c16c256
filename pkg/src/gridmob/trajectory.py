"""Minute-level ground-truth trajectories from a destination diary.

Indoors the agent follows a mixture of a static process and a Brownian step
rejected into the building footprint. Between buildings it drifts along the
street shortest path (parameterized by arc length) with lateral jitter
rejected onto street blocks. The realized diary records the actual stop and
travel durations, which is the ground truth detection algorithms are scored
against.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError

TRAVEL = None  # realized-diary location for street movement


@dataclass(frozen=True)
class MotionParams:
    """Per-step motion parameters resolved for one building visit."""

    sigma: float
    still_prob: float
    travel_speed: float = 3.0
    street_sigma: float = 0.2
    dt: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0 or self.travel_speed <= 0 or self.dt <= 0:
            raise InvalidArgumentError("sigma, travel_speed and dt must be positive")
        if not 0 <= self.still_prob <= 1:
            raise InvalidArgumentError("still_prob must be in [0, 1]")


@dataclass(frozen=True)
class MotionConfig:
    """Run-level motion settings; building values may be overridden per type."""

    travel_speed: float = 3.0
    street_sigma: float = 0.2
    dt: float = 1.0
    sigma_overrides: dict = field(default_factory=dict)
    still_prob_overrides: dict = field(default_factory=dict)

    def resolve(self, building, agent=None):
        btype = building.building_type
        sigma = building.sigma
        still = building.still_prob
        if btype in self.sigma_overrides:
            sigma = self.sigma_overrides[btype]
        if btype in self.still_prob_overrides:
            still = self.still_prob_overrides[btype]
        if agent is not None:
            sigma = agent.sigmas.get(btype, sigma)
            still = agent.still_probs.get(btype, still)
        return MotionParams(sigma=sigma, still_prob=still,
                            travel_speed=self.travel_speed,
                            street_sigma=self.street_sigma, dt=self.dt)


@dataclass
class TrajectoryDiagnostics:
    indoor_fallbacks: int = 0
    street_fallbacks: int = 0
    skipped_stops: list = field(default_factory=list)
    collapsed_pings: int = 0


@dataclass
class TravelState:
    """Shortest-path polyline with the agent's arc-length position on it."""

    city: object
    destination: object
    vertices: np.ndarray
    cumlen: np.ndarray
    s: float = 0.0

    @property
    def total_length(self):
        return float(self.cumlen[-1])

    def point_at(self, s):
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(self.cumlen, s, side="right")) - 1
        i = min(max(i, 0), len(self.vertices) - 2)
        seg = self.cumlen[i + 1] - self.cumlen[i]
        frac = 0.0 if seg == 0 else (s - self.cumlen[i]) / seg
        p = self.vertices[i] + frac * (self.vertices[i + 1] - self.vertices[i])
        return p

    def tangent_at(self, s):
        i = int(np.searchsorted(self.cumlen, min(s, self.total_length), side="right")) - 1
        i = min(max(i, 0), len(self.vertices) - 2)
        d = self.vertices[i + 1] - self.vertices[i]
        norm = np.linalg.norm(d)
        return d / norm if norm > 0 else np.array([1.0, 0.0])


def sample_step_indoor(pos, building, motion, rng, diagnostics=None, max_draws=10_000):
    """One indoor step: stay put with probability q, else a Gaussian step
    rejection-sampled into the building footprint."""
    if rng.random() < motion.still_prob:
        return pos
    scale = motion.sigma * math.sqrt(motion.dt)
    for _ in range(max_draws):
        candidate = (pos[0] + scale * rng.standard_normal(),
                     pos[1] + scale * rng.standard_normal())
        if building.contains(*candidate):
            return candidate
    if diagnostics is not None:
        diagnostics.indoor_fallbacks += 1
    return pos


def start_travel(city, graph, start_pos, origin_building, destination):
    """Build the street polyline from the current position to a building door.

    Departures from inside a building start at its door centroid; mid-street
    starts join the path at the current position.
    """
    if origin_building is not None:
        anchor = origin_building.door_centroid
        start_block = origin_building.door
    else:
        anchor = tuple(start_pos)
        start_block = (int(math.floor(start_pos[0])), int(math.floor(start_pos[1])))
    path_blocks = graph.shortest_path(start_block, destination.door)
    points = [anchor]
    points.extend((x + 0.5, y + 0.5) for x, y in path_blocks)
    points.append(destination.door_centroid)
    vertices = np.asarray(points, dtype=float)
    deltas = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cumlen = np.concatenate([[0.0], np.cumsum(deltas)])
    return TravelState(city=city, destination=destination, vertices=vertices, cumlen=cumlen)


def sample_step_travel(state, motion, rng, diagnostics=None, max_draws=100):
    """Advance along the path by travel_speed * dt with lateral jitter.

    Returns (position, arrived). On arrival the position snaps to the
    destination door centroid.
    """
    state.s += motion.travel_speed * motion.dt
    if state.s >= state.total_length:
        return np.asarray(state.destination.door_centroid), True
    base = state.point_at(state.s)
    tangent = state.tangent_at(state.s)
    normal = np.array([-tangent[1], tangent[0]])
    scale = motion.street_sigma * math.sqrt(motion.dt)
    if scale > 0:
        for _ in range(max_draws):
            candidate = base + normal * (scale * rng.standard_normal())
            if state.city.is_street((math.floor(candidate[0]), math.floor(candidate[1]))):
                return candidate, False
        if diagnostics is not None:
            diagnostics.street_fallbacks += 1
    return base, False


@dataclass
class TrajectoryResult:
    trajectory: pd.DataFrame
    diary: pd.DataFrame
    diagnostics: TrajectoryDiagnostics


def generate_trajectory(agent, destination_diary, city, motion_config=None, rng=None,
                        start_xy=None):
    """Simulate minute positions for every planned diary entry.

    Travel toward each entry's building is charged against that entry's
    planned duration; the remainder is spent indoors. A stop whose slot is
    exhausted before arrival is skipped and recorded in the diagnostics.
    The realized diary has one row per maximal run of stop/travel minutes
    and its durations sum exactly to the planned horizon.
    """
    motion_config = motion_config or MotionConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if destination_diary is None or len(destination_diary) == 0:
        raise InvalidArgumentError("destination diary is empty")
    for bid in destination_diary["location"]:
        if bid not in city.buildings:
            raise InvalidArgumentError(f"diary references unknown building {bid!r}")
    graph = city.build_street_graph()
    diagnostics = TrajectoryDiagnostics()

    entries = destination_diary.reset_index(drop=True)
    first_building = city.buildings[entries["location"].iloc[0]]
    pos = np.asarray(start_xy if start_xy is not None else first_building.door_centroid,
                     dtype=float)
    start_unix = int(entries["unix_timestamp"].iloc[0])
    horizon = int(entries["duration"].sum())

    xs = np.empty(horizon)
    ys = np.empty(horizon)
    contexts = []
    travel = None
    minute = 0
    for i in range(len(entries)):
        target = city.buildings[entries["location"].iloc[i]]
        arrived_minutes = 0
        for _ in range(int(entries["duration"].iloc[i])):
            if minute == 0:
                if target.contains(*pos):
                    context = target.id
                else:
                    origin = city.building_at(*pos)
                    context = origin.id if origin is not None else TRAVEL
            elif target.contains(*pos):
                travel = None
                motion = motion_config.resolve(target, agent)
                pos = np.asarray(
                    sample_step_indoor(pos, target, motion, rng, diagnostics))
                context = target.id
            else:
                if travel is None or travel.destination.id != target.id:
                    origin = city.building_at(*pos)
                    travel = start_travel(city, graph, pos, origin, target)
                motion = motion_config.resolve(target, agent)
                pos, arrived = sample_step_travel(travel, motion, rng, diagnostics)
                context = target.id if arrived else TRAVEL
                if arrived:
                    travel = None
            xs[minute] = pos[0]
            ys[minute] = pos[1]
            contexts.append(context)
            if context == target.id:
                arrived_minutes += 1
            minute += 1
        if arrived_minutes == 0:
            diagnostics.skipped_stops.append((i, target.id))

    times = start_unix + 60 * np.arange(horizon)
    trajectory = pd.DataFrame({
        "unix_timestamp": times,
        "local_timestamp": pd.to_datetime(times, unit="s"),
        "x": xs,
        "y": ys,
        "identifier": agent.identifier,
        "location": contexts,
    })
    diary = _realized_diary(trajectory)
    return TrajectoryResult(trajectory=trajectory, diary=diary, diagnostics=diagnostics)


def _realized_diary(trajectory):
    """Condense per-minute contexts into stop/travel rows (one minute each)."""
    loc = trajectory["location"]
    marker = loc.fillna("\x00travel")  # None != None would split travel runs
    segment = (marker != marker.shift()).cumsum()
    diary = trajectory.groupby(segment, sort=False).agg(
        unix_timestamp=("unix_timestamp", "first"),
        local_timestamp=("local_timestamp", "first"),
        duration=("unix_timestamp", "size"),
        location=("location", "first"),
    )
    return diary.reset_index(drop=True)
