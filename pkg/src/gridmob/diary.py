"""Destination-diary generation: a circadian-constrained exploration and
preferential-return process over the city's buildings.

At each step of size delta the agent stays at its current building with a
type-specific probability; otherwise it leaves, either exploring an unvisited
building (with probability decaying as a power law of the number of distinct
places already visited, destinations weighted by inverse squared street
distance) or returning to a visited one (weighted by past visit counts).
A time-of-day schedule restricts which building types may be entered.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError

DEFAULT_KAPPA = {"home": 0.97, "work": 0.97, "retail": 0.6, "park": 0.6}

MINUTES_PER_DAY = 24 * 60


@dataclass(frozen=True)
class EPRParams:
    """Parameters of the diary process.

    rho/gamma control the exploration probability rho * |V|^-gamma
    (conditional on leaving); kappa maps building type to the per-step stay
    probability; delta_minutes is the diary step.
    """

    rho: float = 0.6
    gamma: float = 0.21
    kappa: dict = field(default_factory=lambda: dict(DEFAULT_KAPPA))
    delta_minutes: int = 15

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidArgumentError("rho must be positive")
        if self.gamma < 0:
            raise InvalidArgumentError("gamma must be nonnegative")
        if self.delta_minutes <= 0:
            raise InvalidArgumentError("delta_minutes must be positive")
        for btype, k in self.kappa.items():
            if not 0 < k < 1:
                raise InvalidArgumentError(f"kappa[{btype!r}] must be in (0, 1), got {k}")


def _to_minute_of_day(value):
    if isinstance(value, str):
        hours, minutes = value.split(":")
        return (int(hours) * 60 + int(minutes)) % MINUTES_PER_DAY
    if isinstance(value, (int, np.integer)):
        return int(value) % MINUTES_PER_DAY
    # datetime-like
    return value.hour * 60 + value.minute


class CircadianSchedule:
    """Time-of-day windows mapping to the building types allowed in them."""

    def __init__(self, entries):
        self.entries = [
            (_to_minute_of_day(start), _to_minute_of_day(end), frozenset(types))
            for start, end, types in entries
        ]
        segments = []
        for start, end, types in self.entries:
            if not types:
                raise InvalidArgumentError("schedule interval with empty allowed set")
            if start < end:
                segments.append((start, end, types))
            else:  # wraps midnight; start == end means the full day
                segments.append((start, MINUTES_PER_DAY, types))
                if end > 0:
                    segments.append((0, end, types))
        segments.sort()
        covered = 0
        for start, end, _ in segments:
            if start != covered:
                raise InvalidArgumentError(
                    f"schedule does not tile the day: gap or overlap at minute {covered}")
            covered = end
        if covered != MINUTES_PER_DAY:
            raise InvalidArgumentError("schedule does not cover 24 hours")
        self._segments = segments

    @classmethod
    def default(cls):
        return cls([
            ("20:00", "03:00", {"home"}),
            ("03:00", "07:00", {"home"}),
            ("07:00", "09:00", {"home", "retail", "park"}),
            ("09:00", "12:00", {"work"}),
            ("12:00", "13:00", {"work", "retail", "park"}),
            ("13:00", "17:00", {"work"}),
            ("17:00", "20:00", {"home", "retail", "park"}),
        ])

    @classmethod
    def always(cls, types=("home", "work", "retail", "park")):
        """Single-interval schedule allowing the given types all day."""
        return cls([("00:00", "00:00", types)])

    def allowed_types(self, when):
        minute = _to_minute_of_day(when)
        for start, end, types in self._segments:
            if start <= minute < end:
                return types
        raise AssertionError("schedule coverage was validated at construction")

    def to_config(self):
        return [
            [f"{s // 60:02d}:{s % 60:02d}", f"{e // 60:02d}:{e % 60:02d}", sorted(t)]
            for s, e, t in self.entries
        ]

    @classmethod
    def from_config(cls, data):
        return cls([(s, e, set(t)) for s, e, t in data])


def allowed_types(time_of_day, schedule):
    """Building types the schedule allows at the given time of day."""
    return schedule.allowed_types(time_of_day)


@dataclass
class AgentVisitState:
    """Current location plus visit counts over all buildings."""

    current: str
    counts: dict

    def unexplored(self):
        return {bid for bid, c in self.counts.items() if c == 0}

    def visited_other(self):
        return {bid for bid, c in self.counts.items() if c > 0 and bid != self.current}


class TransitionContext:
    """Precomputed arrays for fast transition-row evaluation on one city."""

    def __init__(self, city, params, graph=None):
        if not city.buildings:
            raise InvalidArgumentError("city has no buildings")
        graph = graph or city.build_street_graph()
        self.city = city
        self.params = params
        self.ids = list(city.buildings)
        self.index = {bid: i for i, bid in enumerate(self.ids)}
        self.types = [city.buildings[bid].building_type for bid in self.ids]
        self.kappa = np.array([params.kappa[t] for t in self.types])
        n = len(self.ids)
        dist = np.zeros((n, n))
        for i, a in enumerate(self.ids):
            for j, b in enumerate(self.ids):
                if i < j:
                    d = graph.door_distance(city.buildings[a], city.buildings[b])
                    if math.isinf(d):
                        raise InvalidArgumentError(
                            f"buildings {a!r} and {b!r} are not street-connected")
                    if d == 0:
                        raise InvalidArgumentError(
                            f"buildings {a!r} and {b!r} share a door block (distance 0)")
                    dist[i, j] = dist[j, i] = d
        self.dist = dist
        with np.errstate(divide="ignore"):
            self.inv_sq = np.where(dist > 0, 1.0 / np.square(dist), 0.0)

    def counts_vector(self, counts):
        vec = np.zeros(len(self.ids))
        for bid, c in counts.items():
            vec[self.index[bid]] = c
        return vec

    def type_mask(self, types):
        return np.array([t in types for t in self.types])


def unconstrained_row(state, params, ctx):
    """Transition probability vector from the current building.

    Stay mass is kappa for the current type. Conditional on leaving, the
    total exploration probability is min(rho * |V|^-gamma, 1) split over
    unexplored buildings proportionally to 1/r^2; the rest returns to
    visited buildings proportionally to their visit counts. The row is
    indexed by ctx.ids and sums to one.
    """
    k = ctx.index[state.current]
    counts = state.counts if isinstance(state.counts, np.ndarray) else ctx.counts_vector(state.counts)
    row = np.zeros(len(ctx.ids))
    kappa = ctx.kappa[k]
    row[k] = kappa
    leave = 1.0 - kappa

    visited = (counts > 0)
    visited[k] = False
    unexplored = (counts == 0)
    unexplored[k] = False
    n_visited = int(visited.sum())

    if not unexplored.any() and n_visited == 0:
        row[k] = 1.0  # nowhere else to go
        return row

    if not unexplored.any():
        explore_mass = 0.0
    elif n_visited == 0:
        explore_mass = leave
    else:
        explore_mass = leave * min(params.rho * n_visited ** (-params.gamma), 1.0)

    if explore_mass > 0:
        weights = ctx.inv_sq[k] * unexplored
        total = weights.sum()
        if total <= 0:
            raise InvalidArgumentError("unexplored buildings with no finite distances")
        row += explore_mass * weights / total
    return_mass = leave - explore_mass
    if return_mass > 0 and n_visited > 0:
        weights = counts * visited
        row += return_mass * weights / weights.sum()
    return row


def constrain_row(row, allowed, building_types, current=None, diagnostics=None):
    """Condition a transition row on the allowed building types.

    Entries for disallowed types are zeroed and the row is renormalized.
    When ``current`` (an index) is given, that entry is kept regardless of
    its type, so the stay outcome is never removed; if nothing has positive
    mass the row degenerates to a forced stay, counted in ``diagnostics``
    (a dict) under "forced_stays".
    """
    row = np.asarray(row, dtype=float)
    mask = np.array([t in allowed for t in building_types])
    if current is not None:
        mask = mask.copy()
        mask[current] = True
    constrained = np.where(mask, row, 0.0)
    total = constrained.sum()
    if total <= 0:
        if current is None:
            raise InvalidArgumentError("no allowed building has positive probability")
        if diagnostics is not None:
            diagnostics["forced_stays"] = diagnostics.get("forced_stays", 0) + 1
        constrained = np.zeros_like(row)
        constrained[current] = 1.0  # forced stay
        return constrained
    return constrained / total


def initial_visit_counts(agent, rng, home_count=20, work_count=10,
                         extra_locations=3, extra_count=1):
    """Seed visit counts: strong home/work priors plus a few random places."""
    counts = {bid: 0 for bid in agent.city.buildings}
    counts[agent.home] = home_count
    counts[agent.workplace] = work_count
    others = sorted(bid for bid in counts if bid not in (agent.home, agent.workplace))
    n_extra = min(extra_locations, len(others))
    if n_extra > 0:
        for bid in rng.choice(others, size=n_extra, replace=False):
            counts[bid] = extra_count
    return counts


def sample_transition(state, params, ctx, allowed, rng, diagnostics=None):
    """Draw the next building id from the constrained transition row."""
    row = unconstrained_row(state, params, ctx)
    k = ctx.index[state.current]
    row = constrain_row(row, allowed, ctx.types, current=k, diagnostics=diagnostics)
    u = rng.random()
    next_idx = int(np.searchsorted(np.cumsum(row), u, side="right"))
    next_idx = min(next_idx, len(row) - 1)
    return ctx.ids[next_idx]


def generate_destination_diary(agent, start_time, end_time, params, schedule, rng,
                               start_location=None, initial_counts=None,
                               diagnostics=None):
    """Sample the agent's planned stop sequence on the delta grid, condensed.

    Visit counts increment once per entry into a building, not per occupied
    step. The horizon is rounded down to a whole number of steps. Forced
    stays (no allowed destination had mass) are counted in ``diagnostics``.
    """
    start = pd.Timestamp(start_time)
    end = pd.Timestamp(end_time)
    if end <= start:
        raise InvalidArgumentError("end_time must be after start_time")
    ctx = _context_for(agent.city, params)
    n_steps = int((end - start).total_seconds() // (params.delta_minutes * 60))
    if n_steps == 0:
        raise InvalidArgumentError("horizon shorter than one diary step")

    counts = dict(initial_counts) if initial_counts is not None else initial_visit_counts(agent, rng)
    state = AgentVisitState(
        current=start_location or agent.home,
        counts=ctx.counts_vector(counts),
    )
    locations = [state.current]
    step = pd.Timedelta(minutes=params.delta_minutes)
    when = start
    for _ in range(n_steps - 1):
        when = when + step
        allowed = schedule.allowed_types(when)
        nxt = sample_transition(state, params, ctx, allowed, rng,
                                diagnostics=diagnostics)
        if nxt != state.current:
            state.counts[ctx.index[nxt]] += 1
        state.current = nxt
        locations.append(nxt)

    times = pd.date_range(start=start, periods=n_steps, freq=step)
    diary = pd.DataFrame({
        "unix_timestamp": (times.astype("int64") // 10**9).astype("int64"),
        "local_timestamp": times,
        "duration": params.delta_minutes,
        "location": locations,
    })
    return condense_destinations(diary)


# Context construction is quadratic in buildings; keep a small cache keyed
# by city identity and the kappa table.
_CTX_CACHE = {}


def _context_for(city, params):
    key = (id(city), tuple(sorted(params.kappa.items())))
    ctx = _CTX_CACHE.get(key)
    if ctx is None or ctx.city is not city:
        if len(_CTX_CACHE) >= 8:
            _CTX_CACHE.clear()
        ctx = TransitionContext(city, params)
        _CTX_CACHE[key] = ctx
    return ctx


def condense_destinations(diary):
    """Merge maximal runs of identical consecutive locations, summing durations."""
    required = ["unix_timestamp", "local_timestamp", "duration", "location"]
    missing = set(required) - set(diary.columns)
    if missing:
        raise InvalidArgumentError(f"diary missing columns {sorted(missing)}")
    if diary.empty:
        return diary.loc[:, required].copy()
    starts = diary["unix_timestamp"].to_numpy()
    durations = diary["duration"].to_numpy()
    if not (starts[1:] == starts[:-1] + durations[:-1] * 60).all():
        raise InvalidArgumentError("diary rows are not contiguous in time")
    segment = diary["location"].ne(diary["location"].shift()).cumsum()
    condensed = diary.groupby(segment, sort=False).agg(
        unix_timestamp=("unix_timestamp", "first"),
        local_timestamp=("local_timestamp", "first"),
        duration=("duration", "sum"),
        location=("location", "first"),
    )
    return condensed.reset_index(drop=True)
