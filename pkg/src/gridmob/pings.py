"""Sparsify ground-truth trajectories into GPS-like pings.

Ping times come from a three-process model: burst starts are a Poisson
process with mean gap beta_start; each burst lasts an exponential duration
with mean beta_durations (truncated at the next burst start and at the
horizon); within a burst, pings arrive with exponential gaps of mean
beta_ping. Sampled times are floored to the minute grid and the true
positions at those minutes get isotropic Gaussian measurement noise with
standard deviation ha/1.96 per axis.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError, MissingTrajectoryError


@dataclass(frozen=True)
class NHPPParams:
    """Mean minutes between burst starts, mean burst duration, and mean
    within-burst gap between pings."""

    beta_start: float
    beta_durations: float
    beta_ping: float

    def __post_init__(self):
        for name in ("beta_start", "beta_durations", "beta_ping"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be positive")


@dataclass(frozen=True)
class NoiseParams:
    """Horizontal accuracy in blocks: the per-axis 95% quantile of the
    measurement error, so sigma_gps = ha / 1.96. ha = 0 disables noise."""

    ha: float = 0.75

    def __post_init__(self):
        if self.ha < 0:
            raise InvalidArgumentError("ha must be nonnegative")

    @property
    def sigma_gps(self):
        return self.ha / 1.96


@dataclass(frozen=True)
class BurstSchedule:
    """Ordered burst intervals [s_i, e_i) in minutes within [0, horizon)."""

    bursts: tuple
    horizon: float

    def __post_init__(self):
        prev_end = None
        for i, (s, e) in enumerate(self.bursts):
            if not (0 <= s <= e <= self.horizon):
                raise InvalidArgumentError(f"burst {i} outside [0, horizon]")
            if prev_end is not None and s < prev_end:
                raise InvalidArgumentError(f"burst {i} starts before burst {i - 1} ends")
            prev_end = e

    def __len__(self):
        return len(self.bursts)

    def to_frame(self, start_unix=0):
        return pd.DataFrame({
            "start_minute": [s for s, _ in self.bursts],
            "end_minute": [e for _, e in self.bursts],
            "start_unix": [int(start_unix + 60 * s) for s, _ in self.bursts],
            "end_unix": [int(start_unix + 60 * e) for _, e in self.bursts],
        })


def sample_bursts(params, horizon, rng):
    """Sample burst start/end times on [0, horizon) minutes.

    Starts are cumulative exponential inter-arrivals (one draw past the
    horizon is discarded to avoid edge bias); each end is start + Exp(mean
    beta_durations), truncated at the next start and at the horizon.
    """
    if horizon <= 0:
        raise InvalidArgumentError("horizon must be positive")
    starts = []
    t = rng.exponential(params.beta_start)
    while t < horizon:
        starts.append(t)
        t += rng.exponential(params.beta_start)
    durations = rng.exponential(params.beta_durations, size=len(starts))
    bursts = []
    for i, (s, d) in enumerate(zip(starts, durations)):
        e = min(s + d, horizon)
        if i + 1 < len(starts):
            e = min(e, starts[i + 1])
        bursts.append((s, e))
    return BurstSchedule(bursts=tuple(bursts), horizon=float(horizon))


def _continuous_ping_times(schedule, beta_ping, rng):
    """Raw within-burst ping times before flooring to the minute grid."""
    times = []
    for s, e in schedule.bursts:
        t = s + rng.exponential(beta_ping)
        while t <= e:
            times.append(t)
            t += rng.exponential(beta_ping)
    return np.asarray(times)


def sample_ping_times(schedule, beta_ping, rng, diagnostics=None):
    """Ping minutes: exponential inter-arrivals within each burst, floored
    to the minute grid with duplicates collapsed (keeping the first)."""
    raw = _continuous_ping_times(schedule, beta_ping, rng)
    if raw.size == 0:
        return np.array([], dtype=np.int64)
    floored = np.floor(raw).astype(np.int64)
    floored = floored[floored < schedule.horizon]
    minutes = np.unique(floored)  # input is sorted, so unique == keep-first
    if diagnostics is not None:
        diagnostics.collapsed_pings += int(floored.size - minutes.size)
    return minutes


def sparsify(trajectory, ping_minutes, noise, rng, ha_overrides=None):
    """Noisy observations of the trajectory at the given minute offsets.

    Output columns follow the sparse-trajectory schema
    (x, y, local_timestamp, unix_timestamp, identifier, ha), indexed by
    unix_timestamp. ha_overrides optionally gives a per-ping accuracy list.
    """
    ping_minutes = np.asarray(ping_minutes, dtype=np.int64)
    n = len(trajectory)
    if ping_minutes.size and (ping_minutes.min() < 0 or ping_minutes.max() >= n):
        raise InvalidArgumentError("ping time outside the trajectory span")

    rows = trajectory.iloc[ping_minutes]
    if ha_overrides is not None:
        if len(ha_overrides) != ping_minutes.size:
            raise InvalidArgumentError("ha_overrides length must match ping count")
        ha = np.asarray(ha_overrides, dtype=float)
    else:
        ha = np.full(ping_minutes.size, noise.ha)
    sigma = ha / 1.96
    offsets = rng.standard_normal((ping_minutes.size, 2)) * sigma[:, None]

    sparse = pd.DataFrame({
        "x": rows["x"].to_numpy() + offsets[:, 0],
        "y": rows["y"].to_numpy() + offsets[:, 1],
        "local_timestamp": rows["local_timestamp"].to_numpy(),
        "unix_timestamp": rows["unix_timestamp"].to_numpy(),
        "identifier": rows["identifier"].to_numpy(),
        "ha": ha,
    })
    return sparse.set_index("unix_timestamp", drop=False)


def sample_traj_hier_nhpp(agent, params, noise, seed, output_bursts=False):
    """Sample a sparse trajectory for an agent from its ground-truth one.

    Composes burst sampling, within-burst ping times, and measurement
    noise; the result is stored on the agent. With output_bursts the latent
    burst schedule is returned alongside.
    """
    if agent.trajectory is None or len(agent.trajectory) == 0:
        raise MissingTrajectoryError(
            f"agent {agent.identifier!r} has no ground-truth trajectory")
    rng = np.random.default_rng(seed)
    horizon = len(agent.trajectory)
    schedule = sample_bursts(params, horizon, rng)
    minutes = sample_ping_times(schedule, params.beta_ping, rng)
    sparse = sparsify(agent.trajectory, minutes, noise, rng)
    agent.sparse_traj = sparse
    if output_bursts:
        return sparse, schedule
    return sparse
