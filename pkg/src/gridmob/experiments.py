"""Experiment harness: seeded end-to-end runs, reports, and dataset emission.

Every run is a pure function of its configuration (including the master
seed). Sub-seeds derive from a stable hash of (master seed, labels...), so
adding agents or seeds never perturbs existing outputs, and any agent can
be regenerated in isolation.
"""

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .agents import Agent
from .city import City, GardenSpec, generate_garden_layout
from .diary import (
    CircadianSchedule,
    DEFAULT_KAPPA,
    EPRParams,
    condense_destinations,
    generate_destination_diary,
)
from .errors import InvalidArgumentError
from .io import (
    read_json,
    sha256_file,
    write_diary,
    write_json,
    write_sparse_trajectory,
    write_trajectory,
)
from .pings import NHPPParams, NoiseParams, sample_bursts, sample_ping_times, sparsify
from .stops import evaluate_against_diary, lachesis, stops_from_labels, temporal_dbscan
from .trajectory import MotionConfig, generate_trajectory


def derive_seed(master_seed, *labels):
    """Stable 64-bit sub-seed from the master seed and a label path."""
    payload = ":".join([str(master_seed), *map(str, labels)])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def two_proportion_test(k1, n1, k2, n2):
    """Two-sided two-proportion z-test; returns (z, p_value)."""
    if min(n1, n2) == 0:
        raise InvalidArgumentError("empty sample in proportion test")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return 0.0, 1.0
    z = (p1 - p2) / se
    return z, math.erfc(abs(z) / math.sqrt(2))


DEFAULT_CONFIG = {
    "master_seed": 0,
    "seed_count": 500,
    "city": {"kind": "garden", "width": 22, "height": 22, "park_size": 4,
             "rings": [["home", 2], ["retail", 2], ["work", 2]]},
    "diary": {"rho": 0.6, "gamma": 0.21, "kappa": dict(DEFAULT_KAPPA),
              "delta_minutes": 15, "schedule": None},
    "motion": {"travel_speed": 3.0, "street_sigma": 0.2, "dt": 1.0},
    "nhpp": {"beta_start": 300, "beta_durations": 60, "beta_ping": 10},
    "noise": {"ha": 0.75},
    "example1": {
        "start": "2024-06-01",
        "stays": None,  # defaults to 1 h at each home, 3 h at the retail
        "ha": 0.75,
        "matching_tolerance": 0.0,
        "sparsity_regimes": {"lower_local": [150, 20, 2],
                             "higher_local": [60, 40, 10]},
        "dbscan": {"coarse": {"dist_thresh": 2.25, "time_thresh": 120, "min_pts": 2},
                   "fine": {"dist_thresh": 1.0, "time_thresh": 45, "min_pts": 3}},
    },
    "example2": {
        "start": "2024-06-01",
        "stay_minutes": 120,
        # A 2x2-block park: with delta_roam = 3 the low-variance ping cloud
        # must fit the roam diameter, which a 4x4 park's footprint cannot.
        "city": {"kind": "garden", "width": 22, "height": 22, "park_size": 2,
                 "rings": [["home", 2], ["retail", 2], ["work", 2]]},
        "park": None,  # defaults to the city's first park
        "agents": {
            "low_variance": {"still_prob": 0.75, "sigma": 1.5 / 1.96, "ha": 0.75},
            "high_variance": {"still_prob": 0.1, "sigma": 2.5 / 1.96, "ha": 1.5},
        },
        "nhpp": {"beta_start": 10, "beta_durations": 1000, "beta_ping": 5},
        "lachesis": {"dur_min": 15, "dt_max": 30, "delta_roam": 3},
        "coverage_threshold": 0.9,
    },
    "population": {"count": 3, "agents": None, "start": "2024-01-01", "days": 7},
}


# Design maps are replaced wholesale when the user provides them; merging
# them with the defaults would silently grow the experiment design.
_REPLACE_PATHS = {
    ("example1", "sparsity_regimes"),
    ("example1", "dbscan"),
    ("example1", "stays"),
    ("example2", "agents"),
    ("diary", "schedule"),
}


def _merge(defaults, override, path=()):
    if path in _REPLACE_PATHS or not isinstance(defaults, dict) \
            or not isinstance(override, dict):
        return override
    merged = dict(defaults)
    for key, value in override.items():
        if key in defaults:
            merged[key] = _merge(defaults[key], value, path + (key,))
        else:
            merged[key] = value
    return merged


@dataclass
class ExperimentConfig:
    """Resolved run configuration; see DEFAULT_CONFIG for the shape."""

    data: dict

    @classmethod
    def from_dict(cls, overrides=None):
        return cls(data=_merge(DEFAULT_CONFIG, overrides or {}))

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(read_json(path))

    def to_dict(self):
        return json.loads(json.dumps(self.data))

    def digest(self):
        return hashlib.sha256(
            json.dumps(self.data, sort_keys=True).encode("utf-8")).hexdigest()

    @property
    def master_seed(self):
        return self.data["master_seed"]

    @property
    def seed_count(self):
        return self.data["seed_count"]

    def build_city(self, spec=None):
        spec = spec or self.data["city"]
        kind = spec.get("kind", "garden")
        if kind == "garden":
            return generate_garden_layout(GardenSpec(
                width=spec.get("width", 22),
                height=spec.get("height", 22),
                park_size=spec.get("park_size", 4),
                rings=tuple((t, f) for t, f in spec.get(
                    "rings", [["home", 2], ["retail", 2], ["work", 2]])),
            ))
        if kind == "example1":
            return build_example1_city()
        if kind == "file":
            return City.load(spec["path"])
        if kind == "inline":
            return City.from_dict(spec["city"])
        raise InvalidArgumentError(f"unknown city kind {kind!r}")

    def epr_params(self):
        d = self.data["diary"]
        return EPRParams(rho=d["rho"], gamma=d["gamma"], kappa=dict(d["kappa"]),
                         delta_minutes=d["delta_minutes"])

    def schedule(self):
        entries = self.data["diary"].get("schedule")
        if entries is None:
            return CircadianSchedule.default()
        return CircadianSchedule.from_config(entries)

    def motion_config(self):
        m = self.data["motion"]
        return MotionConfig(travel_speed=m["travel_speed"],
                            street_sigma=m["street_sigma"], dt=m["dt"])

    def nhpp_params(self, section=None):
        d = section or self.data["nhpp"]
        return NHPPParams(beta_start=d["beta_start"],
                          beta_durations=d["beta_durations"],
                          beta_ping=d["beta_ping"])

    def noise_params(self):
        return NoiseParams(ha=self.data["noise"]["ha"])


def build_example1_city():
    """Two nearby 2-block homes and a larger 4x4 retail a few blocks on.

    Home centroids sit 3 blocks apart: close enough that a coarse spatial
    threshold can confuse them, far enough that they are separable at all.
    """
    city = City(15, 8)
    city.add_building("home", (3, 2), blocks=[(2, 2), (2, 3)])
    city.add_building("home", (4, 2), blocks=[(5, 2), (5, 3)])
    city.add_building("retail", (8, 2), bbox=(9, 1, 13, 5))
    return city


def _custom_diary(stays, start):
    """Condensed destination diary from (location, minutes) pairs."""
    when = pd.Timestamp(start)
    rows = []
    for location, minutes in stays:
        rows.append({
            "unix_timestamp": int(when.timestamp()),
            "local_timestamp": when,
            "duration": int(minutes),
            "location": location,
        })
        when += pd.Timedelta(minutes=int(minutes))
    return condense_destinations(pd.DataFrame(rows))


# ---------------------------------------------------------------------------
# Run reports
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    kind: str
    master_seed: int
    config: dict
    per_seed: pd.DataFrame
    aggregates: dict
    files: dict

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        per_seed_path = out / "per_seed_metrics.csv"
        self.per_seed.to_csv(per_seed_path, index=False)
        self.files["per_seed_metrics.csv"] = str(per_seed_path)
        write_json({
            "kind": self.kind,
            "master_seed": self.master_seed,
            "config": self.config,
            "aggregates": self.aggregates,
            "files": sorted(self.files),
        }, out / "report.json")
        return out / "report.json"


_AGGREGATORS = {}


def load_run_report(out_dir):
    """Load a saved report, verifying aggregates against the per-seed table."""
    out = Path(out_dir)
    meta = read_json(out / "report.json")
    per_seed = pd.read_csv(out / "per_seed_metrics.csv")
    recomputed = _AGGREGATORS[meta["kind"]](per_seed)
    if json.loads(json.dumps(recomputed)) != meta["aggregates"]:
        raise InvalidArgumentError("report aggregates do not match per-seed records")
    return RunReport(kind=meta["kind"], master_seed=meta["master_seed"],
                     config=meta["config"], per_seed=per_seed,
                     aggregates=meta["aggregates"],
                     files={name: str(out / name) for name in meta["files"]})


# ---------------------------------------------------------------------------
# Example 1: local sparsity vs DBScan parametrization
# ---------------------------------------------------------------------------

def _example1_context(config):
    cfg = config.data["example1"]
    regimes = cfg["sparsity_regimes"]
    dbscan_sets = cfg["dbscan"]
    if len(regimes) < 2:
        raise InvalidArgumentError("example1 needs both sparsity regimes")
    if len(dbscan_sets) < 2:
        raise InvalidArgumentError("example1 needs both DBScan parametrizations")
    city = config.build_city(cfg.get("city") or {"kind": "example1"})
    stays = cfg["stays"]
    if stays is None:
        homes = sorted(b.id for b in city.buildings.values() if b.building_type == "home")
        retails = sorted(b.id for b in city.buildings.values() if b.building_type == "retail")
        if len(homes) < 2 or not retails:
            raise InvalidArgumentError("example1 city needs two homes and a retail")
        stays = [[homes[0], 60], [homes[1], 60], [retails[0], 180]]
    diary = _custom_diary(stays, cfg["start"])
    agent = Agent("example1", city, stays[0][0], stays[-1][0])
    rng = np.random.default_rng(derive_seed(config.master_seed, "example1", "trajectory"))
    result = generate_trajectory(agent, diary, city, config.motion_config(), rng)
    return {
        "config": config,
        "cfg": cfg,
        "city": city,
        "trajectory": result.trajectory,
        "realized": result.diary,
        "regimes": regimes,
        "dbscan": dbscan_sets,
    }


def _example1_seed_records(ctx, seed):
    config = ctx["config"]
    cfg = ctx["cfg"]
    horizon = len(ctx["trajectory"])
    records = []
    for regime, betas in ctx["regimes"].items():
        params = NHPPParams(*betas)
        rng = np.random.default_rng(
            derive_seed(config.master_seed, "example1", "pings", regime, seed))
        schedule = sample_bursts(params, horizon, rng)
        minutes = sample_ping_times(schedule, params.beta_ping, rng)
        sparse = sparsify(ctx["trajectory"], minutes, NoiseParams(ha=cfg["ha"]), rng)
        for name, dbs in ctx["dbscan"].items():
            labels = temporal_dbscan(sparse, dbs["dist_thresh"], dbs["time_thresh"],
                                     dbs["min_pts"])
            metrics = evaluate_against_diary(
                stops_from_labels(sparse, labels), ctx["realized"],
                matching_tolerance=cfg["matching_tolerance"])
            record = {
                "seed": seed,
                "regime": regime,
                "dbscan_params": name,
                "n_pings": len(sparse),
                "n_true": metrics.n_true,
                "n_detected": metrics.n_detected,
                "statuses": "|".join(metrics.statuses),
                "overlap_minutes": round(metrics.overlap_minutes, 3),
                "exact_recovery": int(metrics.exact_recovery),
            }
            records.append(record)
    return records


def _example1_chunk(config_dict, seeds):
    ctx = _example1_context(ExperimentConfig(data=config_dict))
    out = []
    for seed in seeds:
        out.extend(_example1_seed_records(ctx, seed))
    return out


def _aggregate_example1(per_seed):
    aggregates = {"cells": {}, "significance": {}}
    grouped = per_seed.groupby(["dbscan_params", "regime"], sort=True)
    for (params, regime), group in grouped:
        aggregates["cells"][f"{params}/{regime}"] = {
            "n_seeds": int(group["seed"].nunique()),
            "exact_recoveries": int(group["exact_recovery"].sum()),
            "recovery_rate": float(group["exact_recovery"].mean()),
            "mean_pings": float(group["n_pings"].mean()),
            "mean_detected": float(group["n_detected"].mean()),
        }
    for params in sorted(per_seed["dbscan_params"].unique()):
        sub = per_seed[per_seed["dbscan_params"] == params]
        regimes = sorted(sub["regime"].unique())
        if len(regimes) != 2:
            continue
        a = sub[sub["regime"] == regimes[0]]["exact_recovery"]
        b = sub[sub["regime"] == regimes[1]]["exact_recovery"]
        z, p = two_proportion_test(int(a.sum()), len(a), int(b.sum()), len(b))
        aggregates["significance"][params] = {
            "regimes": regimes, "z": z, "p_value": p,
            "rates": [float(a.mean()), float(b.mean())],
        }
    return aggregates


_AGGREGATORS["example1"] = _aggregate_example1


def run_example1(config, out_dir=None, figures=True, jobs=1):
    """Sparsify one ground truth under both regimes, cluster under both
    DBScan parametrizations, and aggregate exact-recovery rates per cell."""
    ctx = _example1_context(config)
    seeds = list(range(config.seed_count))
    records = _fan_out(_example1_chunk, config.to_dict(), seeds, jobs)
    per_seed = pd.DataFrame(records)
    report = RunReport(
        kind="example1",
        master_seed=config.master_seed,
        config=config.to_dict()["example1"],
        per_seed=per_seed,
        aggregates=_aggregate_example1(per_seed),
        files={},
    )
    if out_dir is not None:
        _emit_example1(ctx, report, Path(out_dir), figures)
        report.save(out_dir)
    return report


def _emit_example1(ctx, report, out, figures):
    out.mkdir(parents=True, exist_ok=True)
    config = ctx["config"]
    cfg = ctx["cfg"]
    write_diary(ctx["realized"], out / "realized_diary.csv")
    write_trajectory(ctx["trajectory"], out / "trajectory.csv")
    report.files["realized_diary.csv"] = str(out / "realized_diary.csv")
    report.files["trajectory.csv"] = str(out / "trajectory.csv")

    horizon = len(ctx["trajectory"])
    timelines = {}
    panels = {}
    for regime, betas in ctx["regimes"].items():
        params = NHPPParams(*betas)
        rng = np.random.default_rng(
            derive_seed(config.master_seed, "example1", "pings", regime, 0))
        schedule = sample_bursts(params, horizon, rng)
        minutes = sample_ping_times(schedule, params.beta_ping, rng)
        sparse = sparsify(ctx["trajectory"], minutes, NoiseParams(ha=cfg["ha"]), rng)
        timeline = pd.DataFrame(
            [{"kind": "burst", "start_minute": s, "end_minute": e}
             for s, e in schedule.bursts]
            + [{"kind": "ping", "start_minute": int(m), "end_minute": int(m)}
               for m in minutes])
        timeline_path = out / f"timeline_{regime}.csv"
        timeline.to_csv(timeline_path, index=False)
        report.files[timeline_path.name] = str(timeline_path)
        timelines[regime] = (list(schedule.bursts), list(minutes))
        for name, dbs in ctx["dbscan"].items():
            labels = temporal_dbscan(sparse, dbs["dist_thresh"], dbs["time_thresh"],
                                     dbs["min_pts"])
            labeled = sparse.reset_index(drop=True).copy()
            labeled["cluster"] = labels
            path = out / f"labeled_pings_{regime}_{name}.csv"
            labeled.loc[:, ["x", "y", "unix_timestamp", "cluster"]].to_csv(
                path, index=False)
            report.files[path.name] = str(path)
            panels[f"{name} / {regime}"] = (labeled, list(labels))
    if figures:
        from .figures import save_labeled_pings_figure, save_timeline_figure
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        save_timeline_figure(timelines, fig_dir / "sparsity_timelines.png", horizon)
        save_labeled_pings_figure(ctx["city"], panels, fig_dir / "labeled_pings.png")
        report.files["figures/sparsity_timelines.png"] = str(fig_dir / "sparsity_timelines.png")
        report.files["figures/labeled_pings.png"] = str(fig_dir / "labeled_pings.png")


# ---------------------------------------------------------------------------
# Example 2: movement variance and noise vs Lachesis
# ---------------------------------------------------------------------------

def _example2_context(config):
    cfg = config.data["example2"]
    city = config.build_city(cfg.get("city"))
    park = cfg["park"]
    if park is None:
        parks = sorted(b.id for b in city.buildings.values() if b.building_type == "park")
        if not parks:
            raise InvalidArgumentError("example2 city has no park")
        park = parks[0]
    elif park not in city.buildings:
        raise InvalidArgumentError(f"park {park!r} not in city")
    diary = _custom_diary([[park, cfg["stay_minutes"]]], cfg["start"])
    return {"config": config, "cfg": cfg, "city": city, "park": park, "diary": diary}


def _example2_seed_records(ctx, seed):
    config = ctx["config"]
    cfg = ctx["cfg"]
    stay_minutes = cfg["stay_minutes"]
    lach = cfg["lachesis"]
    records = []
    for name, profile in cfg["agents"].items():
        agent = Agent(name, ctx["city"], ctx["park"], ctx["park"],
                      still_probs={"park": profile["still_prob"]},
                      sigmas={"park": profile["sigma"]})
        rng = np.random.default_rng(
            derive_seed(config.master_seed, "example2", name, "trajectory", seed))
        result = generate_trajectory(agent, ctx["diary"], ctx["city"],
                                     config.motion_config(), rng)
        params = config.nhpp_params(cfg["nhpp"])
        ping_rng = np.random.default_rng(
            derive_seed(config.master_seed, "example2", name, "pings", seed))
        schedule = sample_bursts(params, len(result.trajectory), ping_rng)
        minutes = sample_ping_times(schedule, params.beta_ping, ping_rng)
        sparse = sparsify(result.trajectory, minutes,
                          NoiseParams(ha=profile["ha"]), ping_rng)
        stops = lachesis(sparse, lach["dur_min"], lach["dt_max"], lach["delta_roam"])

        # Coverage is over the observable stay: the fraction of the stay's
        # pings captured by the largest detected stop.
        stay_start = int(result.trajectory["unix_timestamp"].iloc[0])
        stay_end = stay_start + stay_minutes * 60
        in_stay = [
            i for i, t in enumerate(sparse["unix_timestamp"])
            if stay_start <= t < stay_end
        ]
        coverage = 0.0
        if in_stay:
            coverage = max(
                (len(set(stop.indices) & set(in_stay)) / len(in_stay)
                 for stop in stops), default=0.0)
        records.append({
            "seed": seed,
            "agent": name,
            "n_pings": len(sparse),
            "n_stops": len(stops),
            "largest_coverage": round(coverage, 4),
            "single_covering": int(len(stops) == 1
                                   and coverage >= cfg["coverage_threshold"]),
            "fragmented": int(len(stops) > 1),
        })
    return records


def _example2_chunk(config_dict, seeds):
    ctx = _example2_context(ExperimentConfig(data=config_dict))
    out = []
    for seed in seeds:
        out.extend(_example2_seed_records(ctx, seed))
    return out


def _aggregate_example2(per_seed):
    aggregates = {"agents": {}, "significance": {}}
    for name, group in per_seed.groupby("agent", sort=True):
        counts = group["n_stops"].value_counts().sort_index()
        aggregates["agents"][name] = {
            "n_seeds": int(len(group)),
            "fraction_single_covering": float(group["single_covering"].mean()),
            "fraction_fragmented": float(group["fragmented"].mean()),
            "mean_stops": float(group["n_stops"].mean()),
            "stop_count_distribution": {str(k): int(v) for k, v in counts.items()},
        }
    names = sorted(per_seed["agent"].unique())
    if len(names) == 2:
        a = per_seed[per_seed["agent"] == names[0]]["fragmented"]
        b = per_seed[per_seed["agent"] == names[1]]["fragmented"]
        z, p = two_proportion_test(int(a.sum()), len(a), int(b.sum()), len(b))
        aggregates["significance"]["fragmentation"] = {
            "agents": names, "z": z, "p_value": p,
            "rates": [float(a.mean()), float(b.mean())],
        }
    return aggregates


_AGGREGATORS["example2"] = _aggregate_example2


def run_example2(config, out_dir=None, figures=True, jobs=1):
    """Two agents with the same park stay but different variance settings,
    scored by Lachesis stop count and coverage of the stay."""
    ctx = _example2_context(config)
    seeds = list(range(config.seed_count))
    records = _fan_out(_example2_chunk, config.to_dict(), seeds, jobs)
    per_seed = pd.DataFrame(records)
    report = RunReport(
        kind="example2",
        master_seed=config.master_seed,
        config=config.to_dict()["example2"],
        per_seed=per_seed,
        aggregates=_aggregate_example2(per_seed),
        files={},
    )
    if out_dir is not None:
        _emit_example2(ctx, report, Path(out_dir), figures)
        report.save(out_dir)
    return report


def _emit_example2(ctx, report, out, figures):
    out.mkdir(parents=True, exist_ok=True)
    config = ctx["config"]
    cfg = ctx["cfg"]
    lach = cfg["lachesis"]
    panels = {}
    for name, profile in cfg["agents"].items():
        agent = Agent(name, ctx["city"], ctx["park"], ctx["park"],
                      still_probs={"park": profile["still_prob"]},
                      sigmas={"park": profile["sigma"]})
        rng = np.random.default_rng(
            derive_seed(config.master_seed, "example2", name, "trajectory", 0))
        result = generate_trajectory(agent, ctx["diary"], ctx["city"],
                                     config.motion_config(), rng)
        params = config.nhpp_params(cfg["nhpp"])
        ping_rng = np.random.default_rng(
            derive_seed(config.master_seed, "example2", name, "pings", 0))
        schedule = sample_bursts(params, len(result.trajectory), ping_rng)
        minutes = sample_ping_times(schedule, params.beta_ping, ping_rng)
        sparse = sparsify(result.trajectory, minutes,
                          NoiseParams(ha=profile["ha"]), ping_rng)
        stops = lachesis(sparse, lach["dur_min"], lach["dt_max"], lach["delta_roam"])
        labels = np.full(len(sparse), -1, dtype=int)
        for cid, stop in enumerate(stops):
            labels[list(stop.indices)] = cid
        labeled = sparse.reset_index(drop=True).copy()
        labeled["cluster"] = labels
        path = out / f"labeled_pings_{name}.csv"
        labeled.loc[:, ["x", "y", "unix_timestamp", "cluster"]].to_csv(path, index=False)
        report.files[path.name] = str(path)
        panels[name] = (labeled, list(labels))
    if figures:
        from .figures import save_labeled_pings_figure
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        save_labeled_pings_figure(ctx["city"], panels, fig_dir / "lachesis_stops.png")
        report.files["figures/lachesis_stops.png"] = str(fig_dir / "lachesis_stops.png")


# ---------------------------------------------------------------------------
# Population dataset emission
# ---------------------------------------------------------------------------

def resolve_population(config, city):
    """Explicit agent specs from the population section.

    Count-based populations sample each agent's home and workplace from a
    per-agent derived stream, so regenerating any one agent in isolation
    reproduces it exactly.
    """
    pop = config.data["population"]
    if pop.get("agents"):
        specs = [dict(spec) for spec in pop["agents"]]
    else:
        homes = sorted(b.id for b in city.buildings.values() if b.building_type == "home")
        works = sorted(b.id for b in city.buildings.values() if b.building_type == "work")
        if not homes or not works:
            raise InvalidArgumentError("city needs home and work buildings")
        count = int(pop["count"])
        width = max(3, len(str(count)))
        specs = []
        for i in range(count):
            identifier = f"agent-{i + 1:0{width}d}"
            rng = np.random.default_rng(derive_seed(config.master_seed, identifier, "init"))
            specs.append({
                "identifier": identifier,
                "home": homes[rng.integers(len(homes))],
                "workplace": works[rng.integers(len(works))],
            })
    for spec in specs:
        for bid in (spec["home"], spec["workplace"]):
            if bid not in city.buildings:
                raise InvalidArgumentError(f"building {bid!r} not in city")
    return specs


def _generate_agent_files(config, city, spec, out):
    pop = config.data["population"]
    start = pd.Timestamp(pop["start"])
    end = start + pd.Timedelta(days=pop["days"])
    identifier = spec["identifier"]
    agent = Agent(identifier, city, spec["home"], spec["workplace"],
                  still_probs=spec.get("still_probs", {}),
                  sigmas=spec.get("sigmas", {}))

    seeds = {stage: derive_seed(config.master_seed, identifier, stage)
             for stage in ("diary", "trajectory", "pings")}

    destination = generate_destination_diary(
        agent, start, end, config.epr_params(), config.schedule(),
        np.random.default_rng(seeds["diary"]))
    result = generate_trajectory(agent, destination, city, config.motion_config(),
                                 np.random.default_rng(seeds["trajectory"]))
    params = config.nhpp_params()
    rng = np.random.default_rng(seeds["pings"])
    schedule = sample_bursts(params, len(result.trajectory), rng)
    minutes = sample_ping_times(schedule, params.beta_ping, rng)
    sparse = sparsify(result.trajectory, minutes, config.noise_params(), rng)

    agent_dir = out / "agents" / identifier
    agent_dir.mkdir(parents=True, exist_ok=True)
    write_diary(destination, agent_dir / "destination_diary.csv")
    write_diary(result.diary, agent_dir / "diary.csv")
    write_trajectory(result.trajectory, agent_dir / "trajectory.csv")
    write_sparse_trajectory(sparse, agent_dir / "sparse_trajectory.csv")

    files = {}
    for name in ("destination_diary.csv", "diary.csv", "trajectory.csv",
                 "sparse_trajectory.csv"):
        rel = f"agents/{identifier}/{name}"
        files[rel] = sha256_file(out / rel)
    return {"home": spec["home"], "workplace": spec["workplace"],
            "seeds": seeds, "files": files}


def _dataset_chunk(config_dict, out_dir, specs):
    config = ExperimentConfig(data=config_dict)
    city = config.build_city()
    out = Path(out_dir)
    return {spec["identifier"]: _generate_agent_files(config, city, spec, out)
            for spec in specs}


def generate_population_dataset(config, out_dir, jobs=1):
    """Emit per-agent diaries, trajectories and sparse trajectories plus a
    manifest from which the whole dataset can be reproduced byte for byte."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    city = config.build_city()
    city.save(out / "city.json")
    specs = resolve_population(config, city)

    if jobs > 1 and len(specs) > 1:
        chunks = [(config.to_dict(), str(out), specs[i::jobs]) for i in range(jobs)
                  if specs[i::jobs]]
        fragments = {}
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for result in pool.map(_dataset_chunk_star, chunks):
                fragments.update(result)
    else:
        fragments = _dataset_chunk(config.to_dict(), str(out), specs)

    manifest = {
        "format": "gridmob-dataset/1",
        "master_seed": config.master_seed,
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "city_file": {"city.json": sha256_file(out / "city.json")},
        "agents": {ident: fragments[ident] for ident in sorted(fragments)},
    }
    write_json(manifest, out / "manifest.json")
    return manifest


def _dataset_chunk_star(args):
    return _dataset_chunk(*args)


def regenerate_from_manifest(manifest_path, out_dir, jobs=1):
    """Replay a dataset from its manifest; outputs are byte-identical."""
    manifest = read_json(manifest_path)
    config = ExperimentConfig(data=manifest["config"])
    if config.digest() != manifest["config_digest"]:
        raise InvalidArgumentError("manifest config digest mismatch")
    return generate_population_dataset(config, out_dir, jobs=jobs)


# ---------------------------------------------------------------------------
# Seed fan-out
# ---------------------------------------------------------------------------

def _fan_out(chunk_fn, config_dict, seeds, jobs):
    """Run a seed-chunk worker serially or across processes; the record
    stream is reassembled in seed order either way."""
    if jobs <= 1 or len(seeds) <= 1:
        return chunk_fn(config_dict, seeds)
    chunks = [seeds[i::jobs] for i in range(jobs) if seeds[i::jobs]]
    results = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(_chunk_star, [(chunk_fn, config_dict, c) for c in chunks]):
            results.extend(part)
    results.sort(key=lambda r: r["seed"])
    return results


def _chunk_star(args):
    fn, config_dict, seeds = args
    return fn(config_dict, seeds)
