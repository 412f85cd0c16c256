"""Command-line interface.

Verbs: ``city build``, ``simulate``, ``sparsify``, ``detect``, ``example1``,
``example2``, ``dataset``. All take a JSON config (defaults apply without
one) plus flag overrides; report paths write figures next to the CSV
outputs unless --no-figures is given. Errors exit nonzero with a one-line
JSON record naming the error class on stderr.
"""

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from .agents import Agent
from .city import GardenSpec, City, generate_garden_layout
from .diary import generate_destination_diary
from .errors import GridMobError
from .experiments import (
    ExperimentConfig,
    generate_population_dataset,
    regenerate_from_manifest,
    run_example1,
    run_example2,
)
from .io import (
    read_diary,
    read_sparse_trajectory,
    read_trajectory,
    write_diary,
    write_metrics,
    write_sparse_trajectory,
    write_trajectory,
)
from .pings import NHPPParams, NoiseParams, sample_bursts, sample_ping_times, sparsify
from .stops import evaluate_against_diary, lachesis, stops_from_labels, temporal_dbscan
from .trajectory import generate_trajectory


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GridMobError as exc:
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
                       err=True)
            sys.exit(1)
    return wrapper


def config_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="JSON config file.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Master seed override.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["csv"]), default="csv",
                      show_default=True, help="Delimited output format.")(fn)
    return fn


def load_config(config_path, seed=None, seeds=None):
    config = (ExperimentConfig.from_file(config_path) if config_path
              else ExperimentConfig.from_dict())
    if seed is not None:
        config.data["master_seed"] = seed
    if seeds is not None:
        config.data["seed_count"] = seeds
    return config


@click.group()
@click.version_option(package_name="gridmob")
def main():
    """Grid-city mobility simulator and stop-detection sandbox."""


@main.group()
def city():
    """City construction commands."""


@city.command("build")
@click.option("--width", type=int, default=22, show_default=True)
@click.option("--height", type=int, default=22, show_default=True)
@click.option("--park-size", type=int, default=4, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="City JSON path.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@config_options
@handle_errors
def city_build(width, height, park_size, out, figures, config_path, seed, fmt):
    """Build the ring layout and write it as structured text."""
    if config_path:
        built = load_config(config_path, seed).build_city()
    else:
        built = generate_garden_layout(GardenSpec(width=width, height=height,
                                                  park_size=park_size))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    built.save(out)
    if figures:
        from .figures import save_city_figure
        save_city_figure(built, out.with_suffix(".png"))
    click.echo(f"wrote {out} ({len(built.buildings)} buildings)")


@main.command()
@click.option("--city", "city_path", type=click.Path(exists=True), default=None,
              help="City JSON; defaults to the built-in ring layout.")
@click.option("--identifier", default="agent-001", show_default=True)
@click.option("--home", default=None, help="Home building id (default: first home).")
@click.option("--workplace", default=None, help="Workplace id (default: first work).")
@click.option("--start", default="2024-01-01", show_default=True)
@click.option("--end", default="2024-01-08", show_default=True)
@click.option("--diary", "diary_path", type=click.Path(exists=True), default=None,
              help="Custom destination diary CSV (skips the diary generator).")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@config_options
@handle_errors
def simulate(city_path, identifier, home, workplace, start, end, diary_path, out,
             figures, config_path, seed, fmt):
    """Generate a destination diary, ground-truth trajectory and realized diary."""
    config = load_config(config_path, seed)
    built = City.load(city_path) if city_path else config.build_city()
    if home is None:
        home = sorted(b.id for b in built.buildings.values()
                      if b.building_type == "home")[0]
    if workplace is None:
        workplace = sorted(b.id for b in built.buildings.values()
                           if b.building_type == "work")[0]
    agent = Agent(identifier, built, home, workplace)
    master = config.master_seed

    if diary_path:
        destination = read_diary(diary_path)
    else:
        destination = generate_destination_diary(
            agent, start, end, config.epr_params(), config.schedule(),
            np.random.default_rng(master))
    result = generate_trajectory(agent, destination, built, config.motion_config(),
                                 np.random.default_rng(master + 1))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_diary(destination, out / "destination_diary.csv")
    write_diary(result.diary, out / "diary.csv")
    write_trajectory(result.trajectory, out / "trajectory.csv")
    if figures:
        from .figures import save_trajectory_figure
        save_trajectory_figure(built, result.trajectory, out / "trajectory.png")
    click.echo(f"wrote {out}/destination_diary.csv, diary.csv, trajectory.csv")


@main.command()
@click.option("--trajectory", "trajectory_path", type=click.Path(exists=True),
              required=True)
@click.option("--beta-start", type=float, default=300, show_default=True)
@click.option("--beta-durations", type=float, default=60, show_default=True)
@click.option("--beta-ping", type=float, default=10, show_default=True)
@click.option("--ha", type=float, default=0.75, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Sparse CSV path.")
@click.option("--bursts-out", type=click.Path(), default=None,
              help="Also write the latent burst schedule CSV.")
@config_options
@handle_errors
def sparsify_cmd(trajectory_path, beta_start, beta_durations, beta_ping, ha, out,
                 bursts_out, config_path, seed, fmt):
    """Sparsify a trajectory into noisy pings at self-exciting times."""
    trajectory = read_trajectory(trajectory_path)
    rng = np.random.default_rng(seed if seed is not None else 0)
    params = NHPPParams(beta_start, beta_durations, beta_ping)
    schedule = sample_bursts(params, len(trajectory), rng)
    minutes = sample_ping_times(schedule, params.beta_ping, rng)
    sparse = sparsify(trajectory, minutes, NoiseParams(ha=ha), rng)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sparse_trajectory(sparse, out)
    if bursts_out:
        start_unix = int(trajectory["unix_timestamp"].iloc[0])
        schedule.to_frame(start_unix).to_csv(bursts_out, index=False)
    click.echo(f"wrote {out} ({len(sparse)} pings)")


main.add_command(sparsify_cmd, name="sparsify")


@main.command()
@click.option("--pings", "pings_path", type=click.Path(exists=True), required=True)
@click.option("--algorithm", type=click.Choice(["dbscan", "lachesis"]),
              default="dbscan", show_default=True)
@click.option("--dist-thresh", type=float, default=2.25, show_default=True)
@click.option("--time-thresh", type=float, default=120, show_default=True)
@click.option("--min-pts", type=int, default=2, show_default=True)
@click.option("--dur-min", type=float, default=15, show_default=True)
@click.option("--dt-max", type=float, default=30, show_default=True)
@click.option("--delta-roam", type=float, default=3, show_default=True)
@click.option("--diary", "diary_path", type=click.Path(exists=True), default=None,
              help="Realized diary for ground-truth metrics.")
@click.option("--tolerance", type=float, default=0.0, show_default=True,
              help="Temporal matching tolerance, minutes.")
@click.option("--out", type=click.Path(), required=True,
              help="Labels/stops CSV path.")
@config_options
@handle_errors
def detect(pings_path, algorithm, dist_thresh, time_thresh, min_pts, dur_min, dt_max,
           delta_roam, diary_path, tolerance, out, config_path, seed, fmt):
    """Run a stop-detection algorithm over a sparse trajectory."""
    pings = read_sparse_trajectory(pings_path).reset_index(drop=True)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if algorithm == "dbscan":
        labels = temporal_dbscan(pings, dist_thresh, time_thresh, min_pts)
        stops = stops_from_labels(pings, labels)
        table = pings.loc[:, ["x", "y", "unix_timestamp"]].copy()
        table["cluster"] = labels
        table.to_csv(out, index=False)
    else:
        stops = lachesis(pings, dur_min, dt_max, delta_roam)
        pd.DataFrame([
            {"start": s.start, "end": s.end, "duration_minutes": s.duration_minutes,
             "centroid_x": s.centroid[0], "centroid_y": s.centroid[1],
             "n_pings": len(s.indices)}
            for s in stops
        ]).to_csv(out, index=False)
    click.echo(f"wrote {out} ({len(stops)} stops)")
    if diary_path:
        metrics = evaluate_against_diary(stops, read_diary(diary_path),
                                         matching_tolerance=tolerance)
        metrics_path = out.with_name(out.stem + "_metrics.txt")
        write_metrics(metrics.to_flat(), metrics_path)
        click.echo(f"wrote {metrics_path}")


def _example_command(name, runner):
    @main.command(name=name)
    @click.option("--out", type=click.Path(), required=True, help="Report directory.")
    @click.option("--seeds", type=int, default=None, help="Monte-Carlo seed count.")
    @click.option("--jobs", type=int, default=1, show_default=True)
    @click.option("--figures/--no-figures", default=True, show_default=True)
    @config_options
    @handle_errors
    def command(out, seeds, jobs, figures, config_path, seed, fmt):
        config = load_config(config_path, seed, seeds)
        report = runner(config, out_dir=out, figures=figures, jobs=jobs)
        for cell, stats in sorted(report.aggregates.get("cells", {}).items()):
            click.echo(f"{cell}: recovery_rate={stats['recovery_rate']:.3f}")
        for agent, stats in sorted(report.aggregates.get("agents", {}).items()):
            click.echo(
                f"{agent}: single_covering={stats['fraction_single_covering']:.3f} "
                f"fragmented={stats['fraction_fragmented']:.3f}")
        for key, sig in sorted(report.aggregates["significance"].items()):
            click.echo(f"{key}: p_value={sig['p_value']:.3g}")
        click.echo(f"wrote {out}/report.json")

    command.__doc__ = runner.__doc__
    return command


example1 = _example_command("example1", run_example1)
example2 = _example_command("example2", run_example2)


@main.command()
@click.option("--out", type=click.Path(), required=True, help="Dataset directory.")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              default=None, help="Replay a previously written manifest.")
@config_options
@handle_errors
def dataset(out, jobs, manifest_path, config_path, seed, fmt):
    """Emit a replayable population dataset (diaries, trajectories, pings)."""
    if manifest_path:
        manifest = regenerate_from_manifest(manifest_path, out, jobs=jobs)
    else:
        config = load_config(config_path, seed)
        manifest = generate_population_dataset(config, out, jobs=jobs)
    click.echo(f"wrote {out}/manifest.json ({len(manifest['agents'])} agents)")


if __name__ == "__main__":
    main()
