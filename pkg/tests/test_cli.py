import json

import pandas as pd
from click.testing import CliRunner

from gridmob.cli import main
from gridmob.io import read_metrics


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestCityBuild:
    def test_writes_json_and_figure(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "city.json"
        invoke(runner, ["city", "build", "--out", str(out)])
        data = json.loads(out.read_text())
        assert data["dimensions"] == [22, 22]
        assert any(b["building_type"] == "park" for b in data["buildings"])
        assert out.with_suffix(".png").exists()

    def test_no_figures(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "city.json"
        invoke(runner, ["city", "build", "--out", str(out), "--no-figures",
                        "--width", "18", "--height", "18", "--park-size", "2"])
        assert out.exists()
        assert not out.with_suffix(".png").exists()


class TestPipeline:
    def test_simulate_sparsify_detect(self, tmp_path):
        runner = CliRunner()
        city = tmp_path / "city.json"
        invoke(runner, ["city", "build", "--out", str(city), "--no-figures"])
        sim = tmp_path / "sim"
        invoke(runner, ["simulate", "--city", str(city), "--start", "2024-01-01",
                        "--end", "2024-01-02", "--seed", "11", "--out", str(sim),
                        "--no-figures"])
        diary = pd.read_csv(sim / "diary.csv")
        assert list(diary.columns) == ["unix_timestamp", "local_timestamp",
                                       "duration", "location"]
        assert diary["duration"].sum() == 24 * 60
        trajectory = pd.read_csv(sim / "trajectory.csv")
        assert list(trajectory.columns) == ["unix_timestamp", "local_timestamp",
                                            "x", "y", "identifier"]
        assert len(trajectory) == 24 * 60

        sparse = tmp_path / "sparse.csv"
        invoke(runner, ["sparsify", "--trajectory", str(sim / "trajectory.csv"),
                        "--beta-start", "120", "--beta-durations", "40",
                        "--beta-ping", "4", "--seed", "3", "--out", str(sparse),
                        "--bursts-out", str(tmp_path / "bursts.csv")])
        pings = pd.read_csv(sparse)
        assert list(pings.columns) == ["x", "y", "local_timestamp",
                                       "unix_timestamp", "identifier", "ha"]
        assert len(pings) > 0
        assert (tmp_path / "bursts.csv").exists()

        labels_out = tmp_path / "labels.csv"
        invoke(runner, ["detect", "--pings", str(sparse), "--algorithm", "dbscan",
                        "--dist-thresh", "1.5", "--time-thresh", "60",
                        "--min-pts", "2", "--diary", str(sim / "diary.csv"),
                        "--out", str(labels_out)])
        labels = pd.read_csv(labels_out)
        assert "cluster" in labels.columns and len(labels) == len(pings)
        metrics = read_metrics(tmp_path / "labels_metrics.txt")
        assert "n_detected" in metrics and "exact_recovery" in metrics

        stops_out = tmp_path / "stops.csv"
        invoke(runner, ["detect", "--pings", str(sparse), "--algorithm", "lachesis",
                        "--dur-min", "15", "--dt-max", "30", "--delta-roam", "3",
                        "--out", str(stops_out)])
        stops = pd.read_csv(stops_out)
        assert list(stops.columns) == ["start", "end", "duration_minutes",
                                       "centroid_x", "centroid_y", "n_pings"]

    def test_simulate_with_custom_diary(self, tmp_path):
        runner = CliRunner()
        city = tmp_path / "city.json"
        invoke(runner, ["city", "build", "--out", str(city), "--no-figures"])
        data = json.loads(city.read_text())
        home = next(b["id"] for b in data["buildings"] if b["building_type"] == "home")
        diary_path = tmp_path / "plan.csv"
        pd.DataFrame({
            "unix_timestamp": [1704067200],
            "local_timestamp": ["2024-01-01 00:00:00"],
            "duration": [90],
            "location": [home],
        }).to_csv(diary_path, index=False)
        sim = tmp_path / "sim"
        invoke(runner, ["simulate", "--city", str(city), "--diary", str(diary_path),
                        "--home", home, "--out", str(sim), "--no-figures"])
        trajectory = pd.read_csv(sim / "trajectory.csv")
        assert len(trajectory) == 90


class TestExperimentsCommands:
    def test_example1_and_report(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "ex1"
        invoke(runner, ["example1", "--seeds", "20", "--out", str(out),
                        "--no-figures"])
        report = json.loads((out / "report.json").read_text())
        assert report["kind"] == "example1"
        assert set(report["aggregates"]["significance"]) == {"coarse", "fine"}

    def test_example2(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "ex2"
        invoke(runner, ["example2", "--seeds", "15", "--out", str(out),
                        "--no-figures"])
        assert (out / "per_seed_metrics.csv").exists()

    def test_dataset_and_replay(self, tmp_path):
        runner = CliRunner()
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"population": {"count": 1, "days": 1}}))
        out = tmp_path / "ds"
        invoke(runner, ["dataset", "--config", str(config), "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["agents"]) == 1
        replay = tmp_path / "ds2"
        invoke(runner, ["dataset", "--manifest", str(out / "manifest.json"),
                        "--out", str(replay)])
        assert (replay / "manifest.json").read_bytes() == \
            (out / "manifest.json").read_bytes()


class TestErrors:
    def test_machine_readable_error(self, tmp_path):
        runner = CliRunner()
        city = tmp_path / "city.json"
        invoke(runner, ["city", "build", "--out", str(city), "--no-figures"])
        result = runner.invoke(main, ["simulate", "--city", str(city),
                                      "--home", "missing-id",
                                      "--out", str(tmp_path / "x")])
        assert result.exit_code == 1
        record = json.loads(result.output.strip().splitlines()[-1])
        assert record["error"] == "InvalidArgumentError"

    def test_unknown_format_rejected(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["city", "build", "--out",
                                      str(tmp_path / "c.json"), "--format", "tsv"])
        assert result.exit_code != 0
