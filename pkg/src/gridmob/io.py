"""Readers and writers for the delimited interchange files.

Column orders are part of the interface: diaries are
(unix_timestamp, local_timestamp, duration, location), trajectories
(unix_timestamp, local_timestamp, x, y, identifier), sparse trajectories
(x, y, local_timestamp, unix_timestamp, identifier, ha). Travel rows keep
an empty location. Timestamps are unix seconds plus an ISO local time.
"""

import hashlib
import json

import pandas as pd

from .errors import InvalidArgumentError

TIME_FORMAT = "%Y-%m-%d %H:%M:%S"

DIARY_COLUMNS = ["unix_timestamp", "local_timestamp", "duration", "location"]
TRAJECTORY_COLUMNS = ["unix_timestamp", "local_timestamp", "x", "y", "identifier"]
SPARSE_COLUMNS = ["x", "y", "local_timestamp", "unix_timestamp", "identifier", "ha"]


def _write_csv(frame, path, columns):
    missing = set(columns) - set(frame.columns)
    if missing:
        raise InvalidArgumentError(f"frame missing columns {sorted(missing)}")
    out = frame.loc[:, columns].copy()
    out["local_timestamp"] = pd.to_datetime(out["local_timestamp"]).dt.strftime(TIME_FORMAT)
    out.to_csv(path, index=False)


def write_diary(diary, path):
    _write_csv(diary, path, DIARY_COLUMNS)


def write_trajectory(trajectory, path):
    _write_csv(trajectory, path, TRAJECTORY_COLUMNS)


def write_sparse_trajectory(sparse, path):
    _write_csv(sparse, path, SPARSE_COLUMNS)


def read_diary(path):
    diary = pd.read_csv(path, parse_dates=["local_timestamp"])
    # Empty location cells are travel rows.
    diary["location"] = diary["location"].where(diary["location"].notna(), None)
    return diary.loc[:, DIARY_COLUMNS]


def read_trajectory(path):
    return pd.read_csv(path, parse_dates=["local_timestamp"]).loc[:, TRAJECTORY_COLUMNS]


def read_sparse_trajectory(path):
    sparse = pd.read_csv(path, parse_dates=["local_timestamp"]).loc[:, SPARSE_COLUMNS]
    return sparse.set_index("unix_timestamp", drop=False)


def write_metrics(record, path):
    """Flat key=value text record, one pair per line."""
    with open(path, "w") as fh:
        for key, value in record.items():
            fh.write(f"{key}={value}\n")


def read_metrics(path):
    record = {}
    with open(path) as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            record[key] = value
    return record


def write_json(data, path):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
