"""Stop detection over sparse pings, plus ground-truth comparison metrics.

Two reference algorithms: a temporal variant of DBScan (neighbors must be
close in both space and time) and the sequential Lachesis scan (grow a
candidate while its diameter and internal gaps stay bounded, keep it if it
lasts long enough). Both work in block units and minutes.
"""

from dataclasses import dataclass, field

import numpy as np

NOISE = -1


def _ping_arrays(pings, require_sorted=False):
    x = np.asarray(pings["x"], dtype=float)
    y = np.asarray(pings["y"], dtype=float)
    t = np.asarray(pings["unix_timestamp"], dtype=np.int64)
    if require_sorted and (np.diff(t) < 0).any():
        raise ValueError("pings must be sorted by time")
    return x, y, t


def temporal_dbscan(pings, dist_thresh, time_thresh, min_pts):
    """Label pings with cluster indices (NOISE = -1).

    Two pings are neighbors when their Euclidean distance is at most
    dist_thresh blocks and their time gap at most time_thresh minutes.
    Core points have at least min_pts neighbors, the point itself excluded.
    Clusters are connected components of core points; border points join
    the earliest adjacent core cluster.
    """
    n = len(pings)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    x, y, t = _ping_arrays(pings)

    close_space = (x[:, None] - x[None, :]) ** 2 + (y[:, None] - y[None, :]) ** 2 \
        <= dist_thresh ** 2
    close_time = np.abs(t[:, None] - t[None, :]) <= time_thresh * 60
    adjacency = close_space & close_time
    np.fill_diagonal(adjacency, False)

    core = adjacency.sum(axis=1) >= min_pts
    cluster_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        stack = [seed]
        labels[seed] = cluster_id
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adjacency[i] & core):
                if labels[j] == NOISE:
                    labels[j] = cluster_id
                    stack.append(j)
        cluster_id += 1

    # Border points: non-core, adjacent to a core; earliest cluster wins.
    for i in range(n):
        if core[i] or labels[i] != NOISE:
            continue
        neighbor_clusters = labels[adjacency[i] & core]
        if neighbor_clusters.size:
            labels[i] = neighbor_clusters.min()
    return labels


@dataclass(frozen=True)
class Stop:
    """A detected stay: time extent, spatial centroid and member pings."""

    start: int
    end: int
    centroid: tuple
    indices: tuple

    @property
    def duration_minutes(self):
        return (self.end - self.start) / 60.0


def lachesis(pings, dur_min, dt_max, delta_roam):
    """Sequential stop extraction.

    Grow the candidate [i..j] while the next ping is within dt_max minutes
    of the last and keeps the diameter at most delta_roam; emit the
    candidate as a stop when its span reaches dur_min minutes, otherwise
    discard it, and resume at the breaking ping.
    """
    n = len(pings)
    if n == 0:
        return []
    x, y, t = _ping_arrays(pings, require_sorted=True)
    stops = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and (t[j + 1] - t[j]) <= dt_max * 60:
            dx = x[i:j + 2] - x[j + 1]
            dy = y[i:j + 2] - y[j + 1]
            if np.max(dx * dx + dy * dy) > delta_roam ** 2:
                break
            j += 1
        if (t[j] - t[i]) >= dur_min * 60:
            members = range(i, j + 1)
            stops.append(Stop(
                start=int(t[i]),
                end=int(t[j]),
                centroid=(float(x[i:j + 1].mean()), float(y[i:j + 1].mean())),
                indices=tuple(members),
            ))
        i = j + 1
    return stops


def stops_from_labels(pings, labels):
    """Convert a cluster labeling into Stop records ordered by start time."""
    x, y, t = _ping_arrays(pings)
    stops = []
    for cid in sorted(set(labels) - {NOISE}):
        idx = np.flatnonzero(labels == cid)
        stops.append(Stop(
            start=int(t[idx].min()),
            end=int(t[idx].max()),
            centroid=(float(x[idx].mean()), float(y[idx].mean())),
            indices=tuple(int(i) for i in idx),
        ))
    stops.sort(key=lambda s: (s.start, s.end))
    return stops


@dataclass
class StopMetrics:
    """Detection quality against the realized diary's true stops."""

    n_true: int
    n_detected: int
    statuses: list
    overlap_minutes: float
    matched_detection: list = field(default_factory=list)

    @property
    def exact_recovery(self):
        return (self.n_detected == self.n_true
                and all(s == "matched" for s in self.statuses))

    def to_flat(self):
        record = {
            "n_true": self.n_true,
            "n_detected": self.n_detected,
            "overlap_minutes": round(self.overlap_minutes, 3),
            "exact_recovery": int(self.exact_recovery),
        }
        for i, status in enumerate(self.statuses):
            record[f"stop_{i}_status"] = status
        return record


def evaluate_against_diary(detections, realized_diary, matching_tolerance=0.0):
    """Score detected stops against the realized diary.

    True stops are the diary rows with a location. Each true stop is
    classified: missed (no detection overlaps it, within the tolerance in
    minutes), split (two or more detections overlap it), merged (its only
    detection also overlaps another true stop), or matched. The primary
    match per true stop maximizes temporal overlap, earlier start winning
    ties. overlap_minutes totals the true-stop minutes covered by any
    detection.
    """
    stop_rows = realized_diary[realized_diary["location"].notna()]
    true_intervals = [
        (int(row.unix_timestamp), int(row.unix_timestamp) + int(row.duration) * 60)
        for row in stop_rows.itertuples()
    ]
    det_intervals = [(stop.start, stop.end) for stop in detections]
    pad = matching_tolerance * 60

    candidates = []  # per true stop, list of detection indices
    for s, e in true_intervals:
        hits = []
        for d, (a, b) in enumerate(det_intervals):
            length = min(b, e + pad) - max(a, s - pad)
            if length > 0 or (a == b and s - pad <= a <= e + pad):
                hits.append(d)
        candidates.append(hits)

    spanned = {}  # detection index -> number of true stops it touches
    for hits in candidates:
        for d in hits:
            spanned[d] = spanned.get(d, 0) + 1

    statuses = []
    primary = []
    for (s, e), hits in zip(true_intervals, candidates):
        if not hits:
            statuses.append("missed")
            primary.append(None)
            continue
        best = max(hits, key=lambda d: (min(det_intervals[d][1], e)
                                        - max(det_intervals[d][0], s),
                                        -det_intervals[d][0]))
        primary.append(best)
        if len(hits) >= 2:
            statuses.append("split")
        elif spanned[hits[0]] >= 2:
            statuses.append("merged")
        else:
            statuses.append("matched")

    overlap = 0.0
    for (s, e), hits in zip(true_intervals, candidates):
        covered = []
        for d in hits:
            a, b = det_intervals[d]
            lo, hi = max(a, s), min(b, e)
            if hi > lo:
                covered.append((lo, hi))
        covered.sort()
        last_end = None
        for lo, hi in covered:
            if last_end is None or lo > last_end:
                overlap += hi - lo
                last_end = hi
            elif hi > last_end:
                overlap += hi - last_end
                last_end = hi

    return StopMetrics(
        n_true=len(true_intervals),
        n_detected=len(detections),
        statuses=statuses,
        overlap_minutes=overlap / 60.0,
        matched_detection=primary,
    )
