"""Scoring against simulator truth: count accuracy and interval RMSE."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CountTrial:
    """One clustering outcome: did the person count come out right?"""

    eval_time_s: float
    seed: int
    estimated_count: int
    true_count: int
    method: str

    def __post_init__(self):
        if self.estimated_count < 0 or self.true_count < 0:
            raise ValueError("counts must be >= 0")

    @property
    def correct(self) -> bool:
        return self.estimated_count == self.true_count


@dataclass(frozen=True)
class IntervalSeries:
    """Respiratory intervals of one subject over time."""

    subject_id: int
    times_s: np.ndarray
    intervals_s: np.ndarray
    source: str = "radar"

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float)
        v = np.asarray(self.intervals_s, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and intervals must be equal-length 1-D")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "intervals_s", v)


def count_accuracy(trials: list) -> dict:
    """Per-method accuracy: {method: {"accuracy", "n_trials", "n_correct"}}."""
    if not trials:
        raise ValueError("no trials to score")
    out = {}
    for trial in trials:
        slot = out.setdefault(trial.method, {"n_trials": 0, "n_correct": 0})
        slot["n_trials"] += 1
        slot["n_correct"] += int(trial.correct)
    for slot in out.values():
        slot["accuracy"] = slot["n_correct"] / slot["n_trials"]
    return out


def match_people(estimates: list, truth_positions: list,
                 max_radius_m: float = float("inf")) -> tuple:
    """Greedy nearest-neighbor assignment of estimates to truth positions.

    Returns (matches, unmatched_estimates): matches is a list of
    (estimate_index, truth_index) pairs, closest pairs first, each side used
    at most once; estimates farther than ``max_radius_m`` from every free
    truth stay unmatched.
    """
    pairs = []
    for i, est in enumerate(estimates):
        for j, (tx, ty) in enumerate(truth_positions):
            dist = math.hypot(est.x_m - tx, est.y_m - ty)
            if dist <= max_radius_m:
                pairs.append((dist, i, j))
    pairs.sort()
    used_est = set()
    used_truth = set()
    matches = []
    for _, i, j in pairs:
        if i in used_est or j in used_truth:
            continue
        matches.append((i, j))
        used_est.add(i)
        used_truth.add(j)
    unmatched = [i for i in range(len(estimates)) if i not in used_est]
    return matches, unmatched


def interval_rmse(radar: IntervalSeries, truth: IntervalSeries,
                  t_min_s: float = None) -> float:
    """RMS difference in milliseconds, truth linearly interpolated to radar
    timestamps; samples before ``t_min_s`` (warm-up) are excluded."""
    t = radar.times_s
    keep = np.ones(len(t), dtype=bool)
    if t_min_s is not None:
        keep &= t >= t_min_s
    keep &= (t >= truth.times_s[0]) & (t <= truth.times_s[-1])
    if not keep.any():
        raise ValueError("no overlapping samples between radar and truth series")
    truth_at = np.interp(t[keep], truth.times_s, truth.intervals_s)
    diff_ms = 1000.0 * (radar.intervals_s[keep] - truth_at)
    return float(np.sqrt(np.mean(diff_ms**2)))


def write_truth_csv(path, rows):
    """Write truth rows (t_s, subject_id, interval_s)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "subject_id", "interval_s"])
        for t_s, subject_id, interval_s in rows:
            writer.writerow([f"{t_s:.1f}", subject_id, f"{interval_s:.6f}"])


def read_truth_csv(path) -> dict:
    """Load a truth CSV into {subject_id: IntervalSeries}."""
    per_subject = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"t_s", "subject_id", "interval_s"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: truth CSV must have columns {sorted(required)}")
        for row in reader:
            sid = int(row["subject_id"])
            per_subject.setdefault(sid, []).append(
                (float(row["t_s"]), float(row["interval_s"]))
            )
    out = {}
    for sid, samples in per_subject.items():
        samples.sort()
        out[sid] = IntervalSeries(
            subject_id=sid,
            times_s=np.array([s[0] for s in samples]),
            intervals_s=np.array([s[1] for s in samples]),
            source="truth",
        )
    return out
