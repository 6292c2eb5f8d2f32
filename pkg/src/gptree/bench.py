"""Benchmark run loop, performance indicators and CSV output.

A run predicts each incoming point before the tree sees its target value,
then updates the tree, timing both calls.  Indicators are computed from the
per-point records after discarding a burn-in prefix.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gptree.tree import GPTree, TreeConfig

DEFAULT_BURN_IN = 1000
DEFAULT_OUTLIER_BOUND = 1e5
DELTA_WINDOW = 2000
DELTA_THRESHOLD = 0.05
BATCH_SIZE = 2000
Y_FLOOR = 1e-12

SUMMARY_HEADER = ["nbar", "b", "theta", "kernel", "split_dir",
                  "rmse", "delta005", "uncert", "t_upd", "t_pred"]
METRIC_COLUMNS = SUMMARY_HEADER[5:]
ERROR_MARKER = "error"


@dataclass
class RunRecord:
    index: int
    x: np.ndarray
    y_true: float
    mu_pred: float
    sigma_raw: float
    sigma_calibrated: float
    t_update: float
    t_pred: float


@dataclass
class IndicatorSummary:
    rmse: float
    delta_005: float
    mean_uncertainty: float
    mean_t_update: float
    mean_t_pred: float
    n_outliers_removed: int
    coverage_per_batch: List[float] = field(default_factory=list)
    n_eligible: int = 0
    delta_partial: bool = False


@dataclass
class BatchFractions:
    """Per-batch fractions; the last batch may be shorter than the rest."""

    fractions: np.ndarray
    counts: np.ndarray
    batch_size: int

    @property
    def partial(self) -> bool:
        return bool(len(self.counts)) and int(self.counts[-1]) < self.batch_size

    def __len__(self):
        return len(self.fractions)

    def __getitem__(self, i):
        return self.fractions[i]

    def __iter__(self):
        return iter(self.fractions)


def relative_errors(mu, y) -> np.ndarray:
    mu, y = np.asarray(mu, dtype=float), np.asarray(y, dtype=float)
    return np.abs(mu - y) / np.maximum(np.abs(y), Y_FLOOR)


def _columns(records: Sequence[RunRecord]):
    y = np.array([r.y_true for r in records], dtype=float)
    mu = np.array([r.mu_pred for r in records], dtype=float)
    return y, mu


def _batched(flags: np.ndarray, batch_size: int) -> BatchFractions:
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    starts = range(0, len(flags), batch_size)
    fr = np.array([flags[s:s + batch_size].mean() for s in starts], dtype=float)
    counts = np.array([len(flags[s:s + batch_size]) for s in starts], dtype=int)
    return BatchFractions(fr, counts, batch_size)


def coverage_batches(records: Sequence[RunRecord], batch_size: int = BATCH_SIZE,
                     use_calibrated: bool = True) -> BatchFractions:
    """Fraction of each batch with ``|mu - y| <= sigma``."""
    y, mu = _columns(records)
    attr = "sigma_calibrated" if use_calibrated else "sigma_raw"
    sigma = np.array([getattr(r, attr) for r in records], dtype=float)
    return _batched(np.abs(mu - y) <= sigma, batch_size)


def accuracy_fraction_batches(records: Sequence[RunRecord], threshold: float,
                              batch_size: int = BATCH_SIZE) -> BatchFractions:
    """Fraction of each batch with relative error below ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    y, mu = _columns(records)
    return _batched(relative_errors(mu, y) < threshold, batch_size)


def compute_indicators(records: Sequence[RunRecord], burn_in: int = DEFAULT_BURN_IN,
                       outlier_bound: float = DEFAULT_OUTLIER_BOUND) -> IndicatorSummary:
    """Indicators over the records after the first ``burn_in``.

    Predictions with ``|mu| > outlier_bound`` (or non-finite) are dropped
    from RMSE and the delta fraction and counted.  The delta fraction uses
    the last 2000 kept records, or all of them with ``delta_partial`` set.
    Empty input gives NaN indicators.
    """
    eligible = list(records[burn_in:])
    coverage = list(coverage_batches(records).fractions)
    if not eligible:
        nan = float("nan")
        return IndicatorSummary(nan, nan, nan, nan, nan, 0, coverage, 0, True)
    y, mu = _columns(eligible)
    keep = np.isfinite(mu) & (np.abs(mu) <= outlier_bound)
    n_out = int(np.count_nonzero(~keep))
    err = mu[keep] - y[keep]
    rmse = float(np.sqrt(np.mean(err * err))) if err.size else float("nan")
    tail = relative_errors(mu[keep], y[keep])[-DELTA_WINDOW:]
    delta = float(np.mean(tail < DELTA_THRESHOLD)) if tail.size else float("nan")
    sig = np.array([r.sigma_raw for r in eligible], dtype=float)[keep]
    return IndicatorSummary(
        rmse=rmse,
        delta_005=delta,
        mean_uncertainty=float(np.mean(sig)) if sig.size else float("nan"),
        mean_t_update=float(np.mean([r.t_update for r in eligible])),
        mean_t_pred=float(np.mean([r.t_pred for r in eligible])),
        n_outliers_removed=n_out,
        coverage_per_batch=coverage,
        n_eligible=len(eligible),
        delta_partial=tail.size < DELTA_WINDOW,
    )


def run(config: TreeConfig, stream, target, n_points: int, burn_in: int = DEFAULT_BURN_IN,
        outlier_bound: float = DEFAULT_OUTLIER_BOUND,
        log_path=None) -> Tuple[List[RunRecord], IndicatorSummary]:
    """Predict-then-update over ``n_points`` stream points.

    Only ``joint_prediction`` and ``update`` are timed.  If ``log_path`` is
    given the records are written there, also when the run aborts.
    """
    tree = GPTree(config)
    records: List[RunRecord] = []
    clock = time.perf_counter
    try:
        for i in range(n_points):
            x = stream.next_point()
            if x is None:
                break
            t0 = clock()
            pred = tree.joint_prediction(x)
            t_pred = clock() - t0
            y, y_var = target(x)
            t0 = clock()
            tree.update(x, y, y_var)
            t_upd = clock() - t0
            records.append(RunRecord(i, np.array(x, dtype=float), float(y), pred.mean,
                                     pred.sigma, pred.sigma_calibrated, t_upd, t_pred))
    finally:
        if log_path is not None:
            write_records_csv(records, log_path)
    return records, compute_indicators(records, burn_in, outlier_bound)


# -- CSV ---------------------------------------------------------------------

def _fmt(v) -> str:
    return f"{float(v):.17g}"


def write_records_csv(records: Sequence[RunRecord], path) -> None:
    d = len(records[0].x) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i"] + [f"x{j + 1}" for j in range(d)]
                   + ["y", "mu", "sigma_raw", "sigma_cal", "t_upd", "t_pred"])
        for r in records:
            w.writerow([r.index] + [_fmt(v) for v in r.x]
                       + [_fmt(v) for v in (r.y_true, r.mu_pred, r.sigma_raw,
                                            r.sigma_calibrated, r.t_update, r.t_pred)])


def read_records_csv(path) -> List[RunRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    d = len(rows[0]) - 7
    out = []
    for row in rows[1:]:
        v = [float(s) for s in row[1:]]
        out.append(RunRecord(int(row[0]), np.array(v[:d]), *v[d:]))
    return out


def summary_row(config: TreeConfig, summary: Optional[IndicatorSummary]) -> List[str]:
    """One summary CSV row; ``summary=None`` marks a failed run."""
    theta = "grad.split" if config.gradual_split else _fmt(config.theta)
    head = [str(config.nbar), str(config.buffer_length), theta,
            config.kernel, config.split_direction_criterion]
    if summary is None:
        return head + [ERROR_MARKER] * len(METRIC_COLUMNS)
    return head + [_fmt(v) for v in (summary.rmse, summary.delta_005, summary.mean_uncertainty,
                                      summary.mean_t_update, summary.mean_t_pred)]


def emit_csv(results: Iterable[Tuple[TreeConfig, Optional[IndicatorSummary]]], path) -> None:
    """Write one row per ``(config, summary)`` pair under the fixed header."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER)
            for config, summary in results:
                w.writerow(summary_row(config, summary))
    except OSError as exc:
        raise OSError(f"cannot write summary CSV {path}: {exc}") from exc


def read_summary_csv(path) -> List[dict]:
    """Parse a summary CSV; metric columns become floats (NaN for error rows)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["nbar"] = int(row["nbar"])
        row["b"] = int(row["b"])
        if row["theta"] != "grad.split":
            row["theta"] = float(row["theta"])
        for k in METRIC_COLUMNS:
            row[k] = math.nan if row[k] == ERROR_MARKER else float(row[k])
    return rows
