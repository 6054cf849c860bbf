"""Long-format plot data and seed-aggregated summaries.

Rows are ``schedule,seed,oracle_calls,metric,value,iteration``; the trailing
iteration column lets the same file be plotted against either axis.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict

import numpy as np

LONG_FIELDS = ("schedule", "seed", "oracle_calls", "metric", "value", "iteration")
SUMMARY_FIELDS = ("schedule", "oracle_calls", "metric", "median", "q25", "q75", "seeds")


def series(trace):
    """``{metric: [(oracle_calls, iteration, value), ...]}`` for one trace."""
    out = {}
    its = trace.iterations
    for m in trace.metrics:
        out[m] = [(r.oracle_calls, int(t), float(getattr(r, m)))
                  for r, t in zip(trace.records, its) if getattr(r, m) is not None]
    return out


def _label(trace):
    return trace.schedule or trace.solver


def emit_plot_data(traces):
    """Return ``(long_csv, summary_csv)`` text for a set of traces.

    Raises
    ------
    ValueError
        If the traces do not all carry the same metrics.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces")
    metric_sets = {tuple(tr.metrics) for tr in traces}
    if len(metric_sets) != 1:
        raise ValueError(f"inconsistent metric sets across traces: {sorted(metric_sets)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LONG_FIELDS)
    groups = defaultdict(list)
    for tr in traces:
        label = _label(tr)
        ser = series(tr)
        for m, rows in ser.items():
            groups[label, m].append(rows)
            for calls, it, v in rows:
                w.writerow([label, "" if tr.seed is None else tr.seed, calls, m, repr(v), it])
    return buf.getvalue(), _summary(groups)


def _summary(groups):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for (label, m), runs in sorted(groups.items()):
        grid, table = align_on_calls(runs)
        q25, med, q75 = np.percentile(table, [25, 50, 75], axis=0)
        for x, a, b, c in zip(grid, med, q25, q75):
            w.writerow([label, int(x), m, repr(float(a)), repr(float(b)), repr(float(c)), len(runs)])
    return buf.getvalue()


def align_on_calls(runs):
    """Put several runs on one oracle-call grid.

    Runs sharing the same call counts are stacked as they are.  Otherwise (the
    variance-reduced solver spends a random number of calls) each run is
    linearly interpolated onto the first run's grid, truncated to the range
    every run covers.
    """
    calls = [np.array([r[0] for r in run], dtype=float) for run in runs]
    vals = [np.array([r[2] for r in run], dtype=float) for run in runs]
    if all(c.shape == calls[0].shape and np.array_equal(c, calls[0]) for c in calls):
        return calls[0], np.vstack(vals)
    hi = min(c[-1] for c in calls)
    grid = calls[0][calls[0] <= hi]
    return grid, np.vstack([np.interp(grid, c, v) for c, v in zip(calls, vals)])


def read_plot_data(text):
    """Parse long-format rows back into ``{(schedule, seed): {metric: [(calls, iteration, value)]}}``."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != LONG_FIELDS:
        raise ValueError(f"unexpected plot-data header {reader.fieldnames}")
    out = defaultdict(lambda: defaultdict(list))
    for row in reader:
        seed = int(row["seed"]) if row["seed"] else None
        out[row["schedule"], seed][row["metric"]].append(
            (int(row["oracle_calls"]), int(row["iteration"]), float(row["value"]))
        )
    return {k: dict(v) for k, v in out.items()}


def read_summary(text):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SUMMARY_FIELDS:
        raise ValueError(f"unexpected summary header {reader.fieldnames}")
    out = defaultdict(lambda: defaultdict(list))
    for row in reader:
        out[row["metric"]][row["schedule"]].append(
            (int(row["oracle_calls"]), float(row["median"]), float(row["q25"]), float(row["q75"]))
        )
    return {m: dict(v) for m, v in out.items()}
