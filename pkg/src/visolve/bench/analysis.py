"""Empirical rates and checks of the closed-form convergence bounds."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ..core import FiniteSumVI, RunTrace
from ..solvers import SolverConfig


@dataclass(frozen=True)
class RateFit:
    """Log-linear fit ``metric ~ C rho**iteration`` over ``[start, stop)``."""

    rho: float
    plateau: float
    start: int
    stop: int
    r2: float

    @property
    def contracting(self):
        return self.rho < 1.0


def _series(trace, metric):
    if isinstance(trace, RunTrace):
        return trace.iterations, trace.column(metric)
    y = np.asarray(trace, dtype=float)
    if y.ndim != 1:
        raise ValueError("expected a trace or a 1-D sequence")
    return np.arange(y.size, dtype=float), y


def fit_rate(trace, window=None, metric="sq_dist", min_points=10) -> RateFit:
    """Fit a per-iteration contraction factor to ``metric``.

    Parameters
    ----------
    trace : RunTrace or array_like
        A raw sequence is indexed by its position.
    window : (start, stop), optional
        Record indices to fit.  By default the longest leading run of
        positive values is used, which excludes anything after the metric
        hits exact zero.

    The plateau is the median of the last decile of the whole series.
    """
    x, y = _series(trace, metric)
    if np.all(np.isnan(y)):
        raise ValueError(f"trace has no {metric} values")
    if window is None:
        bad = np.flatnonzero(~(y > 0))
        start, stop = 0, int(bad[0]) if bad.size else y.size
    else:
        start, stop = int(window[0]), int(window[1])
        if not 0 <= start < stop <= y.size:
            raise ValueError(f"window {window} outside a trace of {y.size} records")
        if not np.all(y[start:stop] > 0):
            raise ValueError("non-positive values in the window; fit only the pre-plateau segment")
    if stop - start < min_points:
        raise ValueError(f"window holds {stop - start} points, need at least {min_points}")
    xs, ls = x[start:stop], np.log(y[start:stop])
    slope, icpt = np.polyfit(xs, ls, 1)
    resid = ls - (slope * xs + icpt)
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    finite = y[np.isfinite(y)]
    tail = finite[-max(1, finite.size // 10):]
    return RateFit(float(np.exp(slope)), float(np.median(tail)), start, stop, r2)


@dataclass
class BoundReport:
    """Seed-mean curve against a closed-form envelope."""

    kind: str
    slack: float
    seeds: int
    gamma: float
    iterations: np.ndarray
    mean: np.ndarray
    bound: np.ndarray
    step_ok: bool
    notes: list = field(default_factory=list)

    @property
    def ratio(self):
        return self.mean / self.bound

    @property
    def worst_ratio(self):
        return float(np.max(self.ratio))

    @property
    def passed(self):
        return bool(np.all(self.mean <= self.bound * self.slack))

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.kind}: worst mean/bound = {self.worst_ratio:.4g} "
                f"(slack {self.slack:g}, {self.seeds} seeds, {len(self.mean)} points, "
                f"step condition {'met' if self.step_ok else 'violated'})")

    def to_csv(self):
        buf = io.StringIO()
        buf.write("iteration,mean,bound,ratio\n")
        for t, m, b in zip(self.iterations, self.mean, self.bound):
            buf.write(f"{int(t)},{m!r},{b!r},{m / b!r}\n")
        return buf.getvalue()


def _aligned(traces, metric, keep):
    keys = None
    tables = []
    for tr in traces:
        tab = {(r.epoch, r.step): getattr(r, metric) for r in tr.records if keep(r, tr)}
        tables.append(tab)
        keys = set(tab) if keys is None else keys & set(tab)
    keys = sorted(keys)
    vals = np.array([[tab[k] for k in keys] for tab in tables], dtype=float)
    if np.isnan(vals).any():
        raise ValueError(f"traces lack {metric} values; a reference solution is required")
    n = traces[0].steps_per_epoch
    its = np.array([e * n + s for e, s in keys], dtype=float)
    return its, vals.mean(axis=0)


def check_theorem_bounds(traces, problem: FiniteSumVI, config: SolverConfig | None = None,
                         slack=1.0, min_seeds=20) -> BoundReport:
    """Compare seed-mean curves with the theoretical envelopes.

    Plain extragradient traces are checked at epoch boundaries against
    ``(1 - gamma mu/2)^(S n) d0 + 256 gamma n^2 sigma^2 / mu``; variance-reduced
    traces at every record against ``(1 - gamma mu/4)^T V0``.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces")
    if problem.reference is None:
        raise ValueError("bound checks need a reference solution")
    seeds = len({tr.seed for tr in traces})
    if seeds < min_seeds:
        raise ValueError(f"{seeds} seeds given, at least {min_seeds} required")
    solvers = {tr.solver for tr in traces}
    gammas = {tr.gamma for tr in traces}
    if len(solvers) != 1 or len(gammas) != 1:
        raise ValueError("traces mix solvers or step sizes")
    solver, gamma = solvers.pop(), gammas.pop()
    c, n = problem.constants, problem.n
    if not c.mu or c.mu <= 0 or not c.L:
        raise ValueError("bound checks need mu > 0 and L")
    mu, L = c.mu, c.L
    notes = []
    if solver == "eg":
        if c.sigma2 is None:
            raise ValueError("the plain extragradient bound needs sigma2")
        its, mean = _aligned(traces, "sq_dist", lambda r, tr: r.step in (0, tr.steps_per_epoch))
        bound = (1 - gamma * mu / 2) ** its * mean[0] + 256 * gamma * n**2 * c.sigma2 / mu
        step_ok = gamma <= min(1 / (2 * mu * n), 1 / (6 * L)) * (1 + 1e-12)
        kind = "eg-neighbourhood"
    elif solver == "vr-eg":
        its, mean = _aligned(traces, "lyapunov", lambda r, tr: True)
        bound = (1 - gamma * mu / 4) ** its * mean[0]
        alpha = (config or SolverConfig(gamma=gamma)).vr_params(n)[0]
        step_ok = gamma <= (1 - alpha) * mu / (6 * L**2) * (1 + 1e-12)
        kind = "vr-lyapunov"
    else:
        raise ValueError(f"no bound for solver {solver!r}")
    if not step_ok:
        notes.append("step size exceeds the theoretical condition; the bound is not guaranteed")
    return BoundReport(kind, float(slack), seeds, gamma, its, mean, bound, step_ok, notes)
