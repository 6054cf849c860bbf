"""Finite-sum variational inequality problems and the primitives solvers share.

A problem is a mean of ``n`` component operators plus a prox-friendly
regularizer ``g``.  Points are plain 1-D float64 numpy arrays; block structure
(primal/dual split) lives on the problem, not on the point.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .prox import Regularizer, ZeroProx


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Constants:
    """Problem constants.

    ``L`` and ``mu`` bound every component operator (Lipschitz and strong
    monotonicity), ``L_full`` is the Lipschitz constant of the mean operator
    and ``sigma2`` bounds the operator variance at the solution.  ``source``
    records where the numbers came from (``analytic``, ``empirical``, ...).
    """

    L: Optional[float] = None
    mu: Optional[float] = None
    sigma2: Optional[float] = None
    L_full: Optional[float] = None
    source: str = "analytic"

    def __post_init__(self):
        if self.L is not None and self.mu is not None:
            if not 0 <= self.mu <= self.L * (1 + 1e-12):
                raise ValueError(f"constants must satisfy 0 <= mu <= L, got mu={self.mu}, L={self.L}")


@dataclass(frozen=True)
class BlockLayout:
    primal: int
    dual: int

    @property
    def dim(self):
        return self.primal + self.dual


@dataclass(frozen=True)
class FiniteSumVI:
    """A finite-sum VI ``F(z) = 1/n sum_i F_i(z)`` with regularizer ``g``.

    ``component(i, z)`` evaluates ``F_i``.  ``full`` is an optional fast path
    for the mean operator; it must agree with the component mean up to
    rounding.  Without it, the mean is accumulated in ascending index order.
    """

    n: int
    dim: int
    component: Callable[[int, np.ndarray], np.ndarray]
    regularizer: Regularizer = field(default_factory=ZeroProx)
    full: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constants: Constants = field(default_factory=Constants)
    reference: Optional[np.ndarray] = None
    reference_tol: Optional[float] = None
    layout: Optional[BlockLayout] = None
    start: Optional[np.ndarray] = None
    presolve: Optional[Callable[["FiniteSumVI"], np.ndarray]] = None
    name: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a finite-sum problem needs n >= 1 components")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.layout is not None and self.layout.dim != self.dim:
            raise ValueError(
                f"block layout {self.layout.primal}+{self.layout.dual} does not match dimension {self.dim}"
            )
        if self.reference is not None:
            ref = np.asarray(self.reference, dtype=float)
            if ref.shape != (self.dim,):
                raise DimensionError(f"reference has shape {ref.shape}, expected ({self.dim},)")
            ref.setflags(write=False)
            object.__setattr__(self, "reference", ref)

    def with_reference(self, z, tol):
        return replace(self, reference=np.array(z, dtype=float), reference_tol=float(tol))

    def with_constants(self, **kw):
        return replace(self, constants=replace(self.constants, **kw))

    def initial_point(self):
        if self.start is not None:
            return np.array(self.start, dtype=float)
        return np.zeros(self.dim)


def as_point(z, dim=None) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise DimensionError(f"a point must be a non-empty 1-D array, got shape {z.shape}")
    if dim is not None and z.size != dim:
        raise DimensionError(f"point has dimension {z.size}, expected {dim}")
    return z


def evaluate_component(problem: FiniteSumVI, i: int, z) -> np.ndarray:
    """Return ``F_i(z)``. Counting oracle calls is the caller's job."""
    if not 0 <= i < problem.n:
        raise IndexError(f"component index {i} out of range for n={problem.n}")
    z = as_point(z, problem.dim)
    return problem.component(int(i), z)


def component_mean(problem: FiniteSumVI, z, indices: Sequence[int] | None = None) -> np.ndarray:
    """Mean of component values over ``indices`` (a permutation of 0..n-1).

    The sum is always accumulated in ascending index order, so any epoch
    order gives a bit-identical result.
    """
    z = as_point(z, problem.dim)
    if indices is None:
        order = range(problem.n)
    else:
        order = sorted(int(i) for i in indices)
        if order != list(range(problem.n)):
            raise ValueError("indices must be a permutation of range(n)")
    acc = np.zeros(problem.dim)
    for i in order:
        acc += problem.component(i, z)
    return acc / problem.n


def evaluate_full(problem: FiniteSumVI, z) -> np.ndarray:
    """Return ``F(z) = 1/n sum_i F_i(z)``."""
    z = as_point(z, problem.dim)
    if problem.full is not None:
        return problem.full(z)
    return component_mean(problem, z)


def natural_residual(problem: FiniteSumVI, z, gamma: float = 1.0) -> float:
    """Fixed-point residual ``||z - prox_{gamma g}(z - gamma F(z))||``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    z = as_point(z, problem.dim)
    step = problem.regularizer.prox(gamma, z - gamma * evaluate_full(problem, z))
    return float(np.linalg.norm(z - step))


def sq_distance(a, b) -> float:
    a = as_point(a)
    b = as_point(b)
    if a.size != b.size:
        raise DimensionError(f"cannot compare points of dimension {a.size} and {b.size}")
    diff = a - b
    return float(diff @ diff)


def _sample_pairs(problem, samples, scale, rng):
    center = problem.reference if problem.reference is not None else np.zeros(problem.dim)
    for _ in range(samples):
        z1 = center + scale * rng.standard_normal(problem.dim)
        z2 = center + scale * rng.standard_normal(problem.dim)
        yield int(rng.integers(problem.n)), z1, z2


def lipschitz_violations(problem: FiniteSumVI, samples=1000, seed=0, scale=1.0, L=None):
    """Sampled triples ``(i, z1, z2)`` breaking ``||F_i(z1)-F_i(z2)|| <= L||z1-z2||``."""
    L = problem.constants.L if L is None else L
    if L is None:
        raise ValueError("no Lipschitz constant to audit")
    rng = np.random.default_rng(seed)
    bad = []
    for i, z1, z2 in _sample_pairs(problem, samples, scale, rng):
        lhs = np.linalg.norm(problem.component(i, z1) - problem.component(i, z2))
        if lhs > L * (1 + 1e-9) * np.linalg.norm(z1 - z2):
            bad.append((i, z1, z2))
    return bad


def monotonicity_violations(problem: FiniteSumVI, samples=1000, seed=0, scale=1.0, mu=None):
    """Sampled triples breaking ``<F_i(z1)-F_i(z2), z1-z2> >= mu||z1-z2||^2``."""
    mu = problem.constants.mu if mu is None else mu
    if mu is None:
        raise ValueError("no monotonicity constant to audit")
    rng = np.random.default_rng(seed)
    bad = []
    for i, z1, z2 in _sample_pairs(problem, samples, scale, rng):
        d = z1 - z2
        lhs = (problem.component(i, z1) - problem.component(i, z2)) @ d
        if lhs < (mu - 1e-9) * (d @ d):
            bad.append((i, z1, z2))
    return bad


# -- traces -------------------------------------------------------------------

TRACE_FIELDS = ("epoch", "step", "oracle_calls", "sq_dist", "lyapunov", "residual")


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    step: int
    oracle_calls: int
    sq_dist: Optional[float] = None
    lyapunov: Optional[float] = None
    residual: Optional[float] = None


@dataclass
class RunTrace:
    """Per-iteration metrics of one solver run (initial point included)."""

    records: list = field(default_factory=list)
    schedule: str = ""
    gamma: float = float("nan")
    seed: Optional[int] = None
    solver: str = ""
    steps_per_epoch: int = 1
    final: Optional[np.ndarray] = None

    def append(self, record: TraceRecord):
        if self.records and record.oracle_calls < self.records[-1].oracle_calls:
            raise ValueError("oracle_calls must be non-decreasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    @property
    def iterations(self) -> np.ndarray:
        """Iteration index of every record (``epoch * n + step``)."""
        return np.array([r.epoch * self.steps_per_epoch + r.step for r in self.records], dtype=float)

    @property
    def metrics(self):
        """Names of metric columns that carry at least one value."""
        return [m for m in ("sq_dist", "lyapunov", "residual") if any(getattr(r, m) is not None for r in self.records)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_FIELDS) + "\n")
        for r in self.records:
            row = [str(r.epoch), str(r.step), str(r.oracle_calls)]
            row += ["" if v is None else repr(float(v)) for v in (r.sq_dist, r.lyapunov, r.residual)]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, **meta) -> "RunTrace":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        trace = cls(**meta)
        for row in reader:
            opt = lambda k: float(row[k]) if row[k] != "" else None  # noqa: E731
            trace.append(
                TraceRecord(
                    int(row["epoch"]), int(row["step"]), int(row["oracle_calls"]),
                    opt("sq_dist"), opt("lyapunov"), opt("residual"),
                )
            )
        return trace
