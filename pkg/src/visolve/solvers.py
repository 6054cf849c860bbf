"""Shuffled extragradient, its loopless variance-reduced variant, and the
deterministic extragradient baseline.

All loops count component-oracle calls: an extragradient step costs 2, a
full-operator evaluation costs ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    FiniteSumVI,
    RunTrace,
    TraceRecord,
    as_point,
    evaluate_full,
    natural_residual,
    sq_distance,
)
from .sampling import Schedule

CADENCES = ("iteration", "epoch")


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    ``epochs`` counts passes over the ``n`` components; for the deterministic
    baseline it counts full iterations.  ``alpha`` and ``p`` only matter for
    the variance-reduced solver and default to ``1 - 1/n`` and ``1/n``.
    The residual is evaluated with step ``residual_gamma`` at epoch
    boundaries only, so it never enters the oracle count.
    """

    gamma: float
    epochs: int = 100
    alpha: Optional[float] = None
    p: Optional[float] = None
    cadence: str = "iteration"
    seed: int = 50
    max_oracle_calls: Optional[int] = None
    residual_tol: Optional[float] = None
    residual_gamma: float = 1.0
    track_residual: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"step size must be positive, got {self.gamma}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.p is not None and not 0 < self.p <= 1:
            raise ValueError(f"snapshot probability must lie in (0, 1], got {self.p}")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.cadence not in CADENCES:
            raise ValueError(f"cadence must be one of {CADENCES}")

    def vr_params(self, n):
        p = 1.0 / n if self.p is None else self.p
        alpha = 1.0 - p if self.alpha is None else self.alpha
        if not 0 < alpha < 1:
            # n = 1 with the default p = 1 leaves alpha = 0; keep it admissible.
            alpha = 0.5 if self.alpha is None else alpha
        return alpha, p


# -- step-size rules ----------------------------------------------------------

def default_step_eg(mu, L, n):
    """``min{1/(2 mu n), 1/(6 L)}``."""
    if mu <= 0 or L <= 0 or n < 1:
        raise ValueError("mu, L must be positive and n >= 1")
    return min(1.0 / (2.0 * mu * n), 1.0 / (6.0 * L))


def default_step_eg_tuned(mu, L, n, T, dist0_sq, sigma2):
    """Step size balancing the linear and the variance term over ``T`` iterations."""
    if min(mu, L, n, T, dist0_sq, sigma2) <= 0:
        raise ValueError("all inputs must be positive")
    ratio = mu**2 * dist0_sq * T / (512.0 * n**2 * sigma2)
    third = 2.0 * math.log(max(2.0, ratio)) / (mu * T)
    return min(1.0 / (2.0 * mu * n), 1.0 / (6.0 * L), third)


def default_step_vr(mu, L, alpha):
    """``(1 - alpha) mu / (6 L^2)``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if mu <= 0 or L <= 0:
        raise ValueError("mu and L must be positive")
    return (1.0 - alpha) * mu / (6.0 * L**2)


# -- plain extragradient ------------------------------------------------------

def eg_step(problem: FiniteSumVI, z, i, gamma):
    """One extragradient step on component ``i`` (2 oracle calls)."""
    prox = problem.regularizer.prox
    F = problem.component
    z_half = prox(gamma, z - gamma * F(i, z))
    return prox(gamma, z - gamma * F(i, z_half))


def _full_eg_step(problem, z, gamma):
    prox = problem.regularizer.prox
    z_half = prox(gamma, z - gamma * evaluate_full(problem, z))
    return prox(gamma, z - gamma * evaluate_full(problem, z_half))


class _Recorder:
    def __init__(self, problem, config, trace):
        self.problem = problem
        self.config = config
        self.trace = trace
        self.ref = problem.reference

    def residual(self, z):
        return natural_residual(self.problem, z, self.config.residual_gamma)

    def record(self, epoch, step, calls, z, omega=None, residual=None):
        sq = lyap = None
        if self.ref is not None:
            sq = sq_distance(z, self.ref)
            if omega is not None:
                lyap = sq + sq_distance(omega, self.ref)
        self.trace.append(TraceRecord(epoch, step, calls, sq, lyap, residual))

    def epoch_end(self, epoch, n, calls, z, omega=None):
        """Record the epoch boundary and report whether to stop early."""
        cfg = self.config
        res = self.residual(z) if (cfg.track_residual or cfg.residual_tol is not None) else None
        self.record(epoch, n, calls, z, omega, res if cfg.track_residual else None)
        if cfg.residual_tol is not None and res < cfg.residual_tol:
            return True
        return cfg.max_oracle_calls is not None and calls >= cfg.max_oracle_calls


def _check(problem, schedule, config):
    if schedule is not None and schedule.n != problem.n:
        raise ValueError(f"schedule has n={schedule.n} but the problem has n={problem.n}")
    if not isinstance(config, SolverConfig):
        raise TypeError("config must be a SolverConfig")


def _start(problem, z0):
    return problem.initial_point() if z0 is None else as_point(z0, problem.dim).copy()


def run_eg(problem: FiniteSumVI, schedule: Schedule, config: SolverConfig, z0=None) -> RunTrace:
    """Extragradient with indices drawn from ``schedule``.

    Each epoch runs ``n`` steps and hands its last iterate to the next epoch.
    """
    _check(problem, schedule, config)
    z = _start(problem, z0)
    trace = RunTrace(schedule=schedule.kind.value, gamma=config.gamma, seed=schedule.seed, solver="eg",
                     steps_per_epoch=problem.n)
    rec = _Recorder(problem, config, trace)
    n, gamma = problem.n, config.gamma
    per_iter = config.cadence == "iteration"
    calls = 0
    rec.record(0, 0, 0, z, residual=rec.residual(z) if config.track_residual else None)
    for s in range(config.epochs):
        schedule.begin_epoch(s)
        for t in range(n):
            z = eg_step(problem, z, schedule.next_index(), gamma)
            calls += 2
            if per_iter and t < n - 1:
                rec.record(s, t + 1, calls, z)
        if rec.epoch_end(s, n, calls, z):
            break
    trace.final = z
    return trace


def run_deterministic_eg(problem: FiniteSumVI, config: SolverConfig, z0=None) -> RunTrace:
    """Full-operator extragradient; one "epoch" is one iteration (2n calls)."""
    _check(problem, None, config)
    z = _start(problem, z0)
    trace = RunTrace(schedule="full", gamma=config.gamma, seed=None, solver="det-eg")
    rec = _Recorder(problem, config, trace)
    calls = 0
    rec.record(0, 0, 0, z, residual=rec.residual(z) if config.track_residual else None)
    for k in range(config.epochs):
        z = _full_eg_step(problem, z, config.gamma)
        calls += 2 * problem.n
        if rec.epoch_end(k, 1, calls, z):
            break
    trace.final = z
    return trace


# -- variance reduction -------------------------------------------------------

@dataclass
class VRState:
    z: np.ndarray
    omega: np.ndarray
    f_omega: Optional[np.ndarray] = None
    valid: bool = False
    oracle_calls: int = 0

    @classmethod
    def start(cls, problem, z0, omega0=None):
        z0 = np.array(z0, dtype=float)
        omega = z0.copy() if omega0 is None else np.array(omega0, dtype=float)
        state = cls(z0, omega)
        state.refresh(problem)
        return state

    def refresh(self, problem):
        self.f_omega = evaluate_full(problem, self.omega)
        self.valid = True
        self.oracle_calls += problem.n


def vr_estimator(problem, i, z_half, omega, f_omega):
    """``F_i(z_half) - F_i(omega) + F(omega)``."""
    F = problem.component
    return F(i, z_half) - F(i, omega) + f_omega


def vr_eg_step(problem: FiniteSumVI, state: VRState, i, gamma, alpha, p, rng) -> VRState:
    """One loopless variance-reduced extragradient step.

    The snapshot, if refreshed, moves to the iterate held *before* this step.
    """
    if not state.valid:
        raise RuntimeError("snapshot cache is stale")
    prox = problem.regularizer.prox
    z, omega = state.z, state.omega
    z_bar = alpha * z + (1.0 - alpha) * omega
    z_half = prox(gamma, z_bar - gamma * state.f_omega)
    f_hat = vr_estimator(problem, i, z_half, omega, state.f_omega)
    new = VRState(prox(gamma, z_bar - gamma * f_hat), omega, state.f_omega, True, state.oracle_calls + 2)
    if rng.random() < p:
        new.omega = z
        new.refresh(problem)
    return new


def run_vr_eg(problem: FiniteSumVI, schedule: Schedule, config: SolverConfig, z0=None) -> RunTrace:
    """Shuffled extragradient with a loopless SVRG-style estimator.

    The snapshot starts at the initial point and its full-operator value is
    computed once up front (charged ``n`` calls).  The snapshot coin uses its
    own generator seeded from ``config.seed`` so the index stream is not
    perturbed by it.
    """
    _check(problem, schedule, config)
    alpha, p = config.vr_params(problem.n)
    gamma, n = config.gamma, problem.n
    coin = np.random.default_rng([config.seed, 0x5EED])
    state = VRState.start(problem, _start(problem, z0))
    trace = RunTrace(schedule=schedule.kind.value, gamma=gamma, seed=schedule.seed, solver="vr-eg",
                     steps_per_epoch=n)
    rec = _Recorder(problem, config, trace)
    per_iter = config.cadence == "iteration"
    rec.record(0, 0, state.oracle_calls, state.z, state.omega,
               residual=rec.residual(state.z) if config.track_residual else None)
    for s in range(config.epochs):
        schedule.begin_epoch(s)
        for t in range(n):
            state = vr_eg_step(problem, state, schedule.next_index(), gamma, alpha, p, coin)
            if per_iter and t < n - 1:
                rec.record(s, t + 1, state.oracle_calls, state.z, state.omega)
        if rec.epoch_end(s, n, state.oracle_calls, state.z, state.omega):
            break
    trace.final = state.z
    return trace


SOLVERS = ("eg", "vr-eg", "det-eg")


def solve(problem, method, config, schedule=None, z0=None):
    if method == "eg":
        return run_eg(problem, schedule, config, z0)
    if method == "vr-eg":
        return run_vr_eg(problem, schedule, config, z0)
    if method == "det-eg":
        return run_deterministic_eg(problem, config, z0)
    raise ValueError(f"unknown solver {method!r}; expected one of {', '.join(SOLVERS)}")
