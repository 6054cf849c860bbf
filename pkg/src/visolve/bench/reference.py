"""Reference solutions for problems without a closed-form solution."""
from __future__ import annotations

import logging

import numpy as np

from ..core import FiniteSumVI, as_point, natural_residual
from ..solvers import SolverConfig, run_deterministic_eg

log = logging.getLogger(__name__)


class ReferenceError(RuntimeError):
    """The deterministic run hit its iteration cap before reaching the tolerance."""

    def __init__(self, residual, tol, iterations):
        super().__init__(
            f"reference not converged: residual {residual:.3e} > tol {tol:.1e} after {iterations} iterations"
        )
        self.residual = residual
        self.tol = tol
        self.iterations = iterations


def reference_step(problem: FiniteSumVI):
    """``1/(6 L)`` with the Lipschitz constant of the mean operator if known."""
    c = problem.constants
    L = c.L_full if c.L_full else c.L
    if not L:
        from ..problems.wrappers import estimate_constants

        L = estimate_constants(problem, samples=50)["L_full"]
    return 1.0 / (6.0 * float(L))


def compute_reference(problem: FiniteSumVI, tol, max_iter=200_000, z0=None, residual_gamma=1.0):
    """Run full-operator extragradient until the natural residual drops below ``tol``.

    Problems with a ``presolve`` hook (an external solver) are warm-started from
    its output; the result is always certified by the residual.  A start that
    already meets the tolerance is returned unchanged.

    Raises
    ------
    ReferenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if z0 is None:
        z0 = problem.presolve(problem) if problem.presolve is not None else problem.initial_point()
    z = as_point(z0, problem.dim).copy()
    res = natural_residual(problem, z, residual_gamma)
    if res < tol:
        return z
    cfg = SolverConfig(
        gamma=reference_step(problem),
        epochs=max_iter,
        residual_tol=tol,
        residual_gamma=residual_gamma,
        track_residual=False,
    )
    trace = run_deterministic_eg(problem, cfg, z)
    z = trace.final
    res = natural_residual(problem, z, residual_gamma)
    iters = len(trace) - 1
    if not res < tol:
        raise ReferenceError(res, tol, iters)
    log.info("reference reached residual %.3e in %d iterations", res, iters)
    return z


def with_computed_reference(problem: FiniteSumVI, tol, **kw) -> FiniteSumVI:
    """Copy of ``problem`` carrying a freshly computed reference and its tolerance."""
    return problem.with_reference(compute_reference(problem, tol, **kw), tol)


def save_reference(path, z, tol, key=""):
    with open(path, "wb") as fh:
        np.savez(fh, z=np.asarray(z, dtype=float), tol=float(tol), key=str(key))


def load_reference(path):
    """Return ``(z, tol, key)`` from a file written by :func:`save_reference`."""
    with np.load(path) as data:
        return np.array(data["z"]), float(data["tol"]), str(data["key"])
