"""Problem transformations and empirical audits of the problem constants."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..core import FiniteSumVI, as_point, evaluate_full


class _Regularized:
    def __init__(self, inner, mu, anchor):
        self.inner = inner
        self.mu = mu
        self.anchor = anchor

    def __call__(self, i, z):
        return self.inner(i, z) + self.mu * (z - self.anchor)


def regularize_operator(problem: FiniteSumVI, mu_reg, anchor=None) -> FiniteSumVI:
    """Add ``mu_reg (z - anchor)`` to every component.

    This turns a merely monotone problem into a ``mu_reg``-strongly monotone
    one; stored ``mu`` and ``L`` both grow by ``mu_reg`` and the reference
    solution is dropped since it no longer solves the shifted problem.
    """
    if not mu_reg > 0:
        raise ValueError("mu_reg must be positive")
    anchor = problem.initial_point() if anchor is None else as_point(anchor, problem.dim).copy()
    anchor.setflags(write=False)
    full = None
    if problem.full is not None:
        inner_full = problem.full
        full = lambda z: inner_full(z) + mu_reg * (z - anchor)  # noqa: E731
    presolve = None
    if problem.presolve is not None:
        # the unshifted solution is only a warm start here
        presolve = lambda _: problem.presolve(problem)  # noqa: E731
    c = problem.constants
    constants = replace(
        c,
        mu=(c.mu or 0.0) + mu_reg,
        L=None if c.L is None else c.L + mu_reg,
        L_full=None if c.L_full is None else c.L_full + mu_reg,
        sigma2=None,
    )
    return replace(
        problem,
        component=_Regularized(problem.component, mu_reg, anchor),
        full=full,
        presolve=presolve,
        constants=constants,
        reference=None,
        reference_tol=None,
        name=f"{problem.name}+reg",
        info={**problem.info, "mu_reg": mu_reg},
    )


def _direction(problem, rng, k):
    v = rng.standard_normal(problem.dim)
    lay = problem.layout
    if lay is not None and lay.primal and lay.dual:
        if k % 3 == 1:
            v[lay.primal :] = 0.0
        elif k % 3 == 2:
            v[: lay.primal] = 0.0
    return v / np.linalg.norm(v)


def estimate_constants(problem: FiniteSumVI, samples=200, seed=0, scale=1.0, power_steps=3):
    """Sampled Lipschitz/monotonicity quotients and the variance at the reference.

    Pairs ``(z1, z1 + d)`` are drawn around the reference (or the start
    point).  Directions cycle through the whole space, the primal block and the
    dual block, and each is refined by a few finite-difference power steps
    ``d <- F_i(z1 + d) - F_i(z1)`` so that stiff directions living on a small
    support are found.  Every pair visited enters the extrema.  Returns a dict
    with ``L``, ``mu``, ``L_full`` and ``sigma2`` (``None`` without reference).
    """
    rng = np.random.default_rng(seed)
    center = problem.reference if problem.reference is not None else problem.initial_point()
    L = L_full = 0.0
    mu = np.inf
    for k in range(samples):
        z1 = center + scale * rng.standard_normal(problem.dim)
        i = int(rng.integers(problem.n))
        f1 = problem.component(i, z1)
        d = scale * _direction(problem, rng, k)
        for step in range(power_steps + 1):
            diff = problem.component(i, z1 + d) - f1
            dd = float(d @ d)
            L = max(L, float(np.linalg.norm(diff)) / np.sqrt(dd))
            mu = min(mu, float(diff @ d) / dd)
            norm = float(np.linalg.norm(diff))
            if norm == 0.0:
                break
            d = scale * diff / norm
        full_diff = evaluate_full(problem, z1 + d) - evaluate_full(problem, z1)
        L_full = max(L_full, float(np.linalg.norm(full_diff) / np.linalg.norm(d)))
    sigma2 = sigma_star_sq(problem) if problem.reference is not None else None
    return {"L": float(L), "mu": float(mu), "L_full": float(L_full), "sigma2": sigma2}


def sigma_star_sq(problem: FiniteSumVI):
    if problem.reference is None:
        raise ValueError("variance at the solution needs a reference solution")
    zs = problem.reference
    per = np.mean([float(np.sum(problem.component(i, zs) ** 2)) for i in range(problem.n)])
    return max(float(per), float(np.sum(evaluate_full(problem, zs) ** 2)))
