"""Adversarially perturbed ridge regression as a saddle problem.

    min_w max_{||r_j|| <= D}  1/(2N) sum_j (w.(x_j + r_j) - y_j)^2 + lam/2 ||w||^2 - beta/2 ||r||^2

The variable is ``z = (w, r_1, ..., r_N)``.  Samples are grouped into
contiguous mini-batches, one component per batch.  Component ``i`` is the
saddle field ``[grad_w phi_i, -grad_r phi_i]`` of

    phi_i = n/(2N) sum_{j in B_i} e_j^2 + lam/2 ||w||^2 - n beta/2 sum_{j in B_i} ||r_j||^2

with ``e_j = w.(x_j + r_j) - y_j``, so that the mean over components is exactly
the saddle field of the objective above.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from ..core import BlockLayout, Constants, FiniteSumVI
from ..prox import BallIndicator, ProductProx, ZeroProx


@dataclass(frozen=True)
class AdversarialSpec:
    X: object
    y: np.ndarray
    lam: float = 0.1
    beta: float = 1.0
    radius: float = 0.1
    batch: int = 4
    audit_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        N = self.X.shape[0]
        if N < 1:
            raise ValueError("empty dataset")
        if len(self.y) != N:
            raise ValueError(f"{N} samples but {len(self.y)} targets")
        if not 1 <= self.batch <= N:
            raise ValueError(f"batch size {self.batch} must lie in [1, {N}]")
        if self.radius < 0 or self.lam < 0 or self.beta <= 0:
            raise ValueError("need radius >= 0, lam >= 0, beta > 0")


def _dense_rows(X, rows):
    block = X[rows]
    return block.toarray() if sparse.issparse(block) else np.asarray(block, dtype=float)


class AdversarialOperator:
    def __init__(self, X, y, lam, beta, batch):
        self.N, self.d = X.shape
        self.X = X
        self.y = np.asarray(y, dtype=float)
        self.lam, self.beta = float(lam), float(beta)
        starts = range(0, self.N, batch)
        self.batches = [np.arange(s, min(s + batch, self.N)) for s in starts]
        self.n = len(self.batches)
        self.Xb = [_dense_rows(X, b) for b in self.batches]
        self.Xd = _dense_rows(X, slice(None))

    @property
    def dim(self):
        return self.d * (self.N + 1)

    def split(self, z):
        return z[: self.d], z[self.d :].reshape(self.N, self.d)

    def __call__(self, i, z):
        w, r = self.split(z)
        idx = self.batches[i]
        a = self.Xb[i] + r[idx]
        e = a @ w - self.y[idx]
        scale = self.n / self.N
        out = np.zeros(self.dim)
        out[: self.d] = scale * (e @ a) + self.lam * w
        dual = out[self.d :].reshape(self.N, self.d)
        dual[idx] = -scale * np.outer(e, w) + (self.n * self.beta) * r[idx]
        return out

    def full(self, z):
        w, r = self.split(z)
        xr = self.Xd + r
        e = xr @ w - self.y
        out = np.empty(self.dim)
        out[: self.d] = (e @ xr) / self.N + self.lam * w
        out[self.d :] = (-np.outer(e, w) / self.N + self.beta * r).ravel()
        return out


def adversarial_objective(w, r, X, y, lam, beta):
    X = X.toarray() if sparse.issparse(X) else np.asarray(X, dtype=float)
    e = (X + r) @ w - y
    return float(0.5 * np.mean(e * e) + 0.5 * lam * (w @ w) - 0.5 * beta * np.sum(r * r))


def make_adversarial(spec: AdversarialSpec, audit: bool = True) -> FiniteSumVI:
    """Build the adversarial VI; constants are audited empirically.

    The dual block is strongly concave only for ``beta`` large relative to
    ``||w||^2 / N``; the builder samples the monotonicity quotient and warns if
    it is not positive.
    """
    op = AdversarialOperator(spec.X, spec.y, spec.lam, spec.beta, spec.batch)
    N, d = op.N, op.d
    problem = FiniteSumVI(
        n=op.n,
        dim=op.dim,
        component=op,
        full=op.full,
        regularizer=ProductProx(ZeroProx(), BallIndicator(spec.radius, block=d), split=d),
        layout=BlockLayout(d, N * d),
        name="adversarial",
        constants=Constants(source="empirical"),
        info={"samples": N, "features": d, "lam": spec.lam, "beta": spec.beta,
              "radius": spec.radius, "batch": spec.batch},
    )
    if audit and spec.audit_samples > 0:
        from .wrappers import estimate_constants

        est = estimate_constants(problem, spec.audit_samples, seed=spec.seed, scale=_audit_scale(spec))
        mu = est["mu"]
        if mu <= 0:
            warnings.warn(
                f"adversarial problem is not strongly monotone on the audited region "
                f"(sampled mu={mu:.3g}); increase beta",
                RuntimeWarning,
                stacklevel=2,
            )
        problem = problem.with_constants(L=est["L"], mu=max(mu, 0.0), L_full=est["L_full"], source="empirical")
    return problem


def _audit_scale(spec):
    y = np.asarray(spec.y, dtype=float)
    return max(float(np.sqrt(np.mean(y * y))), spec.radius, 1e-3)


def synthetic_regression(samples, features, noise=0.1, seed=0):
    """Gaussian design ``X`` with unit-variance entries and a noisy linear target."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, features))
    w = rng.standard_normal(features) / np.sqrt(features)
    y = X @ w + noise * rng.standard_normal(samples)
    return X, y
