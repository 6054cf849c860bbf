"""Proximal operators used by the problem builders.

Every regularizer exposes ``value(z)`` and ``prox(gamma, z)``, where
``prox(gamma, z) = argmin_y gamma*g(y) + 1/2 ||y - z||^2``.
"""
from __future__ import annotations

import numpy as np


def prox_zero(gamma, z):
    return np.array(z, dtype=float)


def prox_sq_distance(gamma, lam, anchor, z):
    """Prox of ``lam/2 ||y - anchor||^2``, i.e. ``(z + gamma*lam*anchor) / (1 + gamma*lam)``."""
    if gamma <= 0 or lam <= 0:
        raise ValueError("gamma and lam must be positive")
    z = np.asarray(z, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if anchor.shape != z.shape:
        raise ValueError(f"anchor shape {anchor.shape} does not match point shape {z.shape}")
    t = gamma * lam
    return (z + t * anchor) / (1.0 + t)


def project_balls(radius, z, block=None):
    """Project every consecutive ``block``-sized sub-vector of ``z`` onto the
    Euclidean ball of the given radius.

    ``block=None`` treats the whole vector as one block.  Zero sub-vectors are
    left as they are.  ``radius=0`` is the degenerate ball ``{0}``.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("expected a flat vector")
    block = z.size if block is None else int(block)
    if block < 1 or z.size % block:
        raise ValueError(f"vector of length {z.size} cannot be split into blocks of {block}")
    if radius == 0:
        return np.zeros_like(z)
    v = z.reshape(-1, block)
    norms = np.sqrt(np.einsum("ij,ij->i", v, v))
    # points within a few ulps of the sphere count as inside, so projecting
    # twice is exact
    edge = radius * (1 + 8 * np.finfo(float).eps)
    scale = np.where(norms > edge, radius / np.maximum(norms, edge), 1.0)
    return (v * scale[:, None]).reshape(-1)


class Regularizer:
    """Base class: a proper closed convex function with a cheap prox."""

    def value(self, z):
        raise NotImplementedError

    def prox(self, gamma, z):
        raise NotImplementedError


class ZeroProx(Regularizer):
    def value(self, z):
        return 0.0

    def prox(self, gamma, z):
        return prox_zero(gamma, z)

    def __repr__(self):
        return "ZeroProx()"


class SqDistanceProx(Regularizer):
    def __init__(self, lam, anchor):
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.lam = float(lam)
        self.anchor = np.asarray(anchor, dtype=float).reshape(-1)

    def value(self, z):
        d = np.asarray(z, dtype=float) - self.anchor
        return 0.5 * self.lam * float(d @ d)

    def prox(self, gamma, z):
        return prox_sq_distance(gamma, self.lam, self.anchor, z)

    def __repr__(self):
        return f"SqDistanceProx(lam={self.lam})"


class BallIndicator(Regularizer):
    """Indicator of ``{z : ||z_k|| <= radius for every block z_k}``."""

    def __init__(self, radius, block=None, slack=1e-12):
        if radius < 0:
            raise ValueError("radius must be non-negative")
        self.radius = float(radius)
        self.block = block
        self.slack = slack

    def value(self, z):
        z = np.asarray(z, dtype=float)
        block = z.size if self.block is None else self.block
        norms = np.linalg.norm(z.reshape(-1, block), axis=1)
        return 0.0 if np.all(norms <= self.radius * (1 + self.slack) + self.slack) else np.inf

    def prox(self, gamma, z):
        return project_balls(self.radius, z, self.block)

    def __repr__(self):
        return f"BallIndicator(radius={self.radius}, block={self.block})"


class ProductProx(Regularizer):
    """Separable ``g(x, y) = g1(x) + g2(y)`` with ``x = z[:split]``."""

    def __init__(self, primal, dual, split):
        self.primal = primal
        self.dual = dual
        self.split = int(split)

    def _parts(self, z):
        z = np.asarray(z, dtype=float)
        if not 0 <= self.split <= z.size:
            raise ValueError(f"split {self.split} outside a vector of length {z.size}")
        return z[: self.split], z[self.split :]

    def value(self, z):
        x, y = self._parts(z)
        return self.primal.value(x) + self.dual.value(y)

    def prox(self, gamma, z):
        x, y = self._parts(z)
        return np.concatenate([self.primal.prox(gamma, x), self.dual.prox(gamma, y)])

    def __repr__(self):
        return f"ProductProx({self.primal!r}, {self.dual!r}, split={self.split})"


def prox_product(gamma, primal, dual, z, split):
    return ProductProx(primal, dual, split).prox(gamma, z)
