"""Synthetic strongly monotone affine problems with a known solution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Constants, FiniteSumVI


@dataclass(frozen=True)
class AffineSaddleSpec:
    dim: int
    n: int
    mu: float = 1.0
    L: float = 10.0
    seed: int = 0
    offset_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.mu <= self.L:
            raise ValueError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")
        if self.dim < 1 or self.n < 1:
            raise ValueError("dim and n must be positive")


def _scale_to_norm(mu, B, L, tol=1e-13):
    """Smallest ``t >= 0`` with ``||mu I + t B||_2 = L`` (bisection).

    ``t -> ||mu I + t B||`` is convex with its minimum ``mu`` at ``t = 0``
    whenever ``B`` has a PSD symmetric part, so it is non-decreasing on t >= 0.
    """
    eye = np.eye(B.shape[0])
    norm = lambda t: np.linalg.norm(mu * eye + t * B, 2)  # noqa: E731
    if L <= mu or not np.any(B):
        return 0.0
    hi = 1.0
    while norm(hi) < L:
        hi *= 2.0
    lo = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if norm(mid) < L:
            lo = mid
        else:
            hi = mid
    return lo


class AffineOperator:
    """``F_i(z) = M_i z + c_i`` stored as stacked arrays."""

    def __init__(self, M, c):
        self.M = np.asarray(M, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.M.setflags(write=False)
        self.c.setflags(write=False)

    def __call__(self, i, z):
        return self.M[i] @ z + self.c[i]

    @property
    def mean_matrix(self):
        return self.M.mean(axis=0)

    @property
    def mean_offset(self):
        return self.c.mean(axis=0)


def affine_problem(M, c, name="affine", constants=None, regularizer=None, **kw):
    """Wrap explicit matrices ``M`` (n x d x d) and offsets ``c`` (n x d).

    Constants are computed exactly: ``L = max_i ||M_i||_2``, ``mu = min_i
    lambda_min(sym M_i)``; the solution is a direct linear solve (only valid
    without a regularizer).
    """
    M = np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    if M.ndim == 2:
        M, c = M[None], c[None]
    n, d, _ = M.shape
    op = AffineOperator(M, c)
    if constants is None:
        L = max(np.linalg.norm(Mi, 2) for Mi in M)
        mu = min(np.linalg.eigvalsh(0.5 * (Mi + Mi.T))[0] for Mi in M)
        Mbar = op.mean_matrix
        ref = sigma2 = None
        if regularizer is None and np.linalg.matrix_rank(Mbar) == d:
            ref = np.linalg.solve(Mbar, -op.mean_offset)
            per = M @ ref + c
            sigma2 = max(float(np.mean(np.sum(per**2, axis=1))), float(np.sum(per.mean(axis=0) ** 2)))
        constants = Constants(L=float(L), mu=max(float(mu), 0.0), sigma2=sigma2,
                              L_full=float(np.linalg.norm(Mbar, 2)), source="analytic")
        kw.setdefault("reference", ref)
        if ref is not None:
            kw.setdefault("reference_tol", 1e-10)
    if regularizer is not None:
        kw["regularizer"] = regularizer
    problem = FiniteSumVI(n=n, dim=d, component=op, constants=constants, name=name, **kw)
    return problem


def make_affine_saddle(spec: AffineSaddleSpec) -> FiniteSumVI:
    """Random affine family ``F_i(z) = M_i z + c_i`` with ``M_i = mu I + t_i (S_i + A_i)``.

    ``S_i`` is PSD with a zero eigenvalue (so every component is exactly
    ``mu``-strongly monotone), ``A_i`` is antisymmetric, and ``t_i`` is chosen
    so that ``||M_i||_2 = L``.  With ``d = 1`` the antisymmetric part vanishes.
    """
    rng = np.random.default_rng(spec.seed)
    d, n = spec.dim, spec.n
    Ms = np.empty((n, d, d))
    for i in range(n):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eig = rng.uniform(0.0, 1.0, size=d)
        eig[0] = 0.0
        S = (Q * eig) @ Q.T
        G = rng.standard_normal((d, d))
        A = 0.5 * (G - G.T)
        B = S + A
        if d == 1:
            B = np.ones((1, 1))
        Ms[i] = spec.mu * np.eye(d) + _scale_to_norm(spec.mu, B, spec.L) * B
    c = spec.offset_scale * rng.standard_normal((n, d))
    problem = affine_problem(Ms, c, name="affine")
    return problem
