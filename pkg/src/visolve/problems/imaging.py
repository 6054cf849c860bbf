"""Discrete gradient/divergence on pixel grids and the TV denoising saddle problem.

The gradient uses forward differences; the last row (column) repeats its
nearest neighbour, so the difference there is zero.  The divergence is the
negative adjoint, ``<grad u, p> = -<u, div p>``.  Both act on the last two
axes, so stacks of image blocks are handled in one call.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from ..core import BlockLayout, Constants, FiniteSumVI
from ..prox import BallIndicator, ProductProx, ZeroProx


def grad_image(u, h=1.0):
    """Forward differences of ``u`` (``..., H, W``) -> field (``..., H, W, 2``).

    Channel 0 holds vertical differences ``u[i+1, j] - u[i, j]``, channel 1
    horizontal ones ``u[i, j+1] - u[i, j]``, both divided by ``h``.
    """
    u = np.asarray(u, dtype=float)
    if h <= 0:
        raise ValueError("grid step must be positive")
    if u.ndim < 2 or u.shape[-2] < 2 or u.shape[-1] < 2:
        raise ValueError(f"gradient needs at least a 2x2 grid, got shape {u.shape}")
    g = np.zeros(u.shape + (2,))
    g[..., :-1, :, 0] = u[..., 1:, :] - u[..., :-1, :]
    g[..., :, :-1, 1] = u[..., :, 1:] - u[..., :, :-1]
    if h != 1.0:
        g /= h
    return g


def div_field(p, h=1.0):
    """Backward-difference divergence, the negative adjoint of :func:`grad_image`."""
    p = np.asarray(p, dtype=float)
    if h <= 0:
        raise ValueError("grid step must be positive")
    if p.ndim < 3 or p.shape[-1] != 2:
        raise ValueError(f"expected a field of shape (..., H, W, 2), got {p.shape}")
    py, px = p[..., 0], p[..., 1]
    d = np.zeros(p.shape[:-1])
    d[..., :-1, :] += py[..., :-1, :]
    d[..., 1:, :] -= py[..., :-1, :]
    d[..., :, :-1] += px[..., :, :-1]
    d[..., :, 1:] -= px[..., :, :-1]
    if h != 1.0:
        d /= h
    return d


def laplacian(u, h=1.0):
    return div_field(grad_image(u, h), h)


def _to_blocks(a, b):
    """``(H, W, ...)`` -> ``(H/b, W/b, b, b, ...)`` without copying semantics."""
    H, W = a.shape[:2]
    rest = a.shape[2:]
    a = a.reshape((H // b, b, W // b, b) + rest)
    return np.moveaxis(a, 2, 1)


def _from_blocks(a):
    Hb, Wb, b, _ = a.shape[:4]
    rest = a.shape[4:]
    return np.moveaxis(a, 1, 2).reshape((Hb * b, Wb * b) + rest)


def grad_blockwise(u, b, h=1.0):
    """Gradient computed independently inside each ``b x b`` block."""
    return _from_blocks(grad_image(_to_blocks(u, b), h))


def div_blockwise(p, b, h=1.0):
    blocks = _to_blocks(p, b)
    return _from_blocks(div_field(blocks, h))


def _diff_1d(m, b=None):
    """Forward differences on ``m`` points, zero on the last point of every ``b``-run."""
    b = m if b is None else b
    run = sparse.diags([-np.ones(b), np.ones(b - 1)], [0, 1], format="lil")
    run[b - 1, b - 1] = 0.0
    return sparse.kron(sparse.identity(m // b), run.tocsr(), format="csr")


def grad_matrix(H, W, h=1.0, batch=None):
    """Sparse ``(2HW, HW)`` matrix of :func:`grad_image` (or its blockwise form).

    Rows follow the flattened ``(H, W, 2)`` field layout.
    """
    vert = sparse.kron(_diff_1d(H, batch), sparse.identity(W))
    horiz = sparse.kron(sparse.identity(H), _diff_1d(W, batch))
    G = sparse.vstack([vert, horiz]).tocsr()
    # interleave: row 2k is the vertical, 2k+1 the horizontal difference of pixel k
    order = np.arange(2 * H * W).reshape(2, H * W).T.ravel()
    return (G[order] / h).tocsr()


def _dual_solve(problem, tol=1e-12):
    """Solve ``min_p ||div p + lam g||^2 / (2 lam)`` over ``|p(x)| <= 1`` by conic programming.

    Returns the primal-dual point ``(g + div p / lam, p)``.  The solver's own
    accuracy is not trusted; callers polish and certify the result.
    """
    import cvxpy as cp

    H, W = problem.info["shape"]
    lam, h, b = problem.info["lam"], problem.info["h"], problem.info["batch"]
    g = problem.component.g.ravel()
    D = -grad_matrix(H, W, h, b).T.tocsr()
    p = cp.Variable(2 * H * W)
    cost = cp.sum_squares(D @ p + lam * g) / (2.0 * lam)
    prob = cp.Problem(cp.Minimize(cost), [cp.norm(cp.reshape(p, (H * W, 2), order="C"), 2, axis=1) <= 1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol, max_iter=500)
    if p.value is None:
        raise RuntimeError(f"conic solve failed with status {prob.status}")
    pv = np.asarray(p.value, dtype=float)
    norms = np.linalg.norm(pv.reshape(-1, 2), axis=1)
    pv = (pv.reshape(-1, 2) / np.maximum(norms, 1.0)[:, None]).ravel()
    return np.concatenate([g + D @ pv / lam, pv])


@dataclass(frozen=True)
class DenoisingSpec:
    """TV denoising setup.  ``batch=None`` keeps the image as one component."""

    noisy: np.ndarray
    lam: float = 8.0
    batch: Optional[int] = 8
    h: float = 1.0

    def __post_init__(self):
        img = np.asarray(self.noisy, dtype=float)
        if img.ndim != 2:
            raise ValueError("the noisy image must be a 2-D grid")
        if self.lam <= 0 or self.h <= 0:
            raise ValueError("lam and h must be positive")
        if self.batch is not None:
            H, W = img.shape
            if self.batch < 2 or H % self.batch or W % self.batch:
                raise ValueError(f"batch side {self.batch} must divide the {H}x{W} grid")


class DenoisingOperator:
    """Components of ``F(u, p) = (-div p + lam (u - g), -grad u)``.

    Component ``i`` owns the pixels of block ``i`` (row-major block order) and
    evaluates both blocks of ``F`` there with the gradient/divergence of the
    isolated block, scaled by ``n`` so that the component mean is the
    block-local operator.
    """

    def __init__(self, noisy, lam, batch, h):
        self.g = np.array(noisy, dtype=float)
        self.g.setflags(write=False)
        self.H, self.W = self.g.shape
        self.lam, self.h = float(lam), float(h)
        self.b = batch
        self.hw = self.H * self.W
        if batch is None:
            self.n = 1
            self.grid_cols = 1
        else:
            self.grid_cols = self.W // batch
            self.n = (self.H // batch) * self.grid_cols

    @property
    def dim(self):
        return 3 * self.hw

    def split(self, z):
        return z[: self.hw].reshape(self.H, self.W), z[self.hw :].reshape(self.H, self.W, 2)

    def _local(self, u, p, g):
        fu = -div_field(p, self.h) + self.lam * (u - g)
        fp = -grad_image(u, self.h)
        return fu, fp

    def __call__(self, i, z):
        u, p = self.split(z)
        if self.b is None:
            fu, fp = self._local(u, p, self.g)
            return np.concatenate([fu.ravel(), fp.ravel()])
        bi, bj = divmod(i, self.grid_cols)
        rows = slice(bi * self.b, (bi + 1) * self.b)
        cols = slice(bj * self.b, (bj + 1) * self.b)
        fu, fp = self._local(u[rows, cols], p[rows, cols], self.g[rows, cols])
        out = np.zeros(self.dim)
        ou, op = self.split(out)
        ou[rows, cols] = self.n * fu
        op[rows, cols] = self.n * fp
        return out

    def full(self, z):
        u, p = self.split(z)
        if self.b is None:
            fu, fp = self._local(u, p, self.g)
        else:
            fu = -div_blockwise(p, self.b, self.h) + self.lam * (u - self.g)
            fp = -grad_blockwise(u, self.b, self.h)
        return np.concatenate([fu.ravel(), fp.ravel()])


def denoising_objective(u, p, noisy, lam, h=1.0, batch=None):
    """Smooth part of the saddle function, ``-<u, div p> + lam/2 ||u - g||^2``."""
    div = div_field(p, h) if batch is None else div_blockwise(p, batch, h)
    r = u - noisy
    return float(-np.sum(u * div) + 0.5 * lam * np.sum(r * r))


def make_denoising(spec: DenoisingSpec) -> FiniteSumVI:
    """Build the TV denoising VI in ``z = (u, p)``, ``g = 0 x indicator(|p(x)| <= 1)``.

    Starts from ``u = noisy``, ``p = 0``.
    """
    op = DenoisingOperator(spec.noisy, spec.lam, spec.batch, spec.h)
    hw = op.hw
    bound = spec.lam + np.sqrt(8.0) / spec.h
    constants = Constants(L=op.n * bound, mu=0.0, L_full=bound, source="analytic bound")
    start = np.concatenate([op.g.ravel(), np.zeros(2 * hw)])
    return FiniteSumVI(
        n=op.n,
        dim=op.dim,
        component=op,
        full=op.full,
        regularizer=ProductProx(ZeroProx(), BallIndicator(1.0, block=2), split=hw),
        constants=constants,
        layout=BlockLayout(hw, 2 * hw),
        start=start,
        presolve=_dual_solve,
        name="denoise",
        info={"shape": (op.H, op.W), "lam": spec.lam, "batch": spec.batch, "h": spec.h},
    )


def image_of(problem, z):
    """Primal image block of a denoising iterate."""
    H, W = problem.info["shape"]
    return np.asarray(z)[: H * W].reshape(H, W)


def psnr(u, clean, peak=1.0):
    mse = float(np.mean((np.asarray(u) - np.asarray(clean)) ** 2))
    if mse == 0:
        return np.inf
    return 10.0 * np.log10(peak**2 / mse)
