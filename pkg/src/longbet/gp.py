"""Gaussian-process utilities over the integer exposure grid.

The squared-exponential kernel supplies the prior covariance of the exposure
factor and drives its extrapolation beyond the longest observed exposure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import NumericalError

__all__ = [
    "GPKernel",
    "kernel_matrix",
    "cholesky_jitter",
    "gp_conditional",
    "extrapolate_beta",
    "forecast_att",
]

JITTER_START = 1e-10
JITTER_MAX = 1e-6


@dataclass(frozen=True)
class GPKernel:
    """``k(s, s') = variance * exp(-(s - s')**2 / (2 * length_scale**2))``."""

    variance: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if not (self.variance > 0 and self.length_scale > 0):
            raise ValueError(f"kernel parameters must be positive: {self}")

    def __call__(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float).ravel()
        b = np.asarray(b, dtype=float).ravel()
        d = a[:, None] - b[None, :]
        return self.variance * np.exp(-0.5 * (d / self.length_scale) ** 2)

    @classmethod
    def default_for(cls, t0: int, t1: int, sigma: float = 1.0) -> "GPKernel":
        return cls(variance=sigma**2, length_scale=(t1 - t0) / 2)


def kernel_matrix(points, kernel: GPKernel, jitter: float = 0.0) -> np.ndarray:
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    points = np.asarray(points, dtype=float).ravel()
    K = kernel(points, points)
    # exact symmetry: mirror the upper triangle
    iu = np.triu_indices(len(points), 1)
    K[(iu[1], iu[0])] = K[iu]
    K[np.diag_indices_from(K)] = kernel.variance + jitter
    return K


def cholesky_jitter(A: np.ndarray, start: float = JITTER_START, max_jitter: float = JITTER_MAX) -> np.ndarray:
    """Lower Cholesky factor of ``A``, adding diagonal jitter on failure.

    Jitter grows tenfold from ``start`` to ``max_jitter``; beyond that a
    :class:`NumericalError` is raised.
    """
    A = np.asarray(A, dtype=float)
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        pass
    eye = np.eye(A.shape[0])
    jitter = start
    while jitter <= max_jitter * (1 + 1e-9):
        try:
            return linalg.cholesky(A + jitter * eye, lower=True)
        except linalg.LinAlgError:
            jitter *= 10
    raise NumericalError(f"matrix not positive definite even with jitter {max_jitter:g}")


def gp_conditional(train_points, train_values, query_points, kernel: GPKernel,
                   noise_var: float = 0.0):
    """Posterior mean and covariance of the GP at ``query_points``.

    Returns
    -------
    mean : ndarray, shape (m,)
    cov : ndarray, shape (m, m)
    """
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    xt = np.asarray(train_points, dtype=float).ravel()
    yt = np.asarray(train_values, dtype=float).ravel()
    xq = np.asarray(query_points, dtype=float).ravel()
    if xt.shape != yt.shape:
        raise ValueError("train_points and train_values must align")
    Ktt = kernel_matrix(xt, kernel, jitter=noise_var)
    Kqt = kernel(xq, xt)
    Kqq = kernel_matrix(xq, kernel)
    L = cholesky_jitter(Ktt)
    A = linalg.solve_triangular(L, Kqt.T, lower=True)
    w = linalg.solve_triangular(L, yt, lower=True)
    mean = A.T @ w
    cov = Kqq - A.T @ A
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def _draw_rng(seed: int, d: int) -> np.random.Generator:
    # forecast substream of the master seed, one child per posterior draw
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, d)))


def extrapolate_beta(fit, horizon: int, seed: int | None = None) -> np.ndarray:
    """Extend each retained exposure-factor draw to exposures ``0..s_max+horizon``.

    Each draw is treated as exact function values on the observed grid; the
    new points are sampled jointly from the noiseless GP conditional.

    Returns
    -------
    ndarray, shape (n_draws, s_max + 1 + horizon)
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    seed = fit.config.seed if seed is None else seed
    kernel = fit.gp_kernel
    grid = np.arange(fit.s_max + 1, dtype=float)
    new = np.arange(fit.s_max + 1, fit.s_max + 1 + horizon, dtype=float)
    # the conditional covariance does not depend on the draw
    Ktt = kernel_matrix(grid, kernel)
    L = cholesky_jitter(Ktt)
    A = linalg.solve_triangular(L, kernel(new, grid).T, lower=True)
    cov = kernel_matrix(new, kernel) - A.T @ A
    cov = 0.5 * (cov + cov.T)
    Lc = cholesky_jitter(cov)
    out = np.empty((fit.n_draws, grid.size + horizon))
    for d in range(fit.n_draws):
        beta = fit.beta[d]
        mean = A.T @ linalg.solve_triangular(L, beta, lower=True)
        z = _draw_rng(seed, d).standard_normal(horizon)
        out[d, : grid.size] = beta
        out[d, grid.size:] = mean + Lc @ z
    return out


def forecast_att(fit, panel, view, horizon: int, level: float = 0.95, seed: int | None = None):
    """Cohort ATT draws for the ``horizon`` periods after ``t1``.

    The treatment forest is evaluated with calendar time held at ``t1``; all
    forward dynamics come from the extrapolated exposure factor.
    """
    from .model import AttTable, cohort_members
    from .metrics import pointwise_intervals

    if horizon < 1:
        raise ValueError("horizon must be at least 1; use att_table for in-sample periods")
    beta_ext = extrapolate_beta(fit, horizon, seed)
    groups = cohort_members(view)
    keys, cols = [], []
    for e, units in groups.items():
        x = panel.x[units]
        for h in range(1, horizon + 1):
            t = fit.t1 + h
            S = t - e + 1
            nu_s = fit.nu_draws(x, np.full(len(units), fit.t1), np.full(len(units), S))
            nu_0 = fit.nu_draws(x, np.full(len(units), fit.t1), np.zeros(len(units)))
            tau = beta_ext[:, [S]] * nu_s - beta_ext[:, [0]] * nu_0
            keys.append((e, t, h))
            cols.append(tau.mean(axis=1))
    draws = np.column_stack(cols) if cols else np.empty((fit.n_draws, 0))
    lo, hi = pointwise_intervals(draws, level)
    return AttTable(
        cohort=np.array([k[0] for k in keys], dtype=np.int64),
        time=np.array([k[1] for k in keys], dtype=np.int64),
        draws=draws,
        lo=lo,
        hi=hi,
        level=level,
        interval_kind="pointwise",
        horizon_step=np.array([k[2] for k in keys], dtype=np.int64),
    )
