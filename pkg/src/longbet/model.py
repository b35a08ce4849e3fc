"""Two-forest Gibbs sampler with an exposure-indexed scale factor.

Outcome model, for unit ``i`` at period ``t`` with exposure ``S_it``::

    y_it = alpha * mu(x_i, t) + beta[S_it] * nu(x_i, S_it, t) + eps_it

``mu`` and ``nu`` are sums of trees, ``alpha ~ N(0, 1)``, ``beta`` has a
squared-exponential GP prior over the exposure grid ``0..s_max`` and
``eps ~ N(0, sigma2)``. The effect of ``S`` periods of exposure is::

    tau_t(x, S) = beta[S] * nu(x, S, t) - beta[0] * nu(x, 0, t)
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg

from . import forest as fst
from .exceptions import ConfigError
from .forest import Axis, Design, Forest, ForestParams
from .gp import GPKernel, cholesky_jitter, kernel_matrix
from .metrics import pointwise_intervals, simultaneous_intervals
from .panel import ExposureView, PanelDataset

__all__ = [
    "LongBetConfig",
    "LongBetFit",
    "AttTable",
    "CattTable",
    "fit",
    "predict_tau",
    "att_table",
    "catt_table",
    "beta_conditional",
    "sample_alpha",
    "sample_beta",
    "sample_sigma2",
    "cohort_members",
]

log = logging.getLogger(__name__)

SIGMA2_PRIOR_SHAPE = 3.0


@dataclass(frozen=True)
class LongBetConfig:
    """Sampler settings.

    ``gp_lambda=None`` resolves to ``(t1 - t0) / 2`` of the panel being fit.
    Forest parameters default to :class:`ForestParams` with the matching
    tree counts.
    """

    num_sweeps: int = 120
    num_burnin: int = 20
    num_trees_pr: int = 50
    num_trees_trt: int = 50
    forest_params_pr: ForestParams | None = None
    forest_params_trt: ForestParams | None = None
    gp_sigma: float = 1.0
    gp_lambda: float | None = None
    use_propensity: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("num_sweeps", "num_trees_pr", "num_trees_trt"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.num_burnin < self.num_sweeps:
            raise ConfigError(f"need 0 <= num_burnin < num_sweeps, got {self.num_burnin} and {self.num_sweeps}")
        if self.gp_sigma <= 0 or (self.gp_lambda is not None and self.gp_lambda <= 0):
            raise ConfigError("gp_sigma and gp_lambda must be positive")
        for name, n_trees in (("forest_params_pr", self.num_trees_pr), ("forest_params_trt", self.num_trees_trt)):
            fp = getattr(self, name)
            if fp is None:
                object.__setattr__(self, name, ForestParams(num_trees=n_trees))
            elif fp.num_trees != n_trees:
                object.__setattr__(self, name, replace(fp, num_trees=n_trees))

    @property
    def n_retained(self) -> int:
        return self.num_sweeps - self.num_burnin

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LongBetConfig":
        d = dict(d)
        for name in ("forest_params_pr", "forest_params_trt"):
            if d.get(name) is not None:
                d[name] = ForestParams(**d[name])
        return cls(**d)


def _axes(panel: PanelDataset, extra_cov: tuple[str, ...] = ()) -> tuple[Axis, ...]:
    out = [Axis(name, fst.COVARIATE, kind.levels) for name, kind in zip(panel.covariate_names, panel.covariate_kinds)]
    out += [Axis(name) for name in extra_cov]
    return tuple(out)


def _columns(x, t, s=None):
    cols = [np.asarray(x, float), np.asarray(t, float)[:, None]]
    if s is not None:
        cols.append(np.asarray(s, float)[:, None])
    return np.hstack(cols)


@dataclass(eq=False)
class LongBetFit:
    """Retained posterior draws.

    Forest outputs are stored on the outcome scale, so fitted values are
    ``y_mean + alpha[d] * mu_hat[d] + beta[d][S] * nu_hat[d]``.

    Attributes
    ----------
    mu_hat, nu_hat : ndarray, shape (n_draws, n_units, T)
        Prognostic and treatment forest outputs at the observed (t, S_it).
    alpha : ndarray, shape (n_draws,)
    beta : ndarray, shape (n_draws, s_max + 1)
    sigma2 : ndarray, shape (n_draws,)
        Noise variance on the outcome scale.
    forests_pr, forests_trt : list of Forest
        One per retained sweep, for prediction at new points.
    """

    config: LongBetConfig
    t0: int
    t1: int
    s_max: int
    y_mean: float
    y_sd: float
    axes_pr: tuple[Axis, ...]
    axes_trt: tuple[Axis, ...]
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    forests_pr: list
    forests_trt: list
    gp_lambda: float
    mu_hat: np.ndarray | None = None
    nu_hat: np.ndarray | None = None
    propensity: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    @property
    def gp_kernel(self) -> GPKernel:
        return GPKernel(self.config.gp_sigma**2, self.gp_lambda)

    def nu_draws(self, x, t, s) -> np.ndarray:
        """Treatment-forest output per draw, shape (n_draws, m)."""
        X = fst.encode(_columns(np.atleast_2d(x), np.atleast_1d(t), np.atleast_1d(s)), self.axes_trt)
        out = np.empty((self.n_draws, X.shape[0]))
        for d, f in enumerate(self.forests_trt):
            out[d] = f.predict_encoded(X)
        return out

    def mu_draws(self, x, t, propensity=None) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.propensity is not None:
            if propensity is None:
                raise ValueError("fit used a propensity covariate; pass propensity")
            x = np.column_stack([x, np.atleast_1d(propensity)])
        X = fst.encode(_columns(x, np.atleast_1d(t)), self.axes_pr)
        out = np.empty((self.n_draws, X.shape[0]))
        for d, f in enumerate(self.forests_pr):
            out[d] = f.predict_encoded(X)
        return out

    def tau_draws(self, x, t, s) -> np.ndarray:
        """Effect draws at each query point, shape (n_draws, m)."""
        x = np.atleast_2d(np.asarray(x, float))
        t = np.broadcast_to(np.asarray(t), (x.shape[0],))
        s = np.broadcast_to(np.asarray(s), (x.shape[0],)).astype(np.int64)
        if np.any(s < 0) or np.any(s > self.s_max):
            raise ValueError(f"exposure outside 0..{self.s_max}; use gp.forecast_att for longer exposures")
        nu_s = self.nu_draws(x, t, s)
        nu_0 = self.nu_draws(x, t, np.zeros_like(s))
        return self.beta[:, s] * nu_s - self.beta[:, [0]] * nu_0

    def fitted(self) -> np.ndarray:
        """Posterior mean of the in-sample regression function, shape (n_units, T)."""
        if self.mu_hat is None:
            raise ValueError("fit holds no in-sample predictions")
        s = self.extra["s"]
        out = self.alpha[:, None, None] * self.mu_hat + self.beta[:, s] * self.nu_hat
        return self.y_mean + out.mean(axis=0)

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": "longbet-fit/1",
            "config": self.config.to_dict(),
            "t0": self.t0,
            "t1": self.t1,
            "s_max": self.s_max,
            "y_mean": self.y_mean,
            "y_sd": self.y_sd,
            "gp_lambda": self.gp_lambda,
            "axes_pr": [a.to_dict() for a in self.axes_pr],
            "axes_trt": [a.to_dict() for a in self.axes_trt],
            "propensity": None if self.propensity is None else self.propensity.tolist(),
            "sweeps": [
                {
                    "alpha": float(self.alpha[d]),
                    "beta": self.beta[d].tolist(),
                    "sigma2": float(self.sigma2[d]),
                    "forest_pr": self.forests_pr[d].to_dict(include_axes=False),
                    "forest_trt": self.forests_trt[d].to_dict(include_axes=False),
                }
                for d in range(self.n_draws)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, panel: PanelDataset | None = None) -> "LongBetFit":
        axes_pr = tuple(Axis.from_dict(a) for a in d["axes_pr"])
        axes_trt = tuple(Axis.from_dict(a) for a in d["axes_trt"])
        sweeps = d["sweeps"]
        fit = cls(
            config=LongBetConfig.from_dict(d["config"]),
            t0=d["t0"],
            t1=d["t1"],
            s_max=d["s_max"],
            y_mean=d["y_mean"],
            y_sd=d["y_sd"],
            axes_pr=axes_pr,
            axes_trt=axes_trt,
            alpha=np.array([s["alpha"] for s in sweeps], dtype=float),
            beta=np.array([s["beta"] for s in sweeps], dtype=float).reshape(len(sweeps), d["s_max"] + 1),
            sigma2=np.array([s["sigma2"] for s in sweeps], dtype=float),
            forests_pr=[Forest.from_dict(s["forest_pr"], axes_pr) for s in sweeps],
            forests_trt=[Forest.from_dict(s["forest_trt"], axes_trt) for s in sweeps],
            gp_lambda=d["gp_lambda"],
            propensity=None if d.get("propensity") is None else np.asarray(d["propensity"], float),
        )
        if panel is not None:
            fit.attach_panel(panel)
        return fit

    def attach_panel(self, panel: PanelDataset) -> None:
        """Recompute ``mu_hat``/``nu_hat`` on the training panel."""
        from .panel import derive_exposure

        view = derive_exposure(panel)
        n, T = panel.y.shape
        times = np.tile(panel.times, n)
        x = np.repeat(panel.x, T, axis=0)
        self.nu_hat = self.nu_draws(x, times, view.s.ravel()).reshape(self.n_draws, n, T)
        prop = None if self.propensity is None else np.repeat(self.propensity, T)
        self.mu_hat = self.mu_draws(x, times, prop).reshape(self.n_draws, n, T)
        self.extra["s"] = view.s

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, panel: PanelDataset | None = None) -> "LongBetFit":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), panel)


def beta_conditional(K: np.ndarray, prec_diag: np.ndarray, lin: np.ndarray):
    """Mean and covariance of ``N(0, K)`` prior times a diagonal Gaussian likelihood.

    The posterior precision is ``inv(K) + diag(prec_diag)`` and the mean is
    ``cov @ lin``. Computed as ``K - K W (I + W K W)^-1 W K`` with
    ``W = sqrt(diag(prec_diag))``, which stays stable for near-singular ``K``.
    """
    K = np.asarray(K, float)
    w = np.sqrt(np.asarray(prec_diag, float))
    B = np.eye(K.shape[0]) + w[:, None] * K * w[None, :]
    L = cholesky_jitter(B)
    V = linalg.solve_triangular(L, w[:, None] * K, lower=True)
    cov = K - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return cov @ np.asarray(lin, float), cov


def sample_alpha(mu, y, sigma2: float, rng: np.random.Generator) -> float:
    """Draw ``alpha`` in ``y = alpha * mu + N(0, sigma2)`` under a N(0, 1) prior."""
    v = 1.0 / (1.0 + mu @ mu / sigma2)
    m = v * (mu @ y) / sigma2
    return m + np.sqrt(v) * rng.standard_normal()


def sample_beta(K, nu, y, s_rows, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``beta`` in ``y = beta[s_rows] * nu + N(0, sigma2)`` under a N(0, K) prior."""
    m = K.shape[0]
    prec = np.bincount(s_rows, weights=nu * nu, minlength=m) / sigma2
    lin = np.bincount(s_rows, weights=nu * y, minlength=m) / sigma2
    mean, cov = beta_conditional(K, prec, lin)
    return mean + cholesky_jitter(cov) @ rng.standard_normal(m)


def sample_sigma2(resid, a0: float, b0: float, rng: np.random.Generator) -> float:
    """Draw the noise variance from its IG(a0 + N/2, b0 + SSR/2) conditional."""
    return (b0 + 0.5 * (resid @ resid)) / rng.gamma(a0 + 0.5 * resid.shape[0])


def _propensity(x: np.ndarray, treated: np.ndarray, seed: int) -> np.ndarray:
    from sklearn.ensemble import RandomForestClassifier
    from sklearn.model_selection import StratifiedKFold, cross_val_predict

    if treated.all() or not treated.any():
        return np.full(len(treated), treated.mean())
    clf = RandomForestClassifier(n_estimators=200, min_samples_leaf=10, random_state=seed)
    n_splits = int(min(5, np.bincount(treated.astype(int)).min()))
    if n_splits < 2:
        return np.full(len(treated), treated.mean())
    cv = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=seed)
    return cross_val_predict(clf, x, treated.astype(int), cv=cv, method="predict_proba")[:, 1]


def fit(panel: PanelDataset, view: ExposureView, config: LongBetConfig | None = None,
        rng: np.random.Generator | None = None, propensity=None) -> LongBetFit:
    """Run the Gibbs sampler and keep the post-burn-in sweeps.

    Parameters
    ----------
    panel, view : PanelDataset, ExposureView
        Training data and its exposure times.
    config : LongBetConfig, optional
    rng : numpy Generator, optional
        Defaults to one seeded from ``config.seed``.
    propensity : array, shape (n_units,), optional
        Only used with ``config.use_propensity``; estimated by cross-fitting
        when omitted.
    """
    config = LongBetConfig() if config is None else config
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    n, T = panel.y.shape
    N = n * T
    s_obs = np.asarray(view.s, dtype=np.int64)
    s_max = int(s_obs.max())
    times = np.tile(panel.times, n).astype(float)
    x_rows = np.repeat(panel.x, T, axis=0)
    s_rows = s_obs.ravel()

    pi_hat = None
    extra_cov: tuple[str, ...] = ()
    if config.use_propensity:
        if propensity is None:
            propensity = _propensity(panel.x, view.treated, config.seed)
        pi_hat = np.asarray(propensity, dtype=float)
        extra_cov = ("pihat",)
    axes_cov = _axes(panel, extra_cov)
    axes_pr = axes_cov + (Axis("t", fst.CALENDAR_TIME),)
    axes_trt = _axes(panel) + (Axis("t", fst.CALENDAR_TIME), Axis("s", fst.EXPOSURE_TIME))
    x_pr = x_rows if pi_hat is None else np.column_stack([x_rows, np.repeat(pi_hat, T)])
    design_pr = Design(_columns(x_pr, times), axes_pr)
    design_trt = Design(_columns(x_rows, times, s_rows), axes_trt)

    y_mean = float(panel.y.mean())
    y_sd = float(panel.y.std())
    if not y_sd > 0:
        y_sd = 1.0
    ys = (panel.y.ravel() - y_mean) / y_sd

    fp_pr, fp_trt = config.forest_params_pr, config.forest_params_trt
    tau_pr, tau_trt = fp_pr.resolved_tau(1.0), fp_trt.resolved_tau(1.0)
    gp_lambda = config.gp_lambda if config.gp_lambda is not None else (panel.t1 - panel.t0) / 2
    K = kernel_matrix(np.arange(s_max + 1), GPKernel(config.gp_sigma**2, gp_lambda))
    # sigma2 ~ IG(a0, b0) with prior mode b0 / (a0 + 1) equal to var(ys) = 1
    a0 = SIGMA2_PRIOR_SHAPE
    b0 = a0 + 1.0

    g_pr = np.zeros((fp_pr.num_trees, N))
    g_trt = np.zeros((fp_trt.num_trees, N))
    mu = np.zeros(N)
    nu = np.zeros(N)
    alpha = 1.0
    beta = np.ones(s_max + 1)
    sigma2 = 1.0
    bS = beta[s_rows]
    resid = ys.copy()

    keep = config.n_retained
    out_alpha = np.empty(keep)
    out_beta = np.empty((keep, s_max + 1))
    out_sigma2 = np.empty(keep)
    out_mu = np.empty((keep, n, T))
    out_nu = np.empty((keep, n, T))
    forests_pr, forests_trt = [], []
    ones = np.ones(N)

    for sweep in range(config.num_sweeps):
        # prognostic trees: resid = ys - alpha*mu - bS*nu throughout
        w = alpha * ones
        trees_pr = []
        for l in range(fp_pr.num_trees):
            resid += alpha * g_pr[l]
            tree, f = fst.grow_from_root(design_pr, resid, sigma2, fp_pr, rng, tau_mu=tau_pr,
                                         weights=w, return_fitted=True)
            resid -= alpha * f
            g_pr[l] = f
            trees_pr.append(tree)
        mu = g_pr.sum(axis=0)

        y_a = ys - bS * nu
        alpha = sample_alpha(mu, y_a, sigma2, rng)
        resid = y_a - alpha * mu

        # treatment trees, row multiplier beta[S_it]
        trees_trt = []
        for l in range(fp_trt.num_trees):
            resid += bS * g_trt[l]
            tree, f = fst.grow_from_root(design_trt, resid, sigma2, fp_trt, rng, tau_mu=tau_trt,
                                         weights=bS, return_fitted=True)
            resid -= bS * f
            g_trt[l] = f
            trees_trt.append(tree)
        nu = g_trt.sum(axis=0)

        y_b = ys - alpha * mu
        beta = sample_beta(K, nu, y_b, s_rows, sigma2, rng)
        bS = beta[s_rows]
        resid = y_b - bS * nu

        sigma2 = sample_sigma2(resid, a0, b0, rng)

        if sweep >= config.num_burnin:
            d = sweep - config.num_burnin
            out_alpha[d] = alpha
            out_beta[d] = beta
            out_sigma2[d] = sigma2 * y_sd**2
            out_mu[d] = (mu * y_sd).reshape(n, T)
            out_nu[d] = (nu * y_sd).reshape(n, T)
            forests_pr.append(Forest.from_trees(trees_pr, axes_pr).scaled(y_sd))
            forests_trt.append(Forest.from_trees(trees_trt, axes_trt).scaled(y_sd))
        log.debug("sweep %d alpha=%.3f sigma2=%.4f", sweep, alpha, sigma2 * y_sd**2)

    return LongBetFit(
        config=config,
        t0=panel.t0,
        t1=panel.t1,
        s_max=s_max,
        y_mean=y_mean,
        y_sd=y_sd,
        axes_pr=axes_pr,
        axes_trt=axes_trt,
        alpha=out_alpha,
        beta=out_beta,
        sigma2=out_sigma2,
        forests_pr=forests_pr,
        forests_trt=forests_trt,
        gp_lambda=gp_lambda,
        mu_hat=out_mu,
        nu_hat=out_nu,
        propensity=pi_hat,
        extra={"s": s_obs},
    )


def predict_tau(fit: LongBetFit, x, t, S) -> np.ndarray:
    """Posterior draws of the effect of ``S`` periods of exposure at ``(x, t)``."""
    if not 0 <= S <= fit.s_max:
        raise ValueError(f"S={S} outside 0..{fit.s_max}; use gp.forecast_att for longer exposures")
    return fit.tau_draws(np.atleast_2d(x), [t], [S])[:, 0]


@dataclass(eq=False)
class AttTable:
    """Cohort-by-time effect estimates with posterior draws and intervals.

    ``estimate`` overrides the draw mean as the point estimate; tables built
    from a CATT table use the cohort mean of the CATT points, which matches
    the draw mean up to rounding.
    """

    cohort: np.ndarray
    time: np.ndarray
    draws: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float = 0.95
    interval_kind: str = "pointwise"
    horizon_step: np.ndarray | None = None
    estimate: np.ndarray | None = None

    @property
    def point(self) -> np.ndarray:
        if self.estimate is not None:
            return self.estimate
        return self.draws.mean(axis=0) if self.draws.shape[1] else np.empty(0)

    def __len__(self) -> int:
        return self.cohort.shape[0]

    def keys(self) -> list[tuple[int, int]]:
        return list(zip(self.cohort.tolist(), self.time.tolist()))

    def as_dict(self) -> dict:
        point = self.point
        return {k: (point[j], self.lo[j], self.hi[j]) for j, k in enumerate(self.keys())}

    def with_intervals(self, level: float = 0.95, simultaneous: bool = False) -> "AttTable":
        if simultaneous:
            lo, hi = simultaneous_intervals(self.draws, 1 - level)
        else:
            lo, hi = pointwise_intervals(self.draws, level)
        return replace(self, lo=lo, hi=hi, level=level,
                       interval_kind="simultaneous-sidak" if simultaneous else "pointwise")

    def to_csv(self, path) -> None:
        point = self.point
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.horizon_step is None:
                w.writerow(["cohort", "time", "estimate", "lo", "hi"])
                for j in range(len(self)):
                    w.writerow([int(self.cohort[j]), int(self.time[j]), repr(float(point[j])),
                                repr(float(self.lo[j])), repr(float(self.hi[j]))])
            else:
                w.writerow(["cohort", "time", "horizon_step", "estimate", "lo", "hi"])
                for j in range(len(self)):
                    w.writerow([int(self.cohort[j]), int(self.time[j]), int(self.horizon_step[j]),
                                repr(float(point[j])), repr(float(self.lo[j])), repr(float(self.hi[j]))])


@dataclass(eq=False)
class CattTable:
    """Unit-by-time effect estimates for treated cells, pointwise intervals."""

    unit: np.ndarray
    time: np.ndarray
    draws: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float = 0.95
    unit_ids: tuple = ()

    @property
    def point(self) -> np.ndarray:
        return self.draws.mean(axis=0) if self.draws.shape[1] else np.empty(0)

    def __len__(self) -> int:
        return self.unit.shape[0]

    def to_csv(self, path) -> None:
        point = self.point
        ids = self.unit_ids or None
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", "time", "estimate", "lo", "hi"])
            for j in range(len(self)):
                u = ids[self.unit[j]] if ids else int(self.unit[j])
                w.writerow([u, int(self.time[j]), repr(float(point[j])),
                            repr(float(self.lo[j])), repr(float(self.hi[j]))])


def cohort_members(view: ExposureView) -> dict[int, np.ndarray]:
    from .panel import cohorts

    return {e: np.asarray(units, dtype=np.int64) for e, units in cohorts(view).items()}


def _treated_tau(fit: LongBetFit, panel: PanelDataset, view: ExposureView):
    """Effect draws for every treated (unit, period) cell, row-major."""
    units, cols = np.nonzero(view.s > 0)
    times = panel.t0 + cols
    if units.size == 0:
        return units, times, np.empty((fit.n_draws, 0))
    return units, times, fit.tau_draws(panel.x[units], times, view.s[units, cols])


def catt_table(fit: LongBetFit, panel: PanelDataset, view: ExposureView, level: float = 0.95) -> CattTable:
    units, times, draws = _treated_tau(fit, panel, view)
    lo, hi = pointwise_intervals(draws, level)
    return CattTable(unit=units, time=times, draws=draws, lo=lo, hi=hi, level=level,
                     unit_ids=tuple(panel.unit_ids))


def att_from_catt(catt: CattTable, view: ExposureView, level: float = 0.95,
                  simultaneous: bool = False) -> AttTable:
    event = view.event_time[catt.unit]
    keys = sorted(set(zip(event.tolist(), catt.time.tolist())))
    cols, est = [], []
    catt_point = catt.point
    for e, t in keys:
        sel = (event == e) & (catt.time == t)
        cols.append(catt.draws[:, sel].mean(axis=1))
        est.append(catt_point[sel].mean())
    n_draws = catt.draws.shape[0]
    draws = np.column_stack(cols) if cols else np.empty((n_draws, 0))
    table = AttTable(
        cohort=np.array([k[0] for k in keys], dtype=np.int64),
        time=np.array([k[1] for k in keys], dtype=np.int64),
        draws=draws,
        lo=np.empty(len(keys)),
        hi=np.empty(len(keys)),
        estimate=np.array(est, dtype=float),
    )
    return table.with_intervals(level, simultaneous)


def att_table(fit: LongBetFit, panel: PanelDataset, view: ExposureView, level: float = 0.95,
              simultaneous: bool = False) -> AttTable:
    """Cohort ATT for every ``(e, t)`` with ``t >= e``.

    With ``simultaneous=True`` the per-cell level is Sidak-adjusted so that
    all cells are covered jointly at ``level``.
    """
    return att_from_catt(catt_table(fit, panel, view, level), view, level, simultaneous)
