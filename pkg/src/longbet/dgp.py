"""Simulated staggered-adoption panels with known effects.

Outcome for unit ``i`` at period ``t`` with exposure ``s``::

    y = eta(x_i, t) + 1{s > 0} * nu(x_i, e_i, s) + eps,   eps ~ N(0, noise_sd**2)

    eta = f_t + gamma(x)          (parallel trends)
        = f_t * gamma(x)          (non-parallel)
    gamma(x) = g(x4) + x1 * |x3 - 1|,  g(0) = 2, g(1) = -1
    nu = 2 * c_e * h(s)           (homogeneous)
       = (2 + x2 * x5) * c_e * h(s)  (heterogeneous)
    h(s) = s * exp(-s)

``f_t - 1`` is a stationary ARMA(1, 1) with ar=0.7, ma=-0.4. From
``treat_start`` on, each untreated unit adopts with per-period probability
``pi(x) = Phi(gamma(x)/2 - x1/2)**2 / 5 + u_i / 10``, ``u_i ~ U(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .panel import CovariateKind, ExposureView, PanelDataset, derive_exposure

__all__ = [
    "SCENARIOS",
    "COHORT_EFFECTS",
    "AR",
    "MA",
    "ScenarioConfig",
    "GeneratedPanel",
    "gen_covariates",
    "gamma",
    "gen_time_factor",
    "arma11_acf1",
    "eta",
    "nu",
    "propensity",
    "rollout",
    "generate",
    "future_att_truth",
]

SCENARIOS = (
    "parallel-homogeneous",
    "parallel-heterogeneous",
    "nonparallel-homogeneous",
    "nonparallel-heterogeneous",
)
COHORT_EFFECTS = {7: 1.3, 8: 1.2, 9: 1.1, 10: 1.0, 11: 0.9, 12: 0.8}
AR = 0.7
MA = -0.4
COVARIATE_NAMES = ("x1", "x2", "x3", "x4", "x5")
X4_LEVELS = (0.0, 1.0)
X5_LEVELS = (1.0, 2.0, 3.0)


@dataclass(frozen=True)
class ScenarioConfig:
    n_units: int = 500
    T: int = 12
    treat_start: int = 7
    prognostic: str = "parallel"
    effect: str = "homogeneous"
    noise_sd: float = 0.5
    seed: int = 0
    cohort_effects: dict = field(default_factory=lambda: dict(COHORT_EFFECTS))

    def __post_init__(self):
        if self.prognostic not in ("parallel", "nonparallel"):
            raise ValueError(f"prognostic must be 'parallel' or 'nonparallel', got {self.prognostic!r}")
        if self.effect not in ("homogeneous", "heterogeneous"):
            raise ValueError(f"effect must be 'homogeneous' or 'heterogeneous', got {self.effect!r}")
        if self.n_units < 1 or self.T < 1:
            raise ValueError("n_units and T must be positive")
        if not 1 <= self.treat_start <= self.T:
            raise ValueError(f"treat_start must lie in 1..T, got {self.treat_start}")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")

    @property
    def name(self) -> str:
        return f"{self.prognostic}-{self.effect}"

    @classmethod
    def from_name(cls, name: str, **kw) -> "ScenarioConfig":
        if name not in SCENARIOS:
            raise ValueError(f"unknown scenario {name!r}; valid: {', '.join(SCENARIOS)}")
        prognostic, effect = name.split("-")
        return cls(prognostic=prognostic, effect=effect, **kw)


@dataclass(eq=False)
class GeneratedPanel:
    panel: PanelDataset
    view: ExposureView
    tau_true: np.ndarray
    att_true: dict
    catt_true: dict
    f_t: np.ndarray
    propensity: np.ndarray
    config: ScenarioConfig | None = None


def _rng(seed) -> np.random.Generator:
    # dgp substream of the master seed
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def gen_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Columns x1..x5: three N(0, 1), Bernoulli(0.5), uniform over {1, 2, 3}."""
    if n < 1:
        raise ValueError("n must be positive")
    x = np.empty((n, 5))
    x[:, :3] = rng.standard_normal((n, 3))
    x[:, 3] = rng.integers(0, 2, n)
    x[:, 4] = rng.integers(1, 4, n)
    return x


def gamma(x) -> np.ndarray:
    """``g(x4) + x1 * |x3 - 1|``; object arrays (e.g. of ``Fraction``) stay exact."""
    x = np.asarray(x)
    if x.dtype != object:
        x = x.astype(float)
    g = np.where(x[..., 3] == 0, 2, -1)
    return g + x[..., 0] * np.abs(x[..., 2] - 1)


def arma11_acf1(ar: float = AR, ma: float = MA) -> float:
    return (1 + ar * ma) * (ar + ma) / (1 + ma**2 + 2 * ar * ma)


def gen_time_factor(T: int, rng: np.random.Generator, ar: float = AR, ma: float = MA) -> np.ndarray:
    """``1 + w_t`` with ``w`` a unit-innovation ARMA(1, 1) started in stationarity."""
    if T < 1:
        raise ValueError("T must be positive")
    e = rng.standard_normal(T)
    # w_1 = e_1 + (independent part with variance gamma0 - 1): exact joint
    # stationary start for (w_1, e_1)
    gamma0 = (1 + 2 * ar * ma + ma**2) / (1 - ar**2)
    w = np.empty(T)
    w[0] = e[0] + np.sqrt(gamma0 - 1) * rng.standard_normal()
    for t in range(1, T):
        w[t] = ar * w[t - 1] + e[t] + ma * e[t - 1]
    return w + 1.0


def eta(x, t, f, kind: str, t0: int = 1) -> np.ndarray:
    f = np.asarray(f)
    ft = (f if f.dtype == object else f.astype(float))[np.asarray(t) - t0]
    if kind == "parallel":
        return ft + gamma(x)
    if kind == "nonparallel":
        return ft * gamma(x)
    raise ValueError(f"unknown prognostic kind {kind!r}")


def nu(x, e, s, kind: str, cohort_effects: dict | None = None) -> np.ndarray:
    """Effect after ``s >= 1`` periods for a unit adopting at ``e``."""
    table = COHORT_EFFECTS if cohort_effects is None else cohort_effects
    x = np.asarray(x, dtype=float)
    e_arr = np.atleast_1d(np.asarray(e))
    s = np.asarray(s, dtype=float)
    if np.any(s < 1):
        raise ValueError("exposure must be at least 1")
    missing = sorted(set(e_arr.tolist()) - set(table))
    if missing:
        raise ValueError(f"no cohort effect for adoption period(s) {missing}")
    c = np.array([table[int(v)] for v in e_arr]).reshape(np.shape(e))
    h = s * np.exp(-s)
    if kind == "homogeneous":
        return 2.0 * c * h
    if kind == "heterogeneous":
        return (2.0 + x[..., 1] * x[..., 4]) * c * h
    raise ValueError(f"unknown effect kind {kind!r}")


def propensity(x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return norm.cdf(0.5 * gamma(x) - 0.5 * x[..., 0]) ** 2 / 5 + np.asarray(u) / 10


def rollout(propensities, treat_start: int, T: int, rng: np.random.Generator, t0: int = 1) -> np.ndarray:
    """Absorbing adoption with constant per-period hazard from ``treat_start``."""
    pi = np.asarray(propensities, dtype=float)
    if np.any(pi < 0) or np.any(pi > 1):
        raise ValueError("propensities must lie in [0, 1]")
    n = pi.shape[0]
    z = np.zeros((n, T), dtype=np.int8)
    first = treat_start - t0
    u = rng.random((n, max(T - first, 0)))
    treated = np.zeros(n, dtype=bool)
    for k in range(first, T):
        treated |= u[:, k - first] < pi
        z[:, k] = treated
    return z


def generate(config: ScenarioConfig) -> GeneratedPanel:
    rng = _rng(config.seed)
    n, T = config.n_units, config.T
    x = gen_covariates(n, rng)
    f = gen_time_factor(T, rng)
    u = rng.random(n)
    pi = propensity(x, u)
    z = rollout(pi, config.treat_start, T, rng)
    times = np.arange(1, T + 1)
    eta_m = eta(x[:, None, :], times[None, :], f, config.prognostic)
    s = np.cumsum(z, axis=1)
    event = np.where(z.any(axis=1), np.argmax(z > 0, axis=1) + 1, -1)
    tau = np.zeros((n, T))
    treated = s > 0
    if treated.any():
        ii, kk = np.nonzero(treated)
        tau[ii, kk] = nu(x[ii], event[ii], s[ii, kk], config.effect, config.cohort_effects)
    y = eta_m + tau + config.noise_sd * rng.standard_normal((n, T))
    panel = PanelDataset(
        y=y, z=z, x=x, t0=1, t1=T,
        covariate_names=COVARIATE_NAMES,
        covariate_kinds=(CovariateKind(), CovariateKind(), CovariateKind(),
                         CovariateKind(X4_LEVELS), CovariateKind(X5_LEVELS)),
    )
    view = derive_exposure(panel)
    catt = {(int(i), int(k) + 1): float(tau[i, k]) for i, k in zip(*np.nonzero(treated))}
    att = {}
    for e in sorted(set(event[event > 0].tolist())):
        members = event == e
        for t in range(e, T + 1):
            att[(int(e), t)] = float(tau[members, t - 1].mean())
    return GeneratedPanel(panel=panel, view=view, tau_true=tau, att_true=att, catt_true=catt,
                          f_t=f, propensity=pi, config=config)


def future_att_truth(gen: GeneratedPanel, horizon: int) -> dict:
    """Cohort ATT for periods ``T+1..T+horizon`` (effects do not depend on calendar time)."""
    cfg = gen.config
    out = {}
    ev = gen.view.event_time
    for e in sorted(set(ev[gen.view.treated].tolist())):
        members = ev == e
        for h in range(1, horizon + 1):
            t = gen.panel.t1 + h
            vals = nu(gen.panel.x[members], np.full(members.sum(), e), t - e + 1, cfg.effect, cfg.cohort_effects)
            out[(int(e), t)] = float(vals.mean())
    return out
