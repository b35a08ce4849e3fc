"""Accuracy, coverage and power of cohort-time effect estimates.

For ``C`` estimands with truths ``a_c``, estimates ``â_c`` and intervals
``[lo_c, hi_c]``::

    rmse     = sqrt(mean((a_c - â_c)**2))
    coverage = mean(lo_c <= a_c <= hi_c)
    cover0   = mean(lo_c <= 0 <= hi_c)

Joint intervals use the Sidak level ``(1 - alpha) ** (1 / C)`` per estimand.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "EvalResult",
    "sidak_level",
    "pointwise_intervals",
    "simultaneous_intervals",
    "evaluate",
    "evaluate_catt",
    "monte_carlo",
    "StudyResult",
    "METRICS",
]

METRICS = ("rmse_att", "coverage_att", "cover0_att", "rmse_catt", "coverage_catt")


def sidak_level(alpha: float, C: int) -> float:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if C < 1:
        raise ValueError(f"C must be at least 1, got {C}")
    return (1.0 - alpha) ** (1.0 / C)


def pointwise_intervals(draws, level: float = 0.95):
    """Equal-tailed quantile intervals per column (linear interpolation)."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2:
        raise ValueError("draws must be (n_draws, n_estimands)")
    if draws.shape[1] == 0:
        return np.empty(0), np.empty(0)
    q = np.quantile(draws, [(1 - level) / 2, (1 + level) / 2], axis=0, method="linear")
    return q[0], q[1]


def simultaneous_intervals(draws, alpha: float = 0.05):
    """Sidak-adjusted quantile intervals covering all columns jointly at ``1 - alpha``."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2:
        raise ValueError("draws must be (n_draws, n_estimands)")
    C = draws.shape[1]
    if C == 0:
        return np.empty(0), np.empty(0)
    if draws.shape[0] < 2:
        raise ValueError("need at least 2 draws per estimand")
    return pointwise_intervals(draws, sidak_level(alpha, C))


@dataclass
class EvalResult:
    rmse_att: float = float("nan")
    coverage_att: float = float("nan")
    cover0_att: float = float("nan")
    rmse_catt: float = float("nan")
    coverage_catt: float = float("nan")
    n_estimands: int = 0
    detail: list = field(default_factory=list)

    def metrics(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


def _score(keys, est, lo, hi, truth: dict):
    truth_v = np.array([truth[k] for k in keys], dtype=float)
    est = np.asarray(est, float)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    rmse = float(np.sqrt(np.mean((truth_v - est) ** 2)))
    cover = float(np.mean((lo <= truth_v) & (truth_v <= hi)))
    cover0 = float(np.mean((lo <= 0) & (0 <= hi)))
    return rmse, cover, cover0, truth_v


def evaluate(att_est, truth: dict) -> EvalResult:
    """Score an ATT table against ``truth[(cohort, time)]``.

    The table's own intervals are used, so pass a simultaneous table to get
    the joint-coverage metric.
    """
    keys = [tuple(map(int, k)) for k in att_est.keys()]
    tkeys = {tuple(map(int, k)) for k in truth}
    if set(keys) != tkeys:
        diff = sorted(set(keys) ^ tkeys)
        raise ValueError(f"estimate and truth cover different cells: {diff}")
    if not keys:
        return EvalResult()
    truth = {tuple(map(int, k)): v for k, v in truth.items()}
    rmse, cover, cover0, truth_v = _score(keys, att_est.point, att_est.lo, att_est.hi, truth)
    detail = [(e, t, tv, p, l, h) for (e, t), tv, p, l, h in
              zip(keys, truth_v, att_est.point, att_est.lo, att_est.hi)]
    return EvalResult(rmse_att=rmse, coverage_att=cover, cover0_att=cover0,
                      n_estimands=len(keys), detail=detail)


def evaluate_catt(catt_est, truth) -> tuple[float, float, float]:
    """RMSE, coverage and cover0 over treated unit-time cells.

    ``truth`` is an ``(n_units, T)`` matrix indexed like the training panel,
    or a dict keyed by ``(unit_index, time)``.
    """
    if len(catt_est) == 0:
        return float("nan"), float("nan"), float("nan")
    keys = list(zip(catt_est.unit.tolist(), catt_est.time.tolist()))
    if not isinstance(truth, dict):
        raise TypeError("truth must be a dict keyed by (unit_index, time)")
    missing = [k for k in keys if k not in truth]
    if missing or len(truth) != len(keys):
        raise ValueError("CATT estimate and truth cover different cells")
    rmse, cover, cover0, _ = _score(keys, catt_est.point, catt_est.lo, catt_est.hi, truth)
    return rmse, cover, cover0


# Monte Carlo study


@dataclass
class StudyResult:
    """Per-rep metric rows plus means and standard errors."""

    scenario: str
    reps: list = field(default_factory=list)
    detail: list = field(default_factory=list)

    def mean(self, metric: str) -> float:
        v = np.array([r[metric] for r in self.reps], dtype=float)
        return float(v.mean())

    def se(self, metric: str) -> float:
        v = np.array([r[metric] for r in self.reps], dtype=float)
        return float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0

    def averaged(self) -> EvalResult:
        return EvalResult(**{m: self.mean(m) for m in METRICS},
                          n_estimands=int(np.mean([r["n_estimands"] for r in self.reps])))


def rep_seed(master_seed: int, scenario: str, rep: int) -> int:
    """Seed of one replication, independent of execution order."""
    from .dgp import SCENARIOS

    idx = SCENARIOS.index(scenario) if scenario in SCENARIOS else 99
    ss = np.random.SeedSequence(master_seed, spawn_key=(idx, rep))
    return int(ss.generate_state(1)[0])


def run_rep(scenario_config, model_config, level: float = 0.95):
    """generate -> fit -> tables -> metrics for one seeded replication."""
    from dataclasses import replace

    from . import dgp
    from .model import att_from_catt, catt_table, fit

    gen = dgp.generate(scenario_config)
    cfg = replace(model_config, seed=scenario_config.seed)
    f = fit(gen.panel, gen.view, cfg)
    catt = catt_table(f, gen.panel, gen.view, level)
    att = att_from_catt(catt, gen.view, level, simultaneous=True)
    res = evaluate(att, gen.att_true)
    catt_truth = {k: v for k, v in gen.catt_true.items()}
    res.rmse_catt, res.coverage_catt, _ = evaluate_catt(catt, catt_truth)
    return res


def _rep_job(args):
    scenario_config, model_config, level, rep = args
    try:
        return rep, run_rep(scenario_config, model_config, level)
    except Exception as exc:  # re-raised with the seed attached
        raise RuntimeError(f"rep {rep} (seed {scenario_config.seed}) failed: {exc!r}") from exc


def monte_carlo(scenario, reps: int, model_config=None, master_seed: int = 0,
                workers: int = 1, level: float = 0.95) -> StudyResult:
    """Average the metrics over ``reps`` seeded replications of one scenario.

    Each replication's seed is derived from ``(master_seed, scenario, rep)``
    only, so results do not depend on ``workers``. A failing replication
    aborts the study.
    """
    from dataclasses import replace

    from .model import LongBetConfig

    if reps < 1:
        raise ValueError("reps must be at least 1")
    model_config = LongBetConfig() if model_config is None else model_config
    jobs = [(replace(scenario, seed=rep_seed(master_seed, scenario.name, r)), model_config, level, r)
            for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rep_job, jobs))
    else:
        results = [_rep_job(j) for j in jobs]
    results.sort(key=lambda rr: rr[0])
    study = StudyResult(scenario=scenario.name)
    for rep, res in results:
        row = {"rep": rep, "seed": jobs[rep][0].seed, "n_estimands": res.n_estimands, **res.metrics()}
        study.reps.append(row)
        for e, t, tv, p, lo, hi in res.detail:
            study.detail.append((rep, e, t, tv, p, lo, hi))
        log.info("%s rep %d: %s", scenario.name, rep, {k: round(v, 4) for k, v in res.metrics().items()})
    return study


def write_results(studies, path, method: str = "LongBet") -> None:
    """``scenario,method,metric,mean,se,reps`` rows, one per metric."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "method", "metric", "mean", "se", "reps"])
        for st in studies:
            for m in METRICS:
                w.writerow([st.scenario, method, m, repr(st.mean(m)), repr(st.se(m)), len(st.reps)])


def write_detail(study: StudyResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "cell_e", "cell_t", "att_true", "att_est", "lo", "hi"])
        for rep, e, t, tv, p, lo, hi in study.detail:
            w.writerow([rep, e, t, repr(float(tv)), repr(float(p)), repr(float(lo)), repr(float(hi))])
