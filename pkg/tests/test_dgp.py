from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longbet import dgp
from longbet.dgp import ScenarioConfig


def test_covariate_laws():
    x = dgp.gen_covariates(100_000, np.random.default_rng(0))
    assert np.all(np.abs(x[:, :3].mean(axis=0)) <= 0.02)
    assert set(np.unique(x[:, 3])) <= {0.0, 1.0}
    assert set(np.unique(x[:, 4])) == {1.0, 2.0, 3.0}
    for level in (1, 2, 3):
        assert abs(np.mean(x[:, 4] == level) - 1 / 3) <= 0.02


@pytest.mark.parametrize("row, expected", [
    ([0, 0, 5, 0, 1], 2.0),
    ([1, 0, 1, 1, 1], -1.0),
    ([2, 0, 3, 0, 1], 6.0),
])
def test_gamma_values(row, expected):
    assert dgp.gamma(np.array(row, dtype=float)) == expected


def test_time_factor_moments():
    f = dgp.gen_time_factor(100_000, np.random.default_rng(1))
    assert abs(f.mean() - 1) <= 0.05
    w = f - 1
    w = w - w.mean()
    acf1 = np.dot(w[1:], w[:-1]) / np.dot(w, w)
    ar, ma = 0.7, -0.4
    rho1 = (1 + ar * ma) * (ar + ma) / (1 + ma**2 + 2 * ar * ma)
    assert rho1 == pytest.approx(0.36)
    assert abs(acf1 - rho1) <= 0.03


def test_time_factor_seeded():
    a = dgp.gen_time_factor(12, np.random.default_rng(5))
    b = dgp.gen_time_factor(12, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_eta_values():
    x = np.array([0.0, 0.0, 0.0, 0.0, 1.0])  # gamma = 2
    f = np.array([1.0, 3.0])
    assert dgp.eta(x, 1, f, "parallel") == 3.0
    assert dgp.eta(x, 1, f, "nonparallel") == 2.0
    x0 = np.array([-1.0, 0.0, 3.0, 0.0, 1.0])  # gamma = 2 - 2 = 0
    assert np.array_equal(dgp.eta(x0, np.array([1, 2]), f, "nonparallel"), [0.0, 0.0])


def test_nu_values():
    x = np.zeros(5)
    assert dgp.nu(x, 10, 1, "homogeneous") == pytest.approx(2 * np.exp(-1))
    assert dgp.nu(x, 10, 1, "homogeneous") == pytest.approx(0.73576, abs=1e-5)
    assert dgp.nu(x, 7, 1, "homogeneous") == pytest.approx(0.95649, abs=1e-5)
    xh = np.array([0.3, 0.0, -1.0, 1.0, 3.0])
    assert dgp.nu(xh, 9, 3, "heterogeneous") == dgp.nu(xh, 9, 3, "homogeneous")
    with pytest.raises(ValueError):
        dgp.nu(x, 6, 1, "homogeneous")
    with pytest.raises(ValueError):
        dgp.nu(x, 7, 0, "homogeneous")


def test_propensity_values():
    zero = np.array([2.0, 0.0, 1.0, 0.0, 1.0])  # gamma = 2, arg = 1 - 1 = 0
    assert dgp.propensity(zero, 0.0) == pytest.approx(0.05)
    big = np.array([-100.0, 0.0, 1.0, 0.0, 1.0])  # gamma = 2, arg = 51
    assert dgp.propensity(big, 1.0) == pytest.approx(0.3)
    rng = np.random.default_rng(0)
    xs = dgp.gen_covariates(1000, rng)
    p = dgp.propensity(xs, rng.random(1000))
    assert np.all((p >= 0) & (p <= 0.3))


def test_rollout_edge_cases():
    rng = np.random.default_rng(0)
    assert not dgp.rollout(np.zeros(50), 7, 12, rng).any()
    z = dgp.rollout(np.ones(50), 7, 12, rng)
    assert np.all(z[:, :6] == 0) and np.all(z[:, 6:] == 1)


def test_rollout_fraction():
    z = dgp.rollout(np.full(100_000, 0.1), 7, 12, np.random.default_rng(2))
    assert abs(z.any(axis=1).mean() - (1 - 0.9**6)) <= 0.02
    # absorbing
    assert np.all(np.diff(z, axis=1) >= 0)


def test_generate_truth_tables():
    gen = dgp.generate(ScenarioConfig(seed=3, effect="heterogeneous"))
    s = gen.view.s
    assert np.all(gen.tau_true[s == 0] == 0)
    ev = gen.view.event_time
    for (e, t), v in gen.att_true.items():
        members = np.nonzero(ev == e)[0]
        assert v == pytest.approx(np.mean([gen.catt_true[(int(i), t)] for i in members]), abs=1e-14)
    assert len(gen.catt_true) == int((s > 0).sum())


def test_generate_homogeneous_cells_constant():
    gen = dgp.generate(ScenarioConfig(seed=4))
    ev = gen.view.event_time
    for (e, t), v in gen.att_true.items():
        vals = gen.tau_true[ev == e, t - 1]
        assert np.ptp(vals) == 0
        assert v == pytest.approx(vals[0])
    for e in set(ev[gen.view.treated].tolist()):
        assert gen.att_true[(e, e)] == pytest.approx(dgp.COHORT_EFFECTS[e] * 2 * np.exp(-1))


def test_generate_noise_free_rows():
    import dataclasses

    cfg = ScenarioConfig(seed=9, noise_sd=1e-300)
    gen = dgp.generate(cfg)
    x = gen.panel.x
    never = np.nonzero(~gen.view.treated)[0]
    eta = dgp.eta(x[never][:, None, :], np.arange(1, 13)[None, :], gen.f_t, "parallel")
    assert np.array_equal(gen.panel.y[never], eta)
    assert dataclasses.replace(cfg) == cfg


def test_generate_deterministic():
    a = dgp.generate(ScenarioConfig(seed=11, n_units=50))
    b = dgp.generate(ScenarioConfig(seed=11, n_units=50))
    assert a.panel == b.panel and a.att_true == b.att_true


def test_scenario_names():
    assert ScenarioConfig.from_name("nonparallel-heterogeneous").name == "nonparallel-heterogeneous"
    with pytest.raises(ValueError) as err:
        ScenarioConfig.from_name("parallel")
    for name in dgp.SCENARIOS:
        assert name in str(err.value)


def exact(a):
    return np.vectorize(Fraction, otypes=[object])(a)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 12), st.integers(1, 12))
def test_parallel_trend_property(seed, t, t2):
    rng = np.random.default_rng(seed)
    x = exact(dgp.gen_covariates(50, rng))
    f = exact(dgp.gen_time_factor(12, rng))
    d_par = dgp.eta(x, t, f, "parallel") - dgp.eta(x, t2, f, "parallel")
    assert max(abs(d - (f[t - 1] - f[t2 - 1])) for d in d_par) == 0
    d_np = dgp.eta(x, t, f, "nonparallel") - dgp.eta(x, t2, f, "nonparallel")
    if f[t - 1] != f[t2 - 1]:
        assert max(abs(d - (f[t - 1] - f[t2 - 1])) for d in d_np) > 0
        assert len(set(d_np)) > 1


def test_parallel_trend_float_rounding():
    rng = np.random.default_rng(0)
    x = dgp.gen_covariates(1000, rng)
    f = dgp.gen_time_factor(12, rng)
    for t in range(1, 13):
        d = dgp.eta(x, t, f, "parallel") - dgp.eta(x, 1, f, "parallel") - (f[t - 1] - f[0])
        scale = np.abs(dgp.gamma(x)) + np.abs(f).max()
        assert np.all(np.abs(d) <= 4 * np.finfo(float).eps * scale)
