import numpy as np
import pytest

from longbet.exceptions import NumericalError
from longbet.gp import GPKernel, cholesky_jitter, gp_conditional, kernel_matrix


def test_kernel_single_point():
    assert kernel_matrix([3.0], GPKernel(1.0, 2.0)).tolist() == [[1.0]]


def test_kernel_one_length_scale_apart():
    K = kernel_matrix([0.0, 2.5], GPKernel(1.0, 2.5))
    assert K[0, 1] == pytest.approx(np.exp(-0.5))
    assert K[0, 1] == pytest.approx(0.60653, abs=1e-5)


def test_kernel_symmetric_psd():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 10, 10)
    K = kernel_matrix(pts, GPKernel(1.0, 5.5), jitter=1e-8)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= 0


def test_interpolation_reproduces_training_values():
    k = GPKernel(1.0, 5.5)
    x = np.arange(7.0)
    y = np.sin(x)
    mean, cov = gp_conditional(x, y, x, k, noise_var=0.0)
    assert np.max(np.abs(mean - y)) <= 1e-6
    assert np.max(np.diag(cov)) <= 1e-6


def test_interpolation_small_length_scale():
    k = GPKernel(2.0, 1.0)
    x = np.array([0.0, 1.5, 3.0])
    y = np.array([1.0, -2.0, 0.5])
    mean, cov = gp_conditional(x, y, x, k)
    assert np.max(np.abs(mean - y)) <= 1e-6
    assert np.max(np.abs(np.diag(cov))) <= 1e-8


def test_far_field_reverts_to_prior():
    k = GPKernel(1.5**2, 2.0)
    x = np.arange(5.0)
    mean, cov = gp_conditional(x, np.ones(5), [4.0 + 20 * 2.0], k)
    assert abs(mean[0]) <= 1e-3
    assert abs(cov[0, 0] - 1.5**2) <= 1e-3


def test_single_training_point_closed_form():
    k = GPKernel(1.3, 0.7)
    t, v, q, noise = 0.4, 2.0, 1.1, 0.3
    mean, cov = gp_conditional([t], [v], [q], k, noise_var=noise)
    kqt = 1.3 * np.exp(-((q - t) ** 2) / (2 * 0.49))
    assert mean[0] == pytest.approx(kqt / (1.3 + noise) * v, rel=1e-12)
    assert cov[0, 0] == pytest.approx(1.3 - kqt**2 / (1.3 + noise), rel=1e-12)


def test_posterior_covariance_psd():
    k = GPKernel(1.0, 5.5)
    mean, cov = gp_conditional(np.arange(7.0), np.linspace(1, 0, 7), np.arange(7.0, 12.0), k)
    assert np.linalg.eigvalsh(cov).min() >= -1e-8


def test_cholesky_jitter_escalation():
    A = np.ones((3, 3))  # rank one
    L = cholesky_jitter(A)
    assert np.allclose(L @ L.T, A, atol=1e-5)
    with pytest.raises(NumericalError):
        cholesky_jitter(-np.eye(2))
