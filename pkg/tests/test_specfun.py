import math

import mpmath
import numpy as np
import pytest

from services import specfun_service
from services.exceptions import DomainError
from services.specfun_service import (
    gamma_sandwich_check,
    log_gamma,
    log_q_theta,
    q_theta_bound,
    stirling_residual,
    xlogx,
)


def test_log_gamma_known_values():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-13)
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-13)


def test_log_gamma_matches_mpmath():
    mpmath.mp.dps = 40
    for x in np.concatenate([np.geomspace(1e-3, 1e3, 97), [170.5, 1e5]]):
        exact = float(mpmath.loggamma(mpmath.mpf(float(x))))
        assert abs(log_gamma(float(x)) - exact) <= 1e-13 * max(1.0, abs(exact))


def test_log_gamma_array_shape():
    values = log_gamma(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert values.shape == (2, 2)
    assert values[1, 1] == pytest.approx(math.log(6.0))


def test_log_gamma_rejects_non_positive():
    with pytest.raises(DomainError):
        log_gamma(0.0)
    with pytest.raises(DomainError):
        log_gamma(np.array([1.0, -2.0]))


def test_log_gamma_functional_equation():
    for x in np.geomspace(0.1, 1e3, 200):
        lhs = log_gamma(x + 1.0)
        assert abs(lhs - log_gamma(x) - math.log(x)) <= 1e-12 * max(1.0, abs(lhs))


def test_stirling_residual_bracket():
    for n in range(1, 171):
        r = stirling_residual(n)
        assert 1.0 / (12 * n + 1) < r < 1.0 / (12 * n)


def test_log_q_theta_examples():
    assert log_q_theta(5.0, 1.0) == pytest.approx(math.log(25.0), rel=1e-14)
    assert log_q_theta(2.0, 2.0) == pytest.approx(math.log(12.0), rel=1e-14)
    value = log_q_theta(0.5, 0.5)
    assert abs(value - 2 * 0.5 * math.log(0.5)) <= (1.5 ** 3) / 0.5


def test_log_q_theta_matches_gamma_definition():
    mpmath.mp.dps = 30
    for theta in (0.3, 0.5, 2.5):
        for x in (theta, 1.7, 12.0, 400.0):
            x = max(x, theta)
            exact = float(mpmath.log(mpmath.gamma(x + 1) * mpmath.gamma(x + theta)
                                     / (mpmath.gamma(x) * mpmath.gamma(x + 1 - theta))))
            assert log_q_theta(x, theta) == pytest.approx(exact, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("theta", [0.3, 0.5, 1.0, 2.0, 3.7])
def test_log_q_theta_sandwich(theta):
    x = np.geomspace(theta, 1e6, 1000)
    excess = np.abs(log_q_theta(x, theta) - 2.0 * theta * np.log(x))
    assert np.all(excess <= q_theta_bound(x, theta))


def test_log_q_theta_domain():
    with pytest.raises(DomainError):
        log_q_theta(0.4, 0.5)
    with pytest.raises(DomainError):
        log_q_theta(1.0, 0.0)


def test_gamma_sandwich():
    for x in (1.0, 2.5, 10.0, 1e3, 1e6):
        assert gamma_sandwich_check(x)
    with pytest.raises(DomainError):
        gamma_sandwich_check(0.5)


def test_xlogx_zero_convention():
    assert xlogx(0.0) == 0.0
    assert xlogx(np.e) == pytest.approx(np.e)
    np.testing.assert_allclose(xlogx(np.array([0.0, 1.0, 2.0])), [0.0, 0.0, 2 * math.log(2)])


def test_lanczos_shift_matches_documentation():
    assert specfun_service._LANCZOS_G_SHIFT == 671 / 128
    assert "671/128" in log_gamma.__doc__
