import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from services.exceptions import DomainError
from services.integrals_service import (
    CellIntegral,
    LogIdentity,
    closed_form_log_cells,
    log_integral_identities,
    log_integral_quadrature,
    rectangle_log_integral,
    segment_log_integral,
)


def test_square_unit_cell():
    assert closed_form_log_cells(CellIntegral.SQUARE, 0.0, 1.0) == pytest.approx(-1.5)
    assert closed_form_log_cells(CellIntegral.SQUARE, 2.0, 4.0) == pytest.approx(4 * math.log(2) - 6)


def test_segment_against_quad():
    for a, b, c in [(0.0, 1.0, 0.3), (0.5, 2.0, -1.0), (0.0, 1.0, 3.0)]:
        points = [c] if a < c < b else None
        numeric = quad(lambda v: math.log(abs(v - c)), a, b, points=points, epsabs=1e-13)[0]
        assert closed_form_log_cells(CellIntegral.SEGMENT, a, b, c) == pytest.approx(numeric, abs=1e-11)


def test_shifted_square_against_dblquad():
    a, c = 0.5, 1.2
    numeric = dblquad(lambda y, x: math.log(c + x - y), 0.0, a, 0.0, a, epsabs=1e-13)[0]
    assert closed_form_log_cells(CellIntegral.SHIFTED_SQUARE, a, c=c) == pytest.approx(numeric, abs=1e-10)


def test_shifted_square_equals_square_at_touching_cells():
    h = 0.25
    touching = closed_form_log_cells(CellIntegral.SHIFTED_SQUARE, h, c=h)
    assert touching == pytest.approx(float(rectangle_log_integral(h, 2 * h, 0.0, h)), abs=1e-13)


def test_rectangle_reduces_to_square():
    assert float(rectangle_log_integral(0.0, 1.0, 0.0, 1.0)) == pytest.approx(-1.5)


def test_segment_log_integral_vectorised():
    x = np.array([0.25, 0.5, 2.0])
    values = segment_log_integral(x, 0.0, 1.0)
    expected = [closed_form_log_cells(CellIntegral.SEGMENT, 0.0, 1.0, v) for v in x]
    np.testing.assert_allclose(values, expected, rtol=1e-14)


def test_cell_domain_errors():
    with pytest.raises(DomainError):
        closed_form_log_cells(CellIntegral.SQUARE, 1.0, 1.0)
    with pytest.raises(DomainError):
        closed_form_log_cells(CellIntegral.SHIFTED_SQUARE, 1.0, c=0.5)


@pytest.mark.parametrize("case", list(LogIdentity))
def test_log_identities_random_draws(case):
    rng = np.random.default_rng(7)
    for _ in range(25):
        a, b = rng.uniform(0.1, 3.0, size=2)
        if case in (LogIdentity.I_MINUS_2, LogIdentity.I_PLUS_2, LogIdentity.J_2):
            c = d = 1.0
        else:
            c, d = rng.uniform(0.2, 3.0, size=2)
        exact = log_integral_identities(case, a, b, c, d)
        numeric = log_integral_quadrature(case, a, b, c, d)
        assert abs(exact - numeric) <= 1e-8 * max(1.0, abs(exact))


def test_identity_examples():
    assert log_integral_identities(LogIdentity.J_1, c=1.0, d=1.0) == pytest.approx(math.pi / 2)
    assert log_integral_identities(LogIdentity.I_PLUS_1, 1.0, 1.0, 1.0, 1.0) == pytest.approx(math.pi * math.log(2))


def test_identity_domain():
    with pytest.raises(DomainError):
        log_integral_identities(LogIdentity.I_MINUS_1, 0.0, 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        log_integral_identities(LogIdentity.I_PLUS_2, 1.0, 1.0, 2.0, 1.0)
