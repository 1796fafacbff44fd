import math

import numpy as np
import pytest

from models import Configuration, GridDensity
from services.exceptions import ResourceLimitError, ValidationError
from services.statespace_service import (
    count_above,
    empirical_measure,
    enumerate_partitions,
    enumerate_states,
    from_partition,
    from_positions,
    mollify,
    push_right_tail_map,
    quantile_configuration,
    shift_map,
    state_count,
    tail_sum_bound,
    to_partition,
    truncation_cap,
    validate_configuration,
)


def test_from_partition_positions():
    c = from_partition([2, 1, 0], 0.5)
    np.testing.assert_allclose(c.positions, [3.0, 1.5, 0.0])
    assert to_partition(c) == (2, 1, 0)
    assert from_positions(c.positions, 0.5) == c


def test_spacing_at_least_theta():
    for c in enumerate_states(3, 3, 0.7):
        gaps = -np.diff(c.positions)
        assert np.all(gaps >= 0.7 - 1e-12)


@pytest.mark.parametrize("lam", [[1, 2], [-1], [1.5, 0]])
def test_from_partition_rejects(lam):
    with pytest.raises(ValidationError):
        from_partition(lam, 1.0)


def test_cap_is_enforced():
    with pytest.raises(ValidationError):
        validate_configuration(Configuration(theta=1.0, lambdas=(3, 0), cap=2))


def test_from_positions_off_lattice():
    with pytest.raises(ValidationError):
        from_positions([2.3, 0.0], 1.0)


def test_enumeration_count_and_order():
    states = [c.lambdas for c in enumerate_states(2, 2, 1.0)]
    assert len(states) == state_count(2, 2) == 6
    assert states[0] == (0, 0)
    assert len(set(states)) == len(states)


def test_enumeration_budget():
    with pytest.raises(ResourceLimitError) as info:
        list(enumerate_states(5, 20, 1.0, budget=100))
    assert info.value.count == math.comb(25, 5)
    assert info.value.budget == 100


def test_enumerate_partitions():
    parts = list(enumerate_partitions(3, 2))
    assert () in parts
    assert (3,) in parts and (2, 1) in parts
    assert (1, 1, 1) not in parts
    assert len(parts) == 6


def test_empirical_measure_and_count():
    c = from_partition([4, 1, 0], 1.0)
    mu = empirical_measure(c)
    assert mu.mass == pytest.approx(1.0)
    np.testing.assert_allclose(mu.atoms, np.array([6.0, 2.0, 0.0]) / 3)
    assert count_above(c, 2.0) == 1
    assert count_above(c, 2.0 / 3) == 2


def test_shift_map_injective_on_small_space():
    images = {}
    for c in enumerate_states(4, 3, 1.0):
        image = shift_map(c, 2, 1)
        validate_configuration(image)
        key = image.lambdas
        erased = tuple(v for k, v in enumerate(c.lambdas) if k != 0)
        images.setdefault(key, set()).add(erased)
    assert all(len(v) == 1 for v in images.values())


def test_shift_map_indices():
    c = from_partition([2, 1, 0], 1.0)
    with pytest.raises(ValidationError):
        shift_map(c, 3, 1)


def test_push_right_tail_map():
    c = from_partition([5, 3, 1, 0], 1.0)
    barrier = 5.0 / 4
    image = push_right_tail_map(c, barrier)
    u = count_above(c, barrier)
    assert image.positions[u - 1] >= barrier * 4 - 1e-9
    assert image.positions[u - 1] < barrier * 4 + 1.0
    validate_configuration(image)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_maps_stay_in_state_space_exhaustively(theta):
    n, m = 3, 5
    states = list(enumerate_states(n, m, theta))
    for c in states:
        for w in range(1, n):
            for w_prime in range(1, w + 1):
                image = validate_configuration(shift_map(c, w, w_prime))
                assert image.lambdas[0] <= m

    top = (m + (n - 1) * theta) / n
    for barrier in np.linspace(0.05, top, 60):
        fibers = {}
        for c in states:
            if not 1 <= count_above(c, barrier) < n:
                continue
            image = validate_configuration(push_right_tail_map(c, barrier))
            assert image.lambdas[0] <= m
            fibers[image.lambdas] = fibers.get(image.lambdas, 0) + 1
        assert max(fibers.values(), default=0) <= n * (m + 1)


def test_push_right_tail_map_bad_barrier():
    c = from_partition([2, 1, 0], 1.0)
    with pytest.raises(ValidationError):
        push_right_tail_map(c, 100.0)


def test_quantile_configuration_uniform():
    phi = GridDensity.uniform(1.0, np.ones(100))
    c = quantile_configuration(phi, 10, 10, None, 0.1)
    expected = 10 * (np.arange(10, 0, -1) - 0.5) / 10
    assert np.all(np.abs(c.positions - expected) < 1.0)
    assert np.all(c.positions <= expected + 1e-9)


def test_quantile_configuration_rejects():
    phi = GridDensity.uniform(1.0, np.full(10, 2.0))
    with pytest.raises(ValidationError):
        quantile_configuration(phi, 10, 10, None, 0.1)
    with pytest.raises(ValidationError):
        quantile_configuration(GridDensity.uniform(1.0, np.ones(10)), 10, 3, None, 0.1)


def test_mollify_admissible():
    c = from_partition([6, 2, 1, 0], 0.5)
    psi = mollify(empirical_measure(c))
    assert psi.mass == pytest.approx(1.0)
    assert psi.admissibility_violation(0.5) < 1e-12


def test_tail_sum_bound_dominates_direct_sum():
    n, theta, xi, b = 3, 1.0, 1.0, 2.0
    start = math.ceil((b + theta + 1.0) * n)
    ell = np.arange(start, start + 200000, dtype=float)
    direct = float(np.sum((ell ** 2 / n ** 2 + 1.0) ** (-n * theta * xi)))
    assert direct <= tail_sum_bound(n, theta, xi, b)


def test_truncation_cap():
    cap = truncation_cap(5, 1.0, edge_hint=4.0, eps=1e-12)
    assert cap >= 6 * 5
    with pytest.raises(ValidationError):
        truncation_cap(1, 1.0)
