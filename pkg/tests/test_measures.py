import math

import numpy as np
import pytest

from config import Config
from models import Configuration
from services.exceptions import DomainError, ResourceLimitError, ValidationError
from services.measures_service import (
    EnsembleSpec,
    constant_potential,
    energy_of_atoms,
    exact_log_partition,
    exact_pmf,
    exact_tail_log_probability,
    jack_log_partition,
    jack_potential,
    jack_spec,
    krawtchouk_log_partition,
    krawtchouk_potential,
    krawtchouk_spec,
    log_weight,
    pmf_decomposition_residual,
    pmf_residual_bounds,
    validate_potential,
)
from services.statespace_service import empirical_measure, enumerate_states, from_partition


def test_krawtchouk_single_particle_is_binomial():
    spec = krawtchouk_spec(1, 4.0, 1.0)
    assert spec.cap == 4
    _, probs = exact_pmf(spec)
    np.testing.assert_allclose(probs, [math.comb(4, k) / 16 for k in range(5)], rtol=1e-12)


def test_krawtchouk_partition_closed_form():
    for n, m_rate, theta in [(2, 1.0, 1.0), (2, 1.5, 0.5), (3, 1.0, 2.0), (3, 2.0, 1.0)]:
        spec = krawtchouk_spec(n, m_rate, theta)
        exact = exact_log_partition(spec)
        closed = krawtchouk_log_partition(n, spec.cap, theta)
        assert exact == pytest.approx(closed, rel=1e-12, abs=1e-10)


def test_log_weight_matches_batch():
    spec = krawtchouk_spec(3, 1.0, 0.5)
    for c in enumerate_states(3, spec.cap, 0.5):
        value = log_weight(spec, c)
        assert math.isfinite(value)


def test_log_weight_rejects_foreign_configuration():
    spec = krawtchouk_spec(2, 1.0, 1.0)
    with pytest.raises(ValidationError):
        log_weight(spec, Configuration(theta=1.0, lambdas=(3, 0)))
    with pytest.raises(ValidationError):
        log_weight(spec, Configuration(theta=0.5, lambdas=(1, 0)))


def test_exact_pmf_sums_to_one():
    lambdas, probs = exact_pmf(krawtchouk_spec(2, 1.0, 1.0))
    assert len(lambdas) == 6
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)


def test_exact_tail_probability_complements():
    spec = krawtchouk_spec(3, 1.0, 1.0)
    upper = exact_tail_log_probability(spec, 1.0, "upper")
    lower = exact_tail_log_probability(spec, 1.0 - 1e-6, "lower")
    assert math.exp(upper) + math.exp(lower) == pytest.approx(1.0, abs=1e-12)
    assert exact_tail_log_probability(spec, 100.0, "upper") == -math.inf


def test_exact_partition_respects_budget(monkeypatch):
    monkeypatch.setattr(Config, "ENUM_BUDGET", 1000)
    spec = EnsembleSpec(n=6, theta=1.0, cap=40, potential=constant_potential(0.0, 1.0))
    with pytest.raises(ResourceLimitError):
        exact_log_partition(spec)


def test_coulomb_interaction_requires_beta():
    with pytest.raises(ValidationError):
        EnsembleSpec(n=2, theta=1.0, cap=2, potential=constant_potential(0.0, 1.0), interaction="coulomb")


def test_coulomb_matches_q_theta_at_theta_one():
    v = constant_potential(0.0, 1.0)
    q = EnsembleSpec(n=3, theta=1.0, cap=3, potential=v)
    coulomb = EnsembleSpec(n=3, theta=1.0, cap=3, potential=v, interaction="coulomb", beta=2.0)
    for c in enumerate_states(3, 3, 1.0):
        assert log_weight(q, c) == pytest.approx(log_weight(coulomb, c), abs=1e-12)


def test_krawtchouk_potential_domain():
    v = krawtchouk_potential(2.0, 1.0)
    with pytest.raises(DomainError):
        v.eval_limit(3.5)
    assert v.eval_limit(0.0) == pytest.approx(3.0 * math.log(3.0))


def test_jack_potential_growth():
    v = jack_potential(1.0, 1.0)
    report = validate_potential(v, 1.0)
    assert report.growth_required
    assert report.growth_ok
    assert v.offset_a >= 0.0


def test_zero_potential_fails_growth():
    report = validate_potential(constant_potential(0.0, 1.0), 1.0, n_values=())
    assert not report.growth_ok
    assert report.messages


def test_finite_n_potential_converges():
    v = krawtchouk_potential(2.0, 1.0)
    report = validate_potential(v, 1.0)
    assert report.convergence_constant is not None
    assert report.convergence_constant < 50.0


def test_jack_spec_truncates():
    spec = jack_spec(4, 1.0, 1.0)
    assert spec.truncated
    assert spec.cap >= 4 * 4


def test_jack_partition_closed_form_against_truncated_sum():
    n, t, theta = 2, 0.5, 1.0
    v = jack_potential(t, theta)
    spec = jack_spec(n, t, theta, cap=60)
    exact = exact_log_partition(spec)
    assert exact == pytest.approx(jack_log_partition(n, t, theta, v.offset_a), rel=1e-10, abs=1e-9)


def test_energy_of_atoms():
    v = constant_potential(0.0, 1.0)
    mu = empirical_measure(from_partition([0, 0], 1.0))
    assert energy_of_atoms(mu, v, 1.0) == pytest.approx(-(2.0 / 4.0) * math.log(0.5))


def test_pmf_decomposition_within_bounds():
    spec = krawtchouk_spec(4, 1.0, 1.0)
    for c in enumerate_states(4, spec.cap, 1.0):
        residual = pmf_decomposition_residual(spec, c)
        pair, global_bound = pmf_residual_bounds(c)
        assert abs(residual) <= pair + 1e-9
        assert pair <= global_bound + 1e-9
