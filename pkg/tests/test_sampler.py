import numpy as np
import pytest

from models import ChainConfig, Configuration
from services import sampler_service
from services.equilibrium_service import (
    closed_form_density,
    density_cdf,
    jack_edges,
    krawtchouk_edges,
    tabulate_density,
)
from services.exceptions import ValidationError
from services.measures_service import (
    EnsembleSpec,
    batch_log_weights,
    constant_potential,
    exact_pmf,
    jack_spec,
    krawtchouk_spec,
)
from services.sampler_service import (
    ChainKernel,
    empirical_positions,
    estimate_tail,
    kernel_for,
    ks_distance,
    mh_step,
    run_chain,
    run_chains,
    tail_from_samples,
    trajectory_digest,
    transition_matrix,
)
from services.statespace_service import enumerate_states, quantile_configuration


def test_log_ratio_matches_weights():
    spec = krawtchouk_spec(3, 1.0, 0.5)
    kernel = ChainKernel(spec)
    states = [c.lambdas for c in enumerate_states(3, spec.cap, 0.5)]
    logw = dict(zip(states, batch_log_weights(spec, np.asarray(states))))
    checked = 0
    for lam in states:
        for i in range(3):
            for delta in (1, -1):
                target = list(lam)
                target[i] += delta
                if tuple(target) not in logw:
                    continue
                ratio = kernel.log_ratio(np.asarray(lam), i, delta)
                assert ratio == pytest.approx(logw[tuple(target)] - logw[lam], abs=1e-10)
                checked += 1
    assert checked > 0


def test_detailed_balance():
    states, matrix, pi = transition_matrix(krawtchouk_spec(2, 1.5, 1.0))
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(matrix >= 0.0)
    flow = pi[:, None] * matrix
    np.testing.assert_allclose(flow, flow.T, atol=1e-14)
    np.testing.assert_allclose(pi @ matrix, pi, atol=1e-14)
    assert len(states) == len(pi)


def test_zero_potential_single_site_chain_is_symmetric():
    spec = EnsembleSpec(n=1, theta=1.0, cap=1, potential=constant_potential(0.0, 1.0))
    _, matrix, pi = transition_matrix(spec)
    np.testing.assert_allclose(matrix, [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(pi, [0.5, 0.5])


def test_mh_step_rejects_out_of_range():
    spec = EnsembleSpec(n=1, theta=1.0, cap=0, potential=constant_potential(0.0, 1.0))
    state = Configuration(theta=1.0, lambdas=(0,), cap=0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert mh_step(state, spec, rng) == state


def test_kernel_tables_built_once_per_spec(monkeypatch):
    built = []

    class CountingKernel(ChainKernel):
        def __init__(self, spec):
            built.append(spec)
            super().__init__(spec)

    monkeypatch.setattr(sampler_service, "ChainKernel", CountingKernel)
    kernel_for.cache_clear()
    spec = krawtchouk_spec(4, 1.0, 1.0)
    state = Configuration(theta=1.0, lambdas=(2, 2, 1, 0), cap=spec.cap)
    rng = np.random.default_rng(1)
    for _ in range(200):
        state = mh_step(state, spec, rng)
    list(run_chain(ChainConfig(spec=spec, steps=500, burn_in=0, thin=50)))
    assert built == [spec]
    assert kernel_for(spec) is kernel_for(spec)
    kernel_for.cache_clear()


def test_chain_is_reproducible():
    cfg = ChainConfig(spec=krawtchouk_spec(3, 1.0, 1.0), steps=5000, burn_in=100, thin=7, seed=11)
    first = trajectory_digest(run_chain(cfg))
    second = trajectory_digest(run_chain(cfg))
    assert first == second
    other = ChainConfig(spec=cfg.spec, steps=5000, burn_in=100, thin=7, seed=12)
    assert trajectory_digest(run_chain(other)) != first


def test_parallel_chains_match_single_chain():
    cfg = ChainConfig(spec=krawtchouk_spec(3, 1.0, 1.0), steps=3000, burn_in=0, thin=5, seed=3, chains=3)
    chains = run_chains(cfg)
    assert len(chains) == 3
    assert all(c.shape == (600, 3) for c in chains)
    assert trajectory_digest(chains[1]) == trajectory_digest(run_chain(cfg, chain_index=1))


def test_chain_states_stay_in_space():
    spec = krawtchouk_spec(4, 1.0, 1.0)
    cfg = ChainConfig(spec=spec, steps=4000, burn_in=0, thin=1, seed=0)
    samples = run_chains(cfg)[0]
    assert np.all(samples >= 0) and np.all(samples <= spec.cap)
    assert np.all(np.diff(samples, axis=1) <= 0)


def test_invalid_chain_config():
    spec = krawtchouk_spec(2, 1.0, 1.0)
    with pytest.raises(ValidationError):
        run_chains(ChainConfig(spec=spec, steps=10, burn_in=10))
    with pytest.raises(ValidationError):
        run_chains(ChainConfig(spec=spec, steps=10, thin=0))
    with pytest.raises(ValidationError):
        list(run_chain(ChainConfig(spec=spec, steps=10), initial=Configuration(theta=1.0, lambdas=(0,))))
    with pytest.raises(ValidationError):
        ChainKernel(EnsembleSpec(n=2, theta=1.0, cap=None, potential=constant_potential(0.0, 1.0)))


def test_frequencies_match_exact_pmf():
    spec = krawtchouk_spec(2, 1.0, 1.0)
    lambdas, probs = exact_pmf(spec)
    cfg = ChainConfig(spec=spec, steps=200000, burn_in=1000, thin=1, seed=5)
    samples = run_chains(cfg)[0]
    index = {tuple(lam): k for k, lam in enumerate(lambdas)}
    counts = np.zeros(len(lambdas))
    for row in samples:
        counts[index[tuple(int(x) for x in row)]] += 1
    np.testing.assert_allclose(counts / counts.sum(), probs, atol=1.5e-2)


def test_tail_rule_of_three():
    spec = krawtchouk_spec(2, 1.0, 1.0)
    chains = [np.zeros((100, 2), dtype=int)]
    estimate = tail_from_samples(chains, spec, 100.0, "upper")
    assert estimate.zero_hits
    assert estimate.p_hat == 0.0
    assert estimate.rule_of_three_bound == pytest.approx(0.03)

    certain = tail_from_samples(chains, spec, 100.0, "lower")
    assert certain.p_hat == 1.0
    assert certain.rule_of_three_bound is None
    assert certain.n_effective == 100

    with pytest.raises(ValidationError):
        tail_from_samples(chains, spec, 1.0, "middle")


def test_estimate_tail_close_to_exact():
    spec = krawtchouk_spec(2, 1.0, 1.0)
    lambdas, probs = exact_pmf(spec)
    t = 1.5
    exact = float(sum(p for lam, p in zip(lambdas, probs) if lam[0] + 1.0 >= t * 2))
    cfg = ChainConfig(spec=spec, steps=100000, burn_in=1000, thin=5, seed=2, chains=2)
    estimate = estimate_tail(cfg, t, "upper")
    assert estimate.n_samples == 2 * 19800
    assert estimate.p_hat == pytest.approx(exact, abs=2e-2)
    assert estimate.stderr > 0.0


def test_empirical_positions():
    spec = krawtchouk_spec(2, 1.0, 1.0)
    positions = empirical_positions([np.array([[2, 0], [1, 1]])], spec)
    np.testing.assert_allclose(positions, [1.5, 0.0, 1.0, 0.5])


def test_ks_distance():
    assert ks_distance([0.5], lambda x: np.asarray(x)) == pytest.approx(0.5)
    grid = (np.arange(1000) + 0.5) / 1000
    assert ks_distance(grid, lambda x: np.clip(x, 0.0, 1.0)) == pytest.approx(5e-4)
    with pytest.raises(ValidationError):
        ks_distance([], lambda x: x)


@pytest.mark.slow
@pytest.mark.parametrize("family", ["krawtchouk", "jack"])
def test_long_chain_matches_equilibrium_cdf(family):
    n, theta = 50, 1.0
    if family == "krawtchouk":
        spec = krawtchouk_spec(n, 2.0, theta)
        density = closed_form_density("krawtchouk", theta, m_rate=2.0)
        edges = krawtchouk_edges(2.0, theta)
        s = 2.0 + theta
    else:
        spec = jack_spec(n, 1.0, theta)
        density = closed_form_density("jack", theta, t=1.0)
        edges = jack_edges(1.0, theta)
        s = edges[1] + 1.0
        assert spec.truncated and spec.cap >= n * edges[1]
    phi = tabulate_density(density, s, 1024, theta)
    initial = quantile_configuration(phi, n, n, spec.cap, theta)
    cfg = ChainConfig(spec=spec, steps=1_000_000, burn_in=100_000, thin=100, seed=0)
    positions = empirical_positions(run_chains(cfg, initial), spec)
    distance = ks_distance(positions, lambda x: density_cdf(x, density, breakpoints=edges))
    assert distance <= 0.05
