import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidmotif.flow_disc import (
    MASK,
    SamplingKnobs,
    ShapeMismatch,
    conditional_path_sample,
    conditional_rate,
    conditional_rate_matrix,
    ctmc_step,
    dfm_loss,
    generative_rates,
    kolmogorov_residual,
    masking_path,
    noise_tokens,
    temper,
    uniform_conditional_rate_matrix,
    uniform_path,
)


def test_masking_path_marginal(rng):
    draws = conditional_path_sample(3, 0.3, rng, size=200000)
    assert abs(np.mean(draws == 3) - 0.3) < 0.005
    assert set(np.unique(draws)) == {MASK, 3}
    with pytest.raises(ValueError):
        conditional_path_sample(MASK, 0.5, rng)


def test_conditional_rate_values():
    assert conditional_rate(MASK, 2, 2, 0.5) == 2.0
    assert conditional_rate(MASK, 1, 2, 0.5) == 0.0
    assert conditional_rate(2, MASK, 2, 0.5) == 0.0
    with pytest.raises(ValueError):
        conditional_rate(MASK, 2, 2, 1.0)


@given(st.floats(0.01, 0.98), st.integers(1, 5))
@settings(max_examples=50, deadline=None)
def test_kolmogorov_masking(t, m1):
    res = kolmogorov_residual(lambda s: masking_path(m1, 6, s), lambda s: conditional_rate_matrix(m1, 6, s), t)
    assert np.abs(res).max() < 1e-6


@given(st.floats(0.01, 0.98), st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_kolmogorov_uniform(t, m1):
    res = kolmogorov_residual(lambda s: uniform_path(m1, 5, s),
                              lambda s: uniform_conditional_rate_matrix(m1, 5, s), t)
    assert np.abs(res).max() < 1e-6


def test_wrong_rates_have_residual():
    res = kolmogorov_residual(lambda s: masking_path(2, 4, s), lambda s: 0.5 * conditional_rate_matrix(2, 4, s), 0.4)
    assert np.abs(res).max() > 0.1


def test_temper():
    p = np.array([0.5, 0.3, 0.2])
    assert np.allclose(temper(p, 1.0), p)
    cold = temper(p, 0.1)
    assert cold[0] > 0.99
    hot = temper(p, 100.0)
    assert np.allclose(hot, 1 / 3, atol=0.01)
    assert np.allclose(temper(np.array([0.0, 1.0]), 0.5), [0.0, 1.0])


def test_knobs_parse():
    k = SamplingKnobs.parse_temperature("0.5:1.5", eta=0.2)
    assert k.temp(0.0) == 0.5 and k.temp(1.0) == 1.5 and np.isclose(k.temp(0.5), 1.0)
    assert SamplingKnobs.parse_temperature("0.7").temp(0.9) == 0.7
    with pytest.raises(ValueError):
        SamplingKnobs.parse_temperature("hot")


def test_generative_rates_masked_and_unmasked():
    probs = np.array([[0.2, 0.8], [0.5, 0.5]])
    tokens = np.array([MASK, 1])
    r = generative_rates(tokens, 0.5, probs, SamplingKnobs(eta=0.4))
    assert np.allclose(r[0], [0.0, 0.2 * 1.2 / 0.5, 0.8 * 1.2 / 0.5])
    assert np.allclose(r[1], [0.4, 0.0, 0.0])
    with pytest.raises(ShapeMismatch):
        generative_rates(tokens, 0.5, probs[:1])


def test_generative_rates_uniform_prior():
    probs = np.array([[0.2, 0.3, 0.5]])
    r = generative_rates(np.array([2]), 0.5, probs, SamplingKnobs(uniform_prior=True))
    assert np.allclose(r[0], [0.0, 0.4, 0.0, 1.0])


def test_generative_rates_batched():
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(4), size=(3, 5))
    tokens = rng.integers(0, 5, size=(3, 5))
    r = generative_rates(tokens, 0.3, probs)
    for b in range(3):
        assert np.allclose(r[b], generative_rates(tokens[b], 0.3, probs[b]))


def test_ctmc_step_final_unmasks_everything(rng):
    probs = np.full((1000, 3), 1 / 3)
    tokens = np.zeros(1000, dtype=int)
    out = ctmc_step(tokens, np.zeros((1000, 4)), 0.01, rng, final=True, probs=probs)
    assert np.all(out != MASK)
    assert abs(np.mean(out == 1) - 1 / 3) < 0.05
    with pytest.raises(ValueError):
        ctmc_step(tokens, np.zeros((1000, 4)), 0.01, rng, final=True)


def test_ctmc_step_jump_probability(rng):
    n = 100000
    tokens = np.zeros(n, dtype=int)
    rates = np.tile([0.0, 2.0, 6.0], (n, 1))
    out = ctmc_step(tokens, rates, 0.05, rng)
    assert abs(np.mean(out == 1) - 0.1) < 0.005
    assert abs(np.mean(out == 2) - 0.3) < 0.005


def test_ctmc_step_clamps_large_outflow(rng):
    tokens = np.zeros(1000, dtype=int)
    rates = np.tile([0.0, 100.0, 300.0], (1000, 1))
    out = ctmc_step(tokens, rates, 0.5, rng)
    assert np.all(out != MASK)
    assert abs(np.mean(out == 2) - 0.75) < 0.05


def test_dfm_loss():
    probs = np.array([[0.5, 0.5], [0.9, 0.1]])
    assert np.isclose(dfm_loss(probs, np.array([1, 1]), np.array([True, True])), -np.log(0.5) - np.log(0.9))
    assert dfm_loss(probs, np.array([1, 1]), np.array([False, False])) == 0.0
    assert dfm_loss(np.array([[1.0, 0.0]]), np.array([1]), np.array([True])) == 0.0
    with pytest.raises(ShapeMismatch):
        dfm_loss(probs, np.array([1]), np.array([True]))


def test_noise_tokens(rng):
    m1 = np.arange(1, 6)
    assert np.array_equal(noise_tokens(m1, 1.0, rng), m1)
    assert np.all(noise_tokens(m1, 0.0, rng) == MASK)


def test_single_token_chain_recovers_posterior(rng):
    # exact posterior for one slot is the data marginal whenever masked
    p = np.array([0.1, 0.2, 0.3, 0.4])
    n, steps = 50000, 50
    tok = np.zeros(n, dtype=int)
    ts = np.linspace(0, 1, steps + 1)
    probs = np.tile(p, (n, 1))
    for i in range(steps):
        t, h = ts[i], ts[i + 1] - ts[i]
        rates = generative_rates(tok, t, probs)
        tok = ctmc_step(tok, rates, h, rng, final=i == steps - 1, probs=probs)
    freq = np.bincount(tok, minlength=5)[1:] / n
    assert 0.5 * np.abs(freq - p).sum() < 0.01
