import dataclasses
import math

import numpy as np
import pytest

from timfg import (ConfigError, GridSpec, InvalidDensityError, RelaxedPolicyField, entropy, get_scenario,
                   gibbs_policy, gibbs_policy_field, log_partition, plain_model, softmax_density)
from timfg.gibbs import ActionDensity, sharpened_policy
from timfg.model import gaussian_stats

from conftest import frozen

E = math.e


def unit_grid(n_action=64, lo=0.0, hi=1.0):
    return GridSpec(1.0, 4, -1.0, 1.0, 8, lo, hi, n_action)


def linear_reward_model(lo=0.0, hi=1.0):
    """Exponent g(a) = a at grad_p = 0."""
    base = plain_model(action_lo=lo, action_hi=hi)
    return dataclasses.replace(base, running_reward=lambda tau, x, m, a: a + 0.0 * x)


ST = gaussian_stats(0.0, 1.0)


def test_constant_exponent_gives_uniform():
    g = unit_grid(lo=-1.0, hi=2.0)
    pi = gibbs_policy(0.0, 0.3, 1.7, ST, 0.2, plain_model(drift=0.4, running=2.0, action_lo=-1.0, action_hi=2.0), g)
    np.testing.assert_allclose(pi.values, 1 / 3, atol=1e-14)
    assert pi.mass() == pytest.approx(1.0, abs=1e-12)


def test_closed_form_exponential():
    g = unit_grid(n_action=4096)
    pi = gibbs_policy(0.0, 0.0, 0.0, ST, 1.0, linear_reward_model(), g)
    exact = np.exp(g.actions) / (E - 1)
    assert np.max(np.abs(pi.values - exact)) < 1e-8
    assert pi.values[0] == pytest.approx(0.58198, abs=1e-5)
    assert pi.values[-1] == pytest.approx(1.58198, abs=1e-5)


def test_small_lambda_concentrates():
    g = unit_grid(n_action=64)
    pi = gibbs_policy(0.0, 0.0, 0.0, ST, 1e-3, linear_reward_model(), g)
    top_two = pi.values[-2:] @ g.action_weights[-2:] + 0.5 * g.da * pi.values[-2]
    assert top_two >= 0.99


def test_entropy_examples():
    g = unit_grid()
    assert float(entropy(np.ones(g.na), g.action_weights)) == pytest.approx(0.0, abs=1e-15)
    g2 = unit_grid(hi=2.0)
    assert float(entropy(np.full(g2.na, 0.5), g2.action_weights)) == pytest.approx(math.log(2), abs=1e-14)
    g3 = unit_grid(n_action=4096)
    pi = np.exp(g3.actions) / (E - 1)
    expected = math.log(E - 1) - 1 / (E - 1)
    assert float(entropy(pi, g3.action_weights)) == pytest.approx(expected, abs=1e-7)
    # closed form is -0.040652; the rounded -0.04068 quoted alongside it is off by 3e-5
    assert expected == pytest.approx(-0.04065, abs=1e-5)


def test_entropy_rejects_nonpositive():
    g = unit_grid()
    vals = np.ones(g.na)
    vals[3] = 0.0
    with pytest.raises(InvalidDensityError):
        entropy(vals, g.action_weights)


def test_log_partition_examples():
    g = unit_grid(n_action=4096)
    assert log_partition(0, 0, 0, ST, 0.37, plain_model(running=1.3), g) == pytest.approx(1.3, abs=1e-12)
    m = linear_reward_model()
    assert log_partition(0, 0, 0, ST, 1.0, m, g) == pytest.approx(math.log(E - 1), abs=1e-8)
    assert math.log(E - 1) == pytest.approx(0.54132, abs=1e-5)
    assert abs(log_partition(0, 0, 0, ST, 1e-4, m, g) - 1.0) < 1e-3


def test_lambda_must_be_positive():
    g = unit_grid()
    with pytest.raises(ConfigError):
        softmax_density(np.zeros(g.na), 0.0, g.action_weights)


def test_overflow_safety():
    g = unit_grid()
    dens, lp = softmax_density(1e6 * g.actions, 1e-3, g.action_weights)
    assert np.all(np.isfinite(dens)) and np.isfinite(lp)
    assert dens @ g.action_weights == pytest.approx(1.0, abs=1e-10)


def test_shift_invariance_and_duality():
    g = unit_grid(n_action=32, lo=-1.0, hi=1.0)
    rng = np.random.default_rng(4)
    G = rng.normal(size=(50, g.na)) * 3
    for lam in (0.05, 0.5, 5.0):
        d1, l1 = softmax_density(G, lam, g.action_weights)
        d2, l2 = softmax_density(G + 7.5, lam, g.action_weights)
        np.testing.assert_allclose(d1, d2, atol=1e-12)
        np.testing.assert_allclose(l2 - l1, 7.5, atol=1e-12)
        inner = (G * d1) @ g.action_weights
        np.testing.assert_allclose(l1, inner + lam * entropy(d1, g.action_weights), atol=1e-9)


def test_policy_field_normalized_and_cached_shapes():
    sc = get_scenario("lq_mean")
    g = GridSpec(sc.model.horizon, 10, -2.5, 2.5, 30, -1.0, 1.0, 16)
    grad = np.sin(g.xs)[None, :] * np.linspace(-5, 5, g.nt)[:, None]
    pi = gibbs_policy_field(sc.model, g, grad, frozen(g, 0.25, 0.04), 0.1)
    assert pi.values.shape == (g.nt, g.nx, g.na)
    assert np.max(np.abs(pi.mass() - 1.0)) < 1e-10
    assert np.all(pi.values > 0)


def test_relaxed_policy_helpers():
    g = unit_grid(n_action=8, lo=0.0, hi=2.0)
    u = RelaxedPolicyField.uniform(g)
    np.testing.assert_allclose(u.values, 0.5)
    np.testing.assert_allclose(u.entropy(), math.log(2), atol=1e-14)
    avg = u.average(np.broadcast_to(g.actions, (g.nt, g.nx, g.na)))
    np.testing.assert_allclose(avg, 1.0, atol=1e-14)
    c = u.copy()
    c.values[0, 0, 0] = 9.0
    assert u.values[0, 0, 0] == 0.5
    sharp = sharpened_policy(g, 1.5)
    assert isinstance(sharp, ActionDensity)
    assert g.actions[np.argmax(sharp.values)] == 1.5
    assert sharp.mass() == pytest.approx(1.0, abs=1e-10)
