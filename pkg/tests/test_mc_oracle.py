import numpy as np
import pytest

from timfg import ConfigError, GridSpec, MeasureFlow, gaussian_density, plain_model, solve_slice, wasserstein2_1d
from timfg.gibbs import sharpened_policy
from timfg.mc_oracle import BLOCK_SIZE, deposit, mc_value, paste_policy, reflect, simulate_flow

from conftest import frozen, random_policy, uniform


def test_frozen_particles_keep_initial_law():
    g = GridSpec(1.0, 8, -2.5, 2.5, 50, 0.0, 1.0, 4)
    nu = gaussian_density(g, 0.0, 0.09)
    m = plain_model(sigma=0.0, eta=0.0)
    emp = simulate_flow(m, g, uniform(g), MeasureFlow.frozen(g, nu), nu, 20000, seed=1, threads=2)
    for j in range(g.nt):
        np.testing.assert_array_equal(emp.densities[j], emp.densities[0])
    assert wasserstein2_1d(emp.densities[0], nu, g) < 0.02


def test_drift_mean_gaussian_law():
    g = GridSpec(1.0, 50, -1.0, 3.0, 400, 0.0, 1.0, 4)
    nu = gaussian_density(g, 0.0, 1e-5)
    m = plain_model(drift=1.0, sigma=0.1)
    n = 20000
    emp = simulate_flow(m, g, uniform(g), MeasureFlow.frozen(g, nu), nu, n, seed=5)
    assert abs(emp.means()[-1] - 1.0) <= 3 * 0.1 / np.sqrt(n)


def test_constant_payoff_exact():
    g = GridSpec(1.0, 8, -2.0, 2.0, 40, 0.0, 1.0, 4)
    m = plain_model(sigma=0.8, terminal=lambda t, x: 1.75 + 0.0 * x)
    est = mc_value(m, g, uniform(g), frozen(g), 0.5, 0.0, 0.0, 0.3, 5000, seed=3)
    assert est.estimate == 1.75 and est.stderr == 0.0 and est.n == 5000 and est.seed == 3


def test_quadratic_payoff_closed_form():
    g = GridSpec(1.0, 40, -5.0, 5.0, 200, 0.0, 1.0, 4)
    m = plain_model(sigma=0.5, terminal=lambda t, x: x**2)
    for s, x in ((0.0, 0.3), (0.5, -1.0)):
        est = mc_value(m, g, uniform(g), frozen(g), 0.5, 0.0, s, x, 40000, seed=9)
        exact = x**2 + 0.25 * (1.0 - s)
        assert abs(est.estimate - exact) <= 3 * est.stderr


def test_agrees_with_pde(lq_small):
    model, g, nu = lq_small
    pi, flow = random_policy(g, 4), MeasureFlow.frozen(g, nu)
    slab = solve_slice(model, g, pi, flow, 0.3, 0)
    i = g.space_index(0.3)
    est = mc_value(model, g, pi, flow, 0.3, 0.0, 0.0, g.xs[i], 40000, seed=2)
    assert abs(est.estimate - slab[0, i]) <= 3 * est.stderr + 2.0 * (g.dt + g.dx**2)


def test_thread_independence(lq_small):
    model, g, nu = lq_small
    pi, flow = random_policy(g, 4), MeasureFlow.frozen(g, nu)
    n = 2 * BLOCK_SIZE + 123
    a = simulate_flow(model, g, pi, flow, nu, n, seed=8, threads=1)
    b = simulate_flow(model, g, pi, flow, nu, n, seed=8, threads=3)
    np.testing.assert_array_equal(a.densities, b.densities)
    e1 = mc_value(model, g, pi, flow, 0.3, 0.0, 0.0, 0.2, n, seed=8, threads=1)
    e2 = mc_value(model, g, pi, flow, 0.3, 0.0, 0.0, 0.2, n, seed=8, threads=4)
    assert (e1.estimate, e1.stderr) == (e2.estimate, e2.stderr)
    e3 = mc_value(model, g, pi, flow, 0.3, 0.0, 0.0, 0.2, n, seed=9, threads=1)
    assert e3.estimate != e1.estimate


def test_stderr_scaling(lq_small):
    model, g, nu = lq_small
    pi, flow = random_policy(g, 4), MeasureFlow.frozen(g, nu)
    errs = [mc_value(model, g, pi, flow, 0.3, 0.0, 0.0, 0.2, n, seed=1).stderr for n in (10000, 40000, 160000)]
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(2.0, rel=0.2)


def test_too_few_particles(lq_small):
    model, g, nu = lq_small
    with pytest.raises(ConfigError):
        simulate_flow(model, g, uniform(g), MeasureFlow.frozen(g, nu), nu, 999, seed=0)


def test_reflect_and_deposit():
    x = np.array([-2.5, 1.2, 2.3, 0.0])
    np.testing.assert_allclose(reflect(x, -2.0, 2.0), [-1.5, 1.2, 1.7, 0.0])
    g = GridSpec(1.0, 4, -2.0, 2.0, 40, 0.0, 1.0, 4)
    counts = deposit(np.array([-2.0, 0.05, 2.0, 0.73]), g)
    assert counts.sum() == pytest.approx(4.0)


def test_paste_examples():
    g = GridSpec(1.0, 10, -2.0, 2.0, 20, 0.0, 1.0, 4)
    star, prime = random_policy(g, 1), random_policy(g, 2)
    np.testing.assert_array_equal(paste_policy(prime, star, 0.3, 0.0).values, star.values)
    np.testing.assert_array_equal(paste_policy(prime, star, 0.0, 1.0).values, prime.values)
    out = paste_policy(prime, star, 0.3, 0.2)
    differs = [j for j in range(g.nt) if not np.array_equal(out.values[j], star.values[j])]
    assert differs == [3, 4, 5]
    sharp = sharpened_policy(g, 0.5)
    out = paste_policy(sharp, star, 0.5, 0.1)
    np.testing.assert_array_equal(out.values[5, 7], sharp.values)
    with pytest.raises(ConfigError):
        paste_policy(prime, star, 0.3, 0.15)
    with pytest.raises(ConfigError):
        paste_policy(prime, star, 0.9, 0.2)
