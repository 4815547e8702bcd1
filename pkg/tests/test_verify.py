import dataclasses

import numpy as np
import pytest

from timfg import (GridSpec, MeasureFlow, PiaState, RelaxedPolicyField, gaussian_density, plain_model, run_pia,
                   solve_all_slices)
from timfg.grid import TriangularField
from timfg.value_pde import AuxValueField
from timfg.verify import (canonical_deviations, consistency_gap, deviation_gain, eehjb_residual, entropy_log_fit,
                          gibbs_consistency, lemma_checks, measure_map_sensitivity)

from conftest import frozen, uniform


LAM = 0.1


@pytest.fixture
def lq_fixed(lq_small):
    model, g, nu = lq_small
    state, rep = run_pia(PiaState.initial(g, nu), LAM, model, g, 1e-8, 80)
    assert rep.converged
    return model, g, nu, state


def test_residual_constant_value(small_grid):
    m = plain_model(sigma=0.7, terminal=lambda t, x: 2.5 + 0.0 * x)
    pi, flow = uniform(small_grid), frozen(small_grid)
    V = solve_all_slices(m, small_grid, pi, flow, 0.5)
    res = eehjb_residual(V, pi, flow, 0.5, m, small_grid)
    assert res.max_abs < 1e-12
    assert np.all(np.isfinite(res.values.data))


def test_residual_at_fixed_point_and_corrupted(lq_fixed):
    model, g, nu, state = lq_fixed
    res = eehjb_residual(state.V, state.pi, state.frozen, LAM, model, g)
    assert res.max_abs <= 5 * (g.dt + g.dx**2)
    data = state.V.values.data + g.xs**2
    bad = AuxValueField(TriangularField(g, data), state.V.diagonal, state.V.diagonal_gradient)
    sigma = 0.5
    assert eehjb_residual(bad, state.pi, state.frozen, LAM, model, g).max_abs >= sigma**2


def test_gibbs_consistency(lq_fixed, decoupled_small):
    model, g, nu, state = lq_fixed
    assert gibbs_consistency(state.pi, state.V, state.frozen, LAM, model, g) <= 1e-6
    assert gibbs_consistency(uniform(g), state.V, state.frozen, LAM, model, g) > 0.1
    dm, dg, dnu = decoupled_small
    s, _ = run_pia(PiaState.initial(dg, dnu), 0.5, dm, dg, 1e-8, 10)
    assert gibbs_consistency(s.pi, s.V, s.frozen, 0.5, dm, dg) == 0.0


def test_consistency_gap(lq_fixed):
    model, g, nu, state = lq_fixed
    gaps = consistency_gap(state.m, state.pi, model, g)
    assert gaps["fp_gap"] <= 2e-8 and np.isnan(gaps["mc_gap"])
    gaps = consistency_gap(state.m, state.pi, model, g, n_particles=50000, seed=1)
    assert gaps["mc_gap"] <= gaps["fp_gap"] + 0.05
    # nu frozen in time while the population drifts at speed ~ c * mean
    mismatch = consistency_gap(MeasureFlow.frozen(g, nu), state.pi, model, g)
    drift = abs(state.m.means()[-1] - state.m.means()[0]) / g.horizon
    assert mismatch["fp_gap"] >= drift * g.horizon / 2


def test_deviation_identical_policy_zero(lq_fixed):
    model, g, nu, state = lq_fixed
    rep = deviation_gain(state, LAM, model, g, 0.0, 0.25, pi_prime_set={"same": state.pi})
    assert all(r["gain"] == 0.0 for r in rep.rows)


def test_deviation_gains_at_fixed_point(lq_fixed):
    model, g, nu, state = lq_fixed
    rep = deviation_gain(state, LAM, model, g, g.times[5], 0.25)
    assert set(r["policy"] for r in rep.rows) == set(canonical_deviations(g))
    assert rep.max_gain() <= 1e-2 and rep.trend_ok()
    assert all(np.isfinite(r["gain"]) for r in rep.rows)


def test_deviation_detects_bad_policy(lq_fixed):
    model, g, nu, state = lq_fixed
    fake = dataclasses.replace(state, pi=RelaxedPolicyField.uniform(g))
    best = max(deviation_gain(fake, LAM, model, g, 0.0, x).max_gain() for x in (-1.0, 0.25, 1.5))
    assert best >= 0.05


def test_deviation_mc_matches_pde(lq_fixed):
    model, g, nu, state = lq_fixed
    devs = {"uniform": canonical_deviations(g)["uniform"]}
    pde = deviation_gain(state, LAM, model, g, 0.0, 0.25, devs, [4 * g.dt])
    mc = deviation_gain(state, LAM, model, g, 0.0, 0.25, devs, [4 * g.dt], method="mc", n_paths=20000, seed=3)
    assert mc.rows[0]["stderr"] > 0
    assert abs(mc.rows[0]["gain"] - pde.rows[0]["gain"]) <= 3 * mc.rows[0]["stderr"] + 0.5


def test_lemma_checks(lq_small):
    model, g, nu = lq_small
    rows = lemma_checks(model, g, 0.1, nu)
    names = {r["check"] for r in rows}
    assert {"softmax_gradient_fd", "softmax_gradient_bound", "gibbs_derivative_bound", "entropy_log_growth",
            "measure_map_ratio_decreasing"} <= names
    assert all(r["passed"] for r in rows), [r for r in rows if not r["passed"]]


def test_constant_drift_gradient_exact():
    g = GridSpec(1.0, 4, -2.0, 2.0, 20, 0.0, 1.0, 16)
    rows = lemma_checks(plain_model(drift=0.8, k1_bound=2.0), g, 0.2, gaussian_density(g, 0, 0.1),
                        horizons=(1.0, 0.5))
    fd = next(r for r in rows if r["check"] == "softmax_gradient_fd")
    grad = next(r for r in rows if r["check"] == "softmax_gradient_bound")
    assert fd["value"] < 1e-9 and grad["value"] == pytest.approx(0.8, abs=1e-12)


def test_entropy_fit_and_sensitivity(lq_small):
    model, g, nu = lq_small
    flow = MeasureFlow.frozen(g, nu)
    fit = entropy_log_fit(model, g, 0.1, flow.stats(0))
    assert fit["max_excess"] <= 0.1 and fit["entropy"].shape == (101,)
    # on the solver's own 12-node action grid the entropy saturates at ln(da)
    coarse = entropy_log_fit(model, g, 0.1, flow.stats(0), n_action=0)
    assert coarse["max_excess"] > fit["max_excess"]
    ratios = measure_map_sensitivity(model, g, 0.1, nu, (1.0, 0.5, 0.25, 0.125))
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_verification_is_read_only(lq_fixed):
    model, g, nu, state = lq_fixed
    before = (state.V.values.data.copy(), state.pi.values.copy(), state.m.densities.copy())
    eehjb_residual(state.V, state.pi, state.frozen, LAM, model, g)
    deviation_gain(state, LAM, model, g, 0.0, 0.25)
    consistency_gap(state.m, state.pi, model, g)
    np.testing.assert_array_equal(before[0], state.V.values.data)
    np.testing.assert_array_equal(before[1], state.pi.values)
    np.testing.assert_array_equal(before[2], state.m.densities)
