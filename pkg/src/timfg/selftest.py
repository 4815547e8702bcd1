"""Closed-form sanity checks run by ``timfg selftest``.

Every check is a small problem whose answer is known exactly (constant
exponents, martingale terminal data, decoupled games and so on). The suite
runs in a few seconds and reports one line per check.
"""

from __future__ import annotations

import math
import tempfile
from collections.abc import Callable
from pathlib import Path

import numpy as np

from .catalog import get_scenario, plain_model
from .gibbs import RelaxedPolicyField, entropy, log_partition, softmax_density
from .grid import GridSpec, tri_index
from .mc_oracle import mc_value, paste_policy, simulate_flow
from .measure_flow import (MeasureFlow, flow_distance, flow_regularity_report, gaussian_density, point_mass,
                           solve_fokker_planck, wasserstein2_1d)
from .model import AuditLattice, audit_assumptions, gaussian_stats, measure_stats_of
from .pia import PiaState, phi_step, iterate_gap, run_pia, vanishing_lambda
from .value_pde import solve_all_slices, solve_t_derivative
from .verify import deviation_gain, eehjb_residual, gibbs_consistency

CHECKS: list[tuple[str, Callable[[], bool]]] = []


def check(fn):
    CHECKS.append((fn.__name__, fn))
    return fn


def _grid(n_time=8, n_space=40, n_action=8, lo=-2.0, hi=2.0, T=1.0, a=(0.0, 1.0)) -> GridSpec:
    return GridSpec(T, n_time, lo, hi, n_space, a[0], a[1], n_action)


def _decoupled(n_time=10, n_space=40):
    sc = get_scenario("decoupled")
    g = GridSpec(sc.model.horizon, n_time, -2.5, 2.5, n_space, 0.0, 1.0, 8)
    return sc.model, g, gaussian_density(g, sc.nu_mean, sc.nu_variance)


# --- model -----------------------------------------------------------------


@check
def audit_constant_coefficients():
    m = plain_model(drift=1.0, sigma=1.0, k1_bound=2.0, eta=0.5)
    rep = audit_assumptions(m, AuditLattice())
    return rep.passed and abs(rep.margins["ellipticity"] - 0.5) < 1e-12


@check
def audit_degenerate_diffusion():
    m = plain_model(drift=1.0, sigma=0.0, k1_bound=2.0, eta=0.5)
    rep = audit_assumptions(m, AuditLattice())
    return (not rep.passed) and abs(rep.margins["ellipticity"] + 0.5) < 1e-12


@check
def stats_point_mass():
    g = _grid(lo=-3.0, hi=3.0, n_space=60)
    st = measure_stats_of(point_mass(g, 2.0), g.xs, g.space_weights)
    return abs(st.mean - 2.0) < 1e-12 and abs(st.variance) < 1e-12


@check
def stats_two_point():
    g = _grid(lo=-3.0, hi=3.0, n_space=60)
    p = 0.5 * (point_mass(g, -1.0) + point_mass(g, 1.0))
    st = measure_stats_of(p, g.xs, g.space_weights)
    return abs(st.mean) < 1e-12 and abs(st.variance - 1.0) < 1e-12


# --- grid ------------------------------------------------------------------


@check
def grid_time_nodes():
    return np.allclose(_grid(n_time=4).times, [0, 0.25, 0.5, 0.75, 1.0], atol=0, rtol=0)


@check
def grid_action_weights():
    w = _grid(n_action=4).action_weights
    return np.allclose(w, [0.125, 0.25, 0.25, 0.25, 0.125], rtol=0, atol=1e-15) and abs(w.sum() - 1) < 1e-12


@check
def grid_space_nodes():
    g = _grid(lo=-3.0, hi=3.0, n_space=600)
    return g.nx == 601 and abs(g.dx - 0.01) < 1e-15


@check
def tri_index_origin():
    return tri_index(0, 0, 5) == 0


@check
def tri_index_order():
    pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    return [tri_index(a, b, 2) for a, b in pairs] == list(range(6))


# --- gibbs -----------------------------------------------------------------


@check
def gibbs_constant_exponent_uniform():
    g = _grid(a=(-1.0, 1.0))
    dens, _ = softmax_density(np.full(g.na, 3.7), 0.3, g.action_weights)
    return np.allclose(dens, 0.5, rtol=0, atol=1e-14)


@check
def entropy_uniform_unit():
    g = _grid()
    return abs(float(entropy(np.ones(g.na), g.action_weights))) < 1e-15


@check
def entropy_uniform_two():
    g = _grid(a=(0.0, 2.0))
    return abs(float(entropy(np.full(g.na, 0.5), g.action_weights)) - math.log(2)) < 1e-14


@check
def log_partition_constant():
    g = _grid()
    m = plain_model(running=1.3)
    val = log_partition(0.0, 0.0, 0.0, gaussian_stats(0.0, 1.0), 0.25, m, g)
    return abs(val - 1.3) < 1e-12


# --- value_pde -------------------------------------------------------------


@check
def value_constant_terminal():
    g = _grid()
    m = plain_model(sigma=0.7, terminal=lambda t, x: 2.5 + 0.0 * x)
    flow = MeasureFlow.frozen(g, gaussian_density(g, 0.0, 0.1))
    V = solve_all_slices(m, g, RelaxedPolicyField.uniform(g), flow, 0.5)
    return float(np.max(np.abs(V.values.data - 2.5))) < 1e-12


@check
def value_linear_martingale():
    # Neumann walls bend x near the box edges; compare well inside a wide box.
    g = _grid(lo=-8.0, hi=8.0, n_space=160)
    m = plain_model(sigma=0.6, terminal=lambda t, x: x)
    flow = MeasureFlow.frozen(g, gaussian_density(g, 0.0, 0.1))
    V = solve_all_slices(m, g, RelaxedPolicyField.uniform(g), flow, 0.5)
    window = np.abs(g.xs) <= 2.0
    return float(np.max(np.abs(V.values.data[:, window] - g.xs[window]))) < 1e-8


@check
def value_single_step():
    g = _grid(n_time=1)
    m = plain_model(sigma=0.6, terminal=lambda t, x: np.cos(x))
    flow = MeasureFlow.frozen(g, gaussian_density(g, 0.0, 0.1))
    V = solve_all_slices(m, g, RelaxedPolicyField.uniform(g), flow, 0.5)
    return (V.values.data.shape[0] == 3 and np.array_equal(V.diagonal[0], V.values[0, 0])
            and np.array_equal(V.diagonal[1], np.cos(g.xs)))


@check
def value_t_derivative_vanishes():
    sc = get_scenario("timeconsistent")
    g = GridSpec(sc.model.horizon, 10, -2.5, 2.5, 40, -1.0, 1.0, 8)
    flow = MeasureFlow.frozen(g, gaussian_density(g, sc.nu_mean, sc.nu_variance))
    W = solve_t_derivative(sc.model, g, RelaxedPolicyField.uniform(g), flow, 0.5)
    return float(np.max(np.abs(W.data))) < 1e-8


# --- measure_flow ----------------------------------------------------------


@check
def fp_mass_conservation():
    model, g, nu = _decoupled()
    m = solve_fokker_planck(model, g, RelaxedPolicyField.uniform(g), MeasureFlow.frozen(g, nu), nu)
    return float(np.max(np.abs(m.mass() - 1.0))) < 1e-10


@check
def w2_identical():
    g = _grid()
    p = gaussian_density(g, 0.1, 0.2)
    return wasserstein2_1d(p, p, g) < 1e-10


@check
def w2_point_masses():
    g = _grid(lo=-3.0, hi=3.0, n_space=60)
    return abs(wasserstein2_1d(point_mass(g, -1.0), point_mass(g, 1.5), g) - 2.5) <= g.dx


@check
def flow_distance_identical():
    model, g, nu = _decoupled()
    m = MeasureFlow.frozen(g, nu)
    return flow_distance(m, m) == 0.0


@check
def flow_distance_shift():
    g = _grid(lo=-3.0, hi=3.0, n_space=120)
    p = gaussian_density(g, 0.0, 0.09)
    q = np.roll(p, 1)
    d = flow_distance(MeasureFlow.frozen(g, p), MeasureFlow.frozen(g, q))
    return abs(d - g.dx) < 1e-6


@check
def regularity_frozen_flow():
    model, g, nu = _decoupled()
    return flow_regularity_report(MeasureFlow.frozen(g, nu))["holder_constant"] == 0.0


# --- mc_oracle -------------------------------------------------------------


@check
def mc_frozen_particles():
    g = _grid(lo=-2.5, hi=2.5, n_space=50)
    m = plain_model(drift=0.0, sigma=0.0, eta=0.0)
    nu = gaussian_density(g, 0.0, 0.09)
    emp = simulate_flow(m, g, RelaxedPolicyField.uniform(g), MeasureFlow.frozen(g, nu), nu, 4000, seed=1, threads=1)
    same = all(np.array_equal(emp.densities[j], emp.densities[0]) for j in range(g.nt))
    return same and wasserstein2_1d(emp.densities[0], nu, g) < 0.05


@check
def mc_constant_payoff():
    g = _grid()
    m = plain_model(sigma=0.8, terminal=lambda t, x: 1.75 + 0.0 * x)
    flow = MeasureFlow.frozen(g, gaussian_density(g, 0.0, 0.1))
    est = mc_value(m, g, RelaxedPolicyField.uniform(g), flow, 0.5, 0.0, 0.0, 0.3, 2000, seed=3, threads=1)
    return est.estimate == 1.75 and est.stderr == 0.0


@check
def paste_zero_window():
    g = _grid()
    star = RelaxedPolicyField(g, np.random.default_rng(0).uniform(0.5, 1.5, (g.nt, g.nx, g.na)))
    return np.array_equal(paste_policy(RelaxedPolicyField.uniform(g), star, 0.25, 0.0).values, star.values)


@check
def paste_full_window():
    g = _grid()
    star = RelaxedPolicyField(g, np.random.default_rng(0).uniform(0.5, 1.5, (g.nt, g.nx, g.na)))
    prime = RelaxedPolicyField.uniform(g)
    return np.array_equal(paste_policy(prime, star, 0.0, g.horizon).values, prime.values)


# --- pia -------------------------------------------------------------------


@check
def pia_decoupled_fixed_after_one_step():
    model, g, nu = _decoupled()
    s1 = phi_step(PiaState.initial(g, nu), 0.5, model, g, threads=1)
    s2 = phi_step(s1, 0.5, model, g, threads=1)
    d_m, d_J = iterate_gap(s2, s1)
    return d_m <= 1e-10 and d_J <= 1e-10 and np.allclose(s2.pi.values, 1.0, rtol=0, atol=1e-14)


@check
def pia_decoupled_converges_at_two():
    model, g, nu = _decoupled()
    _, rep = run_pia(PiaState.initial(g, nu), 0.5, model, g, 1e-8, 20, threads=1)
    return rep.converged and rep.iterations == 2


@check
def pia_restart_from_fixed_point():
    model, g, nu = _decoupled()
    state, _ = run_pia(PiaState.initial(g, nu), 0.5, model, g, 1e-8, 20, threads=1)
    _, rep = run_pia(state.restart(), 0.5, model, g, 1e-8, 20, threads=1)
    return rep.converged and rep.iterations == 1


@check
def vanishing_decoupled_zero_gaps():
    model, g, nu = _decoupled()
    res = vanishing_lambda([0.5, 0.25, 0.125], model, g, nu, 1e-8, 20, threads=1, with_residual=False)
    return all(r.J_gap <= 1e-10 and r.m_gap <= 1e-10 for r in res.rows[1:])


# --- verify ----------------------------------------------------------------


@check
def residual_constant_value():
    g = _grid()
    m = plain_model(sigma=0.7, terminal=lambda t, x: 2.5 + 0.0 * x)
    flow = MeasureFlow.frozen(g, gaussian_density(g, 0.0, 0.1))
    pi = RelaxedPolicyField.uniform(g)
    V = solve_all_slices(m, g, pi, flow, 0.5)
    # V equals c up to rounding, which the 1/ds difference quotient amplifies
    return eehjb_residual(V, pi, flow, 0.5, m, g).max_abs < 1e-12


@check
def gibbs_consistency_decoupled():
    model, g, nu = _decoupled()
    state, _ = run_pia(PiaState.initial(g, nu), 0.5, model, g, 1e-8, 20, threads=1)
    return gibbs_consistency(state.pi, state.V, state.frozen, 0.5, model, g) == 0.0


@check
def deviation_identical_policy():
    model, g, nu = _decoupled()
    state, _ = run_pia(PiaState.initial(g, nu), 0.5, model, g, 1e-8, 20, threads=1)
    rep = deviation_gain(state, 0.5, model, g, 0.0, 0.0, pi_prime_set={"same": state.pi})
    return all(r["gain"] == 0.0 for r in rep.rows)


@check
def softmax_gradient_constant_drift():
    g = _grid(n_action=16)
    m = plain_model(drift=0.8)
    st = gaussian_stats(0.0, 1.0)
    h = 1e-4
    d = (log_partition(0, 0.0, h, st, 0.3, m, g) - log_partition(0, 0.0, -h, st, 0.3, m, g)) / (2 * h)
    return abs(d - 0.8) < 1e-9


# --- cli -------------------------------------------------------------------


@check
def cli_pia_decoupled():
    from .cli import main
    from .io import read_csv

    with tempfile.TemporaryDirectory() as tmp:
        code = main(["pia", "--model", "decoupled", "--n-time", "40", "--n-space", "200", "--n-action", "8",
                     "--threads", "1", "--out", tmp])
        rows = read_csv(Path(tmp) / "convergence.csv")
    return code == 0 and len(rows) == 2


def run_selftest(verbose: bool = True) -> bool:
    """Run every check; print one PASS/FAIL line each and return overall success."""
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn())
            detail = ""
        except Exception as exc:  # a crashing check is a failing check
            passed, detail = False, f" ({type(exc).__name__}: {exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'} {name}{detail}")
    if verbose:
        print(f"selftest: {'all' if ok else 'NOT all'} {len(CHECKS)} checks passed")
    return ok
