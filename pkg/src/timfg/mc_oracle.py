"""Monte-Carlo cross-checks: Euler-Maruyama particles under a relaxed policy.

Particles are split into fixed-size blocks, each driven by its own Philox
stream keyed by ``(seed, block)``. The block layout does not depend on the
number of worker threads, so results are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import pmap
from .errors import ConfigError
from .gibbs import ActionDensity, RelaxedPolicyField
from .grid import GridSpec
from .measure_flow import MeasureFlow, averaged_drift, quantile_functions
from .model import ModelSpec, evaluate
from .value_pde import _reward_average

BLOCK_SIZE = 8192
MIN_PARTICLES = 1000


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_SIZE, n - b * BLOCK_SIZE)) for b in range((n + BLOCK_SIZE - 1) // BLOCK_SIZE)]


def reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fold positions back into [lo, hi] by mirror reflection at both walls."""
    span = hi - lo
    y = np.mod(x - lo, 2 * span)
    return lo + np.where(y > span, 2 * span - y, y)


def deposit(x: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Linear (cloud-in-cell) weights of the particles on the space nodes."""
    pos = (x - grid.x_lo) / grid.dx
    i = np.clip(np.floor(pos).astype(np.int64), 0, grid.n_space - 1)
    theta = np.clip(pos - i, 0.0, 1.0)
    return (np.bincount(i, 1.0 - theta, minlength=grid.nx)
            + np.bincount(i + 1, theta, minlength=grid.nx))


def _check_count(n: int) -> None:
    if n < MIN_PARTICLES:
        raise ConfigError(f"need at least {MIN_PARTICLES} particles, got {n}")


def simulate_flow(model: ModelSpec, grid: GridSpec, policy, frozen: MeasureFlow, nu: np.ndarray | None,
                  n_particles: int, seed: int, *, threads: int | None = None) -> MeasureFlow:
    """Empirical flow of particles started from ``nu`` under the averaged drift."""
    _check_count(n_particles)
    nu = frozen.nu if nu is None else np.asarray(nu, dtype=float)
    bt = averaged_drift(model, grid, policy, frozen)
    q0 = quantile_functions(nu, grid, n_quantiles=8 * grid.n_space)[0]
    u_grid = (np.arange(q0.size) + 0.5) / q0.size
    sqdt = np.sqrt(grid.dt)

    def run(block):
        b, n = block
        rng = block_rng(seed, b)
        x = np.interp(rng.random(n), u_grid, q0)
        counts = np.empty((grid.nt, grid.nx))
        counts[0] = deposit(x, grid)
        for j in range(grid.n_time):
            st = frozen.stats(j)
            sig = evaluate(model.diffusion, grid.times[j], x, st, shape=x.shape, name="diffusion")
            x = x + np.interp(x, grid.xs, bt[j]) * grid.dt + sig * sqdt * rng.standard_normal(n)
            x = reflect(x, grid.x_lo, grid.x_hi)
            counts[j + 1] = deposit(x, grid)
        return counts

    total = np.zeros((grid.nt, grid.nx))
    for counts in pmap(run, _blocks(n_particles), threads):
        total += counts
    return MeasureFlow(grid, total / (n_particles * grid.space_weights))


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    n: int
    seed: int
    samples: np.ndarray | None = None


def _summary(samples: np.ndarray, seed: int, keep: bool) -> MCEstimate:
    n = samples.size
    shifted = samples - samples[0]
    mean = samples[0] + float(np.mean(shifted))
    sd = float(np.std(shifted, ddof=1)) if n > 1 else 0.0
    return MCEstimate(mean, sd / np.sqrt(n), n, seed, samples if keep else None)


def mc_value(model: ModelSpec, grid: GridSpec, policy, frozen: MeasureFlow, lam: float, t: float, s: float,
             x: float, n_paths: int, seed: int, *, threads: int | None = None,
             keep_samples: bool = False) -> MCEstimate:
    """Pathwise estimate of V(t, s, x) with left-endpoint time quadrature."""
    _check_count(n_paths)
    j_t, j_s = grid.time_index(t), grid.time_index(s)
    if j_s < j_t:
        raise ConfigError("need t <= s")
    if not grid.x_lo <= x <= grid.x_hi:
        raise ConfigError(f"x={x} outside the box")
    bt = averaged_drift(model, grid, policy, frozen)
    ent = policy.entropy()
    levels = range(j_s, grid.n_time)
    run_src = {}
    for j in levels:
        tau = np.array([(j - j_t) * grid.dt])
        r = _reward_average(model.running_reward, tau, grid, frozen.stats(j), policy.values[j])[0]
        d = float(np.asarray(model.discount(tau[0])))
        run_src[j] = r + lam * d * ent[j]
    sqdt = np.sqrt(grid.dt)
    stats_T = frozen.stats(grid.n_time)

    def run(block):
        b, n = block
        rng = block_rng(seed, b)
        pos = np.full(n, float(x))
        pay = np.zeros(n)
        for j in levels:
            pay += np.interp(pos, grid.xs, run_src[j]) * grid.dt
            sig = evaluate(model.diffusion, grid.times[j], pos, frozen.stats(j), shape=pos.shape, name="diffusion")
            pos = pos + np.interp(pos, grid.xs, bt[j]) * grid.dt + sig * sqdt * rng.standard_normal(n)
            pos = reflect(pos, grid.x_lo, grid.x_hi)
        return pay + evaluate(model.terminal_reward, t, pos, stats_T, shape=pos.shape, name="terminal_reward")

    samples = np.concatenate(pmap(run, _blocks(n_paths), threads))
    return _summary(samples, seed, keep_samples)


def paste_policy(pi_prime, pi_star: RelaxedPolicyField, t: float, epsilon: float) -> RelaxedPolicyField:
    """pi' on the time nodes of [t, t + epsilon], pi* elsewhere.

    ``epsilon`` must be a multiple of the time step; ``epsilon == 0`` returns a
    copy of ``pi_star``.
    """
    grid = pi_star.grid
    j = grid.time_index(t)
    k = grid.steps(epsilon)
    if j + k > grid.n_time:
        raise ConfigError("paste window extends past the horizon")
    out = pi_star.copy()
    if k == 0:
        return out
    if isinstance(pi_prime, ActionDensity):
        out.values[j : j + k + 1] = pi_prime.values
    else:
        grid.require_same(pi_prime.grid, "pasted policies")
        out.values[j : j + k + 1] = pi_prime.values[j : j + k + 1]
    return out
