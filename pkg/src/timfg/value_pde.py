"""Backward solver for the auxiliary value V(t, s, x) on the triangular domain.

For each evaluation time t the linear equation

    dV/ds + A(s,x) D2V + b~(s,x) DV + r~(s - t, x) + lam * delta(s - t) * H(pi(s,x)) = 0,
    V(t, T, x) = F(t, x, m_T),

is stepped backward in s with implicit Euler. All slices share the spatial
operator at a given running time s, so every active slice is solved in one
banded solve with multiple right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ._parallel import pmap
from .errors import NumericError
from .grid import GridSpec, TriangularField
from .measure_flow import MeasureFlow, averaged_drift, diffusion_coefficient
from .model import ModelSpec, evaluate


@dataclass
class LevelCoefficients:
    """Per-node coefficients at every running time: A = sigma^2/2, b~, entropy."""

    A: np.ndarray
    btilde: np.ndarray
    entropy: np.ndarray


@dataclass
class AuxValueField:
    values: TriangularField
    diagonal: np.ndarray
    diagonal_gradient: np.ndarray


def level_coefficients(model: ModelSpec, grid: GridSpec, policy, flow: MeasureFlow) -> LevelCoefficients:
    return LevelCoefficients(
        A=diffusion_coefficient(model, grid, flow),
        btilde=averaged_drift(model, grid, policy, flow),
        entropy=policy.entropy(),
    )


def spatial_gradient(values: np.ndarray, dx: float) -> np.ndarray:
    """Centered differences inside, one-sided at the two boundary nodes (last axis)."""
    return np.gradient(values, dx, axis=-1, edge_order=1)


def generator_bands(A: np.ndarray, btilde: np.ndarray, dx: float, *, centered_only: bool = False):
    """Sub-, main- and super-diagonal of the discrete generator A D2 + b~ D.

    The drift uses centered differences when that keeps the off-diagonals
    nonnegative (|b~| dx <= 2A) and upwinding otherwise, so the implicit
    matrix is always an M-matrix. Boundary rows reflect through a ghost node
    (zero normal derivative), which removes the drift term there.
    """
    diff = A / dx**2
    if centered_only:
        centered = np.ones_like(A, dtype=bool)
    else:
        centered = np.abs(btilde) * dx <= 2 * A
    lower = np.where(centered, diff - btilde / (2 * dx), diff + np.maximum(-btilde, 0.0) / dx)
    upper = np.where(centered, diff + btilde / (2 * dx), diff + np.maximum(btilde, 0.0) / dx)
    lower[0], upper[0] = 0.0, 2 * diff[0]
    lower[-1], upper[-1] = 2 * diff[-1], 0.0
    return lower, -(lower + upper), upper


def apply_generator(V: np.ndarray, bands) -> np.ndarray:
    """Generator applied to ``V`` along its last axis."""
    lower, main, upper = bands
    out = main * V
    out[..., 1:] += lower[1:] * V[..., :-1]
    out[..., :-1] += upper[:-1] * V[..., 1:]
    return out


def _implicit_matrix(bands, ds: float) -> np.ndarray:
    lower, main, upper = bands
    n = main.size
    ab = np.zeros((3, n))
    ab[1] = 1.0 - ds * main
    ab[0, 1:] = -ds * upper[:-1]
    ab[2, :-1] = -ds * lower[1:]
    return ab


def _solve_level(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if np.any(ab[1] <= 0):
        raise NumericError("implicit value matrix has a nonpositive diagonal")
    try:
        out = solve_banded((1, 1), ab, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular tridiagonal system: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericError("tridiagonal solve produced non-finite values")
    return out


def _reward_average(fn, taus: np.ndarray, grid: GridSpec, stats, policy_row: np.ndarray) -> np.ndarray:
    """sum_a f(tau_k, x_i, m, a) pi(x_i, a) w_a for each tau_k, shape (len(taus), nx)."""
    shape = (taus.size, grid.nx, grid.na)
    vals = evaluate(fn, taus[:, None, None], grid.xs[None, :, None], stats,
                    grid.actions[None, None, :], shape=shape, name="running_reward")
    return np.einsum("kia,ia->ki", vals, policy_row * grid.action_weights)


class _Sources:
    """Running sources for slice indices ``slices`` at running-time level j_s."""

    def __init__(self, model, grid, policy, flow, coeffs, lam, derivative: bool):
        self.grid = grid
        self.policy = policy
        self.flow = flow
        self.coeffs = coeffs
        self.lam = lam
        if derivative:
            dr, dd = model.reward_dtau(), model.discount_dtau()
            self.reward = lambda *a: -np.asarray(dr(*a), dtype=float)
            self.disc = lambda tau: -np.asarray(dd(tau), dtype=float)
        else:
            self.reward = model.running_reward
            self.disc = model.discount

    def __call__(self, j_s: int, slices: np.ndarray) -> np.ndarray:
        grid = self.grid
        taus = (j_s - slices) * grid.dt
        src = _reward_average(self.reward, taus, grid, self.flow.stats(j_s), self.policy.values[j_s])
        if self.lam != 0:
            disc = evaluate(self.disc, taus, shape=taus.shape, name="discount")
            src += self.lam * disc[:, None] * self.coeffs.entropy[j_s][None, :]
        return src


def _terminal(fn, grid: GridSpec, flow: MeasureFlow, slices: np.ndarray, name: str) -> np.ndarray:
    ts = grid.times[slices]
    return evaluate(fn, ts[:, None], grid.xs[None, :], flow.stats(grid.n_time),
                    shape=(slices.size, grid.nx), name=name).copy()


def _sweep(grid: GridSpec, coeffs: LevelCoefficients, sources: _Sources, terminal: np.ndarray,
           slices: np.ndarray, store, threads: int | None):
    """Backward implicit Euler for ``slices`` (sorted); ``store(j_s, active, values)``."""
    store(grid.n_time, np.arange(slices.size), terminal)
    current = terminal
    levels = list(range(grid.n_time - 1, int(slices[0]) - 1, -1))
    active_at = {j: np.searchsorted(slices, j, side="right") for j in levels}
    src = dict(zip(levels, pmap(lambda j: sources(j, slices[: active_at[j]]), levels, threads)))
    for j_s in levels:
        k = active_at[j_s]
        bands = generator_bands(coeffs.A[j_s], coeffs.btilde[j_s], grid.dx)
        ab = _implicit_matrix(bands, grid.dt)
        rhs = current[:k] + grid.dt * src.pop(j_s)
        current = _solve_level(ab, rhs.T).T
        store(j_s, np.arange(k), current)


def solve_all_slices(model: ModelSpec, grid: GridSpec, policy, flow: MeasureFlow, lam: float,
                     *, coeffs: LevelCoefficients | None = None, threads: int | None = None) -> AuxValueField:
    """V(t_j, s, x) for every slice j, plus the diagonal J and its x-gradient."""
    grid.require_same(policy.grid, "policy")
    grid.require_same(flow.grid, "flow")
    coeffs = coeffs or level_coefficients(model, grid, policy, flow)
    field = TriangularField(grid)
    slices = np.arange(grid.nt)
    terminal = _terminal(model.terminal_reward, grid, flow, slices, "terminal_reward")
    sources = _Sources(model, grid, policy, flow, coeffs, lam, derivative=False)
    _sweep(grid, coeffs, sources, terminal, slices,
           lambda j_s, idx, vals: field.set_column(j_s, vals), threads)
    diag = field.diagonal()
    return AuxValueField(field, diag, spatial_gradient(diag, grid.dx))


def solve_slice(model: ModelSpec, grid: GridSpec, policy, flow: MeasureFlow, lam: float, j_t: int,
                *, coeffs: LevelCoefficients | None = None) -> np.ndarray:
    """V(t_{j_t}, s_j, x_i) for j = j_t..N as an array of shape (N - j_t + 1, nx)."""
    grid.require_same(policy.grid, "policy")
    grid.require_same(flow.grid, "flow")
    if not 0 <= j_t <= grid.n_time:
        raise IndexError(f"slice index {j_t} out of range")
    coeffs = coeffs or level_coefficients(model, grid, policy, flow)
    slab = np.empty((grid.n_time - j_t + 1, grid.nx))
    slices = np.array([j_t])
    terminal = _terminal(model.terminal_reward, grid, flow, slices, "terminal_reward")

    def store(j_s, idx, vals):
        slab[j_s - j_t] = vals[0]

    sources = _Sources(model, grid, policy, flow, coeffs, lam, derivative=False)
    _sweep(grid, coeffs, sources, terminal, slices, store, threads=1)
    return slab


def solve_t_derivative(model: ModelSpec, grid: GridSpec, policy, flow: MeasureFlow, lam: float,
                       *, coeffs: LevelCoefficients | None = None, threads: int | None = None) -> TriangularField:
    """W = dV/dt: same operator, source -dr/dtau - lam delta' H, terminal dF/dt."""
    coeffs = coeffs or level_coefficients(model, grid, policy, flow)
    field = TriangularField(grid)
    slices = np.arange(grid.nt)
    terminal = _terminal(model.terminal_dt(), grid, flow, slices, "terminal_reward_dt")
    sources = _Sources(model, grid, policy, flow, coeffs, lam, derivative=True)
    _sweep(grid, coeffs, sources, terminal, slices,
           lambda j_s, idx, vals: field.set_column(j_s, vals), threads)
    return field
