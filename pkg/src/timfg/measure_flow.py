"""Population flows: conservative Fokker-Planck evolution and 1-D Wasserstein-2."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, ConservationError, InvalidDensityError, SchemeError
from .grid import GridSpec
from .model import MeasureStats, ModelSpec, evaluate, measure_stats_of


class MeasureFlow:
    """Nodal densities p[j, i] on the time x space grid; row 0 is the initial law."""

    def __init__(self, grid: GridSpec, densities: np.ndarray, *, check: bool = True):
        if densities.shape != (grid.nt, grid.nx):
            raise ConfigError(f"flow shape {densities.shape} does not match grid")
        self.grid = grid
        self.densities = densities
        self._stats: list[MeasureStats | None] = [None] * grid.nt
        if check:
            mass = densities @ grid.space_weights
            if np.any(densities < -1e-12) or np.max(np.abs(mass - 1.0)) > 1e-8:
                raise InvalidDensityError("flow densities must be nonnegative with unit mass")

    @classmethod
    def frozen(cls, grid: GridSpec, nu: np.ndarray) -> MeasureFlow:
        """The constant-in-time flow m_t = nu."""
        return cls(grid, np.repeat(np.asarray(nu, dtype=float)[None, :], grid.nt, axis=0))

    @property
    def nu(self) -> np.ndarray:
        return self.densities[0]

    def stats(self, j: int) -> MeasureStats:
        st = self._stats[j]
        if st is None:
            st = measure_stats_of(self.densities[j], self.grid.xs, self.grid.space_weights)
            self._stats[j] = st
        return st

    def means(self) -> np.ndarray:
        return np.array([self.stats(j).mean for j in range(self.grid.nt)])

    def variances(self) -> np.ndarray:
        return np.array([self.stats(j).variance for j in range(self.grid.nt)])

    def mass(self) -> np.ndarray:
        return self.densities @ self.grid.space_weights


def discretize_density(grid: GridSpec, pdf) -> np.ndarray:
    """Evaluate ``pdf`` at the space nodes and renormalize to unit trapezoid mass."""
    p = np.maximum(np.asarray(pdf(grid.xs), dtype=float), 0.0)
    mass = float(p @ grid.space_weights)
    if not mass > 0:
        raise InvalidDensityError("initial density has no mass on the grid")
    return p / mass


def gaussian_density(grid: GridSpec, mean: float, variance: float) -> np.ndarray:
    return discretize_density(grid, lambda x: np.exp(-0.5 * (x - mean) ** 2 / variance))


def point_mass(grid: GridSpec, x: float) -> np.ndarray:
    """Unit mass at the node nearest ``x``."""
    p = np.zeros(grid.nx)
    i = grid.space_index(x)
    p[i] = 1.0 / grid.space_weights[i]
    return p


def averaged_drift(model: ModelSpec, grid: GridSpec, policy, flow: MeasureFlow) -> np.ndarray:
    """b~(t_j, x_i) = sum_a b(t_j, x_i, m_j, a) pi(t_j, x_i, a) w_a, shape (nt, nx)."""
    out = np.empty((grid.nt, grid.nx))
    shape = (grid.nx, grid.na)
    for j in range(grid.nt):
        b = evaluate(model.drift, grid.times[j], grid.xs[:, None], flow.stats(j),
                     grid.actions[None, :], shape=shape, name="drift")
        out[j] = policy.average(b, j)
    return out


def diffusion_coefficient(model: ModelSpec, grid: GridSpec, flow: MeasureFlow) -> np.ndarray:
    """A = sigma^2 / 2 at every node, shape (nt, nx)."""
    out = np.empty((grid.nt, grid.nx))
    for j in range(grid.nt):
        sig = evaluate(model.diffusion, grid.times[j], grid.xs, flow.stats(j),
                       shape=(grid.nx,), name="diffusion")
        out[j] = 0.5 * sig**2
    return out


def _bernoulli(z: np.ndarray) -> np.ndarray:
    """z / (exp(z) - 1), continuous at 0."""
    out = np.ones_like(z)
    big = np.abs(z) > 1e-8
    with np.errstate(over="ignore"):
        out[big] = z[big] / np.expm1(z[big])
    out[~big] = 1.0 - 0.5 * z[~big]
    return out


def fokker_planck_matrix(A: np.ndarray, btilde: np.ndarray, grid: GridSpec, dt: float) -> np.ndarray:
    """Banded (1,1) matrix of one implicit step of dp/dt = d/dx(A dp/dx + a p).

    ``a = dA/dx - b~``. Fluxes at cell faces use Chang-Cooper weighting, which
    reduces to the Bernoulli-function form c+ = (A/dx) B(-w), c- = (A/dx) B(w)
    with Peclet number w = a dx / A. Rows are scaled by the trapezoid control
    volumes, so columns sum to those volumes and mass is conserved exactly.
    """
    dx = grid.dx
    A_h = 0.5 * (A[1:] + A[:-1])
    a_h = (A[1:] - A[:-1]) / dx - 0.5 * (btilde[1:] + btilde[:-1])
    peclet = a_h * dx / A_h
    c_plus = A_h / dx * _bernoulli(-peclet)  # weight of p_{i+1} in face flux
    c_minus = A_h / dx * _bernoulli(peclet)  # weight of -p_i in face flux
    n = grid.nx
    ab = np.zeros((3, n))
    ab[1] = grid.space_weights.copy()
    ab[1, :-1] += dt * c_minus
    ab[1, 1:] += dt * c_plus
    ab[0, 1:] = -dt * c_plus
    ab[2, :-1] = -dt * c_minus
    return ab


def solve_fokker_planck(model: ModelSpec, grid: GridSpec, policy, frozen: MeasureFlow,
                        nu: np.ndarray | None = None) -> MeasureFlow:
    """Law of the state under ``policy`` with coefficients frozen at ``frozen``.

    Implicit Euler in time; coefficients at the new time level.
    """
    grid.require_same(frozen.grid, "policy and frozen flow")
    nu = frozen.nu if nu is None else np.asarray(nu, dtype=float)
    w = grid.space_weights
    if abs(float(nu @ w) - 1.0) > 1e-8:
        raise InvalidDensityError("initial law must have unit mass")
    A = diffusion_coefficient(model, grid, frozen)
    bt = averaged_drift(model, grid, policy, frozen)
    p = np.empty((grid.nt, grid.nx))
    p[0] = nu
    for j in range(grid.n_time):
        ab = fokker_planck_matrix(A[j + 1], bt[j + 1], grid, grid.dt)
        nxt = solve_banded((1, 1), ab, w * p[j], check_finite=False)
        low = float(nxt.min())
        if low < -1e-10:
            raise SchemeError(f"negative density {low:.3e} after step {j + 1}")
        if low < 0:
            nxt = np.maximum(nxt, 0.0)
            nxt /= nxt @ w
        drift = abs(float(nxt @ w) - 1.0)
        if drift > 1e-8:
            raise ConservationError(f"mass drifted by {drift:.3e} at step {j + 1}")
        p[j + 1] = nxt
    return MeasureFlow(grid, p, check=False)


# ---------------------------------------------------------------------------
# Wasserstein-2 in one dimension


def _n_quantiles(grid: GridSpec, n_quantiles: int | None) -> int:
    return max(4 * grid.n_space, n_quantiles or 0)


def quantile_functions(densities: np.ndarray, grid: GridSpec, n_quantiles: int | None = None,
                       tol: float = 1e-8) -> np.ndarray:
    """Quantiles at u = (k + 1/2)/M of piecewise-linear CDFs, one row per density."""
    p = np.atleast_2d(np.asarray(densities, dtype=float))
    cells = 0.5 * (p[:, 1:] + p[:, :-1]) * grid.dx
    cdf = np.concatenate([np.zeros((p.shape[0], 1)), np.cumsum(cells, axis=1)], axis=1)
    total = cdf[:, -1]
    if np.any(p < -1e-12) or np.any(np.abs(total - 1.0) > tol):
        raise InvalidDensityError("Wasserstein inputs must be normalized densities")
    cdf /= total[:, None]
    m = _n_quantiles(grid, n_quantiles)
    u = (np.arange(m) + 0.5) / m
    out = np.empty((p.shape[0], m))
    for r in range(p.shape[0]):
        c = cdf[r]
        k = np.clip(np.searchsorted(c, u, side="left") - 1, 0, grid.n_space - 1)
        width = c[k + 1] - c[k]
        frac = np.where(width > 0, (u - c[k]) / np.where(width > 0, width, 1.0), 0.0)
        out[r] = grid.xs[k] + np.clip(frac, 0.0, 1.0) * grid.dx
    return out


def wasserstein2_1d(p: np.ndarray, q: np.ndarray, grid: GridSpec, n_quantiles: int | None = None) -> float:
    qp, qq = quantile_functions(np.vstack([p, q]), grid, n_quantiles)
    return float(np.sqrt(np.mean((qp - qq) ** 2)))


def flow_distance(m1: MeasureFlow, m2: MeasureFlow) -> float:
    """sup over time nodes of W2(m1_t, m2_t)."""
    m1.grid.require_same(m2.grid, "flows")
    q1 = quantile_functions(m1.densities, m1.grid)
    q2 = quantile_functions(m2.densities, m2.grid)
    return float(np.sqrt(np.max(np.mean((q1 - q2) ** 2, axis=1))))


def flow_regularity_report(m: MeasureFlow, kappa: float = 1.0) -> dict:
    """Empirical Hoelder-1/2 constant sup W2^2/|t-s| and sup_t of the (2+kappa)-moment."""
    grid = m.grid
    q = quantile_functions(m.densities, grid)
    holder = 0.0
    for j in range(grid.n_time):
        d2 = np.mean((q[j + 1 :] - q[j]) ** 2, axis=1)
        gaps = grid.times[j + 1 :] - grid.times[j]
        holder = max(holder, float(np.max(d2 / gaps)))
    moments = m.densities @ (np.abs(grid.xs) ** (2 + kappa) * grid.space_weights)
    return {"holder_constant": holder, "moment_bound": float(np.max(moments)), "kappa": kappa}
