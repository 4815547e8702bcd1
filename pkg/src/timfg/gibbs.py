"""Gibbs policy, Shannon entropy and the soft-max log-partition over actions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidDensityError, ModelError
from .grid import GridSpec
from .model import MeasureStats, ModelSpec, evaluate

DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class ActionDensity:
    """Density on the action nodes with respect to Lebesgue measure on U."""

    values: np.ndarray
    weights: np.ndarray

    def mass(self) -> float:
        return float(np.sum(self.values * self.weights))

    def entropy(self) -> float:
        return float(entropy(self.values, self.weights))


class RelaxedPolicyField:
    """Action densities at every (time node, space node); ``values`` is (nt, nx, na)."""

    def __init__(self, grid: GridSpec, values: np.ndarray):
        if values.shape != (grid.nt, grid.nx, grid.na):
            raise ConfigError(f"policy shape {values.shape} does not match grid")
        self.grid = grid
        self.values = values

    @classmethod
    def uniform(cls, grid: GridSpec) -> RelaxedPolicyField:
        width = grid.action_hi - grid.action_lo
        return cls(grid, np.full((grid.nt, grid.nx, grid.na), 1.0 / width))

    @classmethod
    def constant(cls, grid: GridSpec, density: ActionDensity | np.ndarray) -> RelaxedPolicyField:
        vals = density.values if isinstance(density, ActionDensity) else np.asarray(density)
        return cls(grid, np.broadcast_to(vals, (grid.nt, grid.nx, grid.na)).copy())

    def at(self, j: int, i: int) -> ActionDensity:
        return ActionDensity(self.values[j, i], self.grid.action_weights)

    def entropy(self) -> np.ndarray:
        return entropy(self.values, self.grid.action_weights)

    def mass(self) -> np.ndarray:
        return self.values @ self.grid.action_weights

    def average(self, f_values: np.ndarray, j: int | None = None) -> np.ndarray:
        """Action average of ``f_values`` (trailing axis = actions) under the policy."""
        pw = self.values * self.grid.action_weights if j is None else self.values[j] * self.grid.action_weights
        return np.sum(f_values * pw, axis=-1)

    def copy(self) -> RelaxedPolicyField:
        return RelaxedPolicyField(self.grid, self.values.copy())


def entropy(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Shannon entropy -sum(p ln p w) along the last axis."""
    if np.any(values <= 0):
        raise InvalidDensityError("entropy needs a strictly positive density")
    v = np.maximum(values, DENSITY_FLOOR)
    return -np.sum(v * np.log(v) * weights, axis=-1)


def softmax_density(g: np.ndarray, lam: float, weights: np.ndarray):
    """Gibbs density of exponent ``g / lam`` and ``lam * log Z`` along the last axis.

    Returns ``(density, log_partition)``. The max is shifted out before
    exponentiating, so arbitrarily large ``|g| / lam`` is safe.
    """
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    z = g / lam
    shift = np.max(z, axis=-1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise ModelError("Gibbs exponent is non-finite")
    e = np.exp(z - shift)
    total = np.sum(e * weights, axis=-1, keepdims=True)
    density = np.maximum(e / total, DENSITY_FLOOR)
    log_partition = lam * (shift[..., 0] + np.log(total[..., 0]))
    return density, log_partition


def gibbs_exponent(t, x, grad_p, stats: MeasureStats, model: ModelSpec, grid: GridSpec) -> np.ndarray:
    """b(t,x,m,a) * p + r(0,x,m,a) on the action grid.

    ``x`` and ``grad_p`` may be arrays of equal shape; the action axis is
    appended last.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(grad_p, dtype=float)
    a = grid.actions.reshape((1,) * x.ndim + (-1,))
    xe, pe = x[..., None], p[..., None]
    shape = x.shape + (grid.na,)
    b = evaluate(model.drift, t, xe, stats, a, shape=shape, name="drift")
    r = evaluate(model.running_reward, 0.0, xe, stats, a, shape=shape, name="running_reward")
    return b * pe + r


def gibbs_policy(t, x, grad_p, stats, lam, model, grid) -> ActionDensity:
    if not np.isfinite(grad_p):
        raise ModelError("gradient input to the Gibbs policy is non-finite")
    g = gibbs_exponent(t, x, grad_p, stats, model, grid)
    dens, _ = softmax_density(g, lam, grid.action_weights)
    return ActionDensity(dens, grid.action_weights)


def log_partition(t, x, grad_p, stats, lam, model, grid) -> float:
    """lam * ln integral_U exp((b p + r(0)) / lam) da."""
    g = gibbs_exponent(t, x, grad_p, stats, model, grid)
    _, lp = softmax_density(g, lam, grid.action_weights)
    return float(lp)


def gibbs_policy_field(model: ModelSpec, grid: GridSpec, grad: np.ndarray, flow, lam: float) -> RelaxedPolicyField:
    """Gibbs response to a gradient field ``grad`` (nt, nx) and population ``flow``."""
    if grad.shape != (grid.nt, grid.nx):
        raise ConfigError(f"gradient shape {grad.shape} does not match grid")
    out = np.empty((grid.nt, grid.nx, grid.na))
    for j in range(grid.nt):
        g = gibbs_exponent(grid.times[j], grid.xs, grad[j], flow.stats(j), model, grid)
        out[j], _ = softmax_density(g, lam, grid.action_weights)
    return RelaxedPolicyField(grid, out)


def sharpened_policy(grid: GridSpec, target: float, lam: float = 1e-3) -> ActionDensity:
    """Gibbs density of -(a - target)^2 at temperature ``lam``: nearly a point mass."""
    g = -((grid.actions - target) ** 2)
    dens, _ = softmax_density(g, lam, grid.action_weights)
    return ActionDensity(dens, grid.action_weights)
