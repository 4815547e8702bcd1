"""Problem definition: coefficient functions, measure statistics, assumption audit.

Coefficient functions are called with numpy arrays that broadcast against
each other, e.g. ``drift(t, x[:, None], stats, a[None, :])``. A function may
return a scalar when it is constant; results are broadcast to the expected
shape before use.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidDensityError, ModelError


@dataclass(frozen=True, eq=False)
class MeasureStats:
    """Summary of one population marginal m_t handed to coefficient functions.

    ``density``, ``xs`` and ``weights`` give access to the full discrete law
    for interactions that are not functions of the first two moments.
    """

    mean: float
    variance: float
    density: np.ndarray = field(repr=False)
    xs: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of ``f`` against the discrete density."""
        return float(np.sum(np.asarray(f(self.xs)) * self.density * self.weights))


def measure_stats_of(density, xs, weights, *, tol: float = 1e-8) -> MeasureStats:
    """Mean and variance of a nodal density under the quadrature ``weights``."""
    p = np.asarray(density, dtype=float)
    if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
        raise InvalidDensityError("density has negative or non-finite entries")
    p = np.maximum(p, 0.0)
    mass = float(np.sum(p * weights))
    if abs(mass - 1.0) > tol:
        raise InvalidDensityError(f"density integrates to {mass!r}, expected 1")
    mean = float(np.sum(xs * p * weights))
    variance = float(np.sum((xs - mean) ** 2 * p * weights))
    return MeasureStats(mean, max(variance, 0.0), p, xs, weights)


def gaussian_stats(mean: float, variance: float, xs: np.ndarray | None = None) -> MeasureStats:
    """Stats for a Gaussian law, with a density discretized on ``xs``."""
    if xs is None:
        sd = np.sqrt(max(variance, 1e-12))
        xs = np.linspace(mean - 8 * sd, mean + 8 * sd, 401)
    dx = xs[1] - xs[0]
    w = np.full(xs.size, dx)
    w[0] = w[-1] = 0.5 * dx
    p = np.exp(-0.5 * (xs - mean) ** 2 / max(variance, 1e-300))
    p /= np.sum(p * w)
    return MeasureStats(float(mean), float(variance), p, xs, w)


def evaluate(fn, *args, shape=None, name="coefficient"):
    """Call ``fn`` and broadcast its result to ``shape``; reject non-finite output."""
    out = np.asarray(fn(*args), dtype=float)
    if shape is not None and out.shape != tuple(shape):
        out = np.broadcast_to(out, shape)
    if not np.all(np.isfinite(out)):
        raise ModelError(f"{name} returned non-finite values")
    return out


def _central_difference(f, h):
    def df(t, *rest):
        return (np.asarray(f(t + h, *rest), dtype=float) - np.asarray(f(t - h, *rest), dtype=float)) / (2 * h)

    return df


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of a one-dimensional time-inconsistent mean field game.

    Signatures (``stats`` is a :class:`MeasureStats`):

    * ``drift(t, x, stats, a)`` and ``diffusion(t, x, stats)`` define the state
      dynamics; only the drift is controlled.
    * ``running_reward(tau, x, stats, a)`` takes the elapsed time
      ``tau = l - t`` since the evaluation time, which is where time
      inconsistency enters.
    * ``terminal_reward(t, x, stats)`` depends on the evaluation time ``t``.
    * ``discount(tau)`` weights the entropy bonus; ``discount(0) == 1``.

    The optional ``*_d*`` callables are exact time derivatives; when absent
    they are central differences with step ``1e-5 * horizon``.
    """

    drift: Callable
    diffusion: Callable
    running_reward: Callable
    terminal_reward: Callable
    discount: Callable
    action_lo: float
    action_hi: float
    horizon: float
    k1_bound: float = 1.0
    k2_lipschitz: float = 1.0
    eta_ellipticity: float = 1.0
    k6_terminal_lipschitz: float = 0.0
    running_reward_dtau: Callable | None = None
    terminal_reward_dt: Callable | None = None
    discount_derivative: Callable | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.action_hi - self.action_lo > 0:
            raise ConfigError("action set must have positive length")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        d0 = float(np.asarray(self.discount(0.0)))
        if d0 != 1.0:
            raise ConfigError(f"discount(0) must equal 1, got {d0}")

    @property
    def fd_step(self) -> float:
        return 1e-5 * self.horizon

    def reward_dtau(self) -> Callable:
        return self.running_reward_dtau or _central_difference(self.running_reward, self.fd_step)

    def terminal_dt(self) -> Callable:
        return self.terminal_reward_dt or _central_difference(self.terminal_reward, self.fd_step)

    def discount_dtau(self) -> Callable:
        return self.discount_derivative or _central_difference(self.discount, self.fd_step)

    def with_horizon(self, horizon: float) -> ModelSpec:
        return dataclasses.replace(self, horizon=horizon)


# ---------------------------------------------------------------------------
# assumption audit


@dataclass
class AuditLattice:
    """Sampling lattice for :func:`audit_assumptions` (>= 8 points per axis)."""

    x_lo: float = -3.0
    x_hi: float = 3.0
    n_t: int = 8
    n_x: int = 8
    n_a: int = 8
    moments: tuple = ((0.0, 1.0), (0.5, 0.25), (-0.5, 0.5), (1.0, 0.04),
                      (0.0, 0.09), (0.25, 1.5), (-1.0, 0.3), (0.75, 0.75))

    def __post_init__(self):
        if min(self.n_t, self.n_x, self.n_a, len(self.moments)) < 8:
            raise ConfigError("audit lattice needs at least 8 points per axis")


@dataclass
class AssumptionReport:
    margins: dict
    passed: bool
    notes: list = field(default_factory=list)

    def failed(self) -> list:
        return [k for k, v in self.margins.items() if v < -1e-9]


def _pairwise_ratio(values: np.ndarray, coords: np.ndarray, axis: int) -> float:
    """Max |f_i - f_j| / |c_i - c_j| over all pairs along ``axis``."""
    v = np.moveaxis(values, axis, 0)
    best = 0.0
    for i, j in itertools.combinations(range(coords.shape[0]), 2):
        gap = np.linalg.norm(np.atleast_1d(coords[i] - coords[j]))
        if gap > 0:
            best = max(best, float(np.max(np.abs(v[i] - v[j]))) / gap)
    return best


def audit_assumptions(model: ModelSpec, lattice: AuditLattice | None = None) -> AssumptionReport:
    """Sample the standing assumptions on a lattice and report slack per condition.

    Each margin is ``bound - observed`` (or ``observed - bound`` for the
    ellipticity floor), so the audit passes when every margin is >= -1e-9.
    Lipschitz ratios in the measure argument are taken against the Gaussian
    Wasserstein-2 distance sqrt(dmean^2 + dstd^2) between lattice moments.
    """
    lat = lattice or AuditLattice()
    ts = np.linspace(0.0, model.horizon, lat.n_t)
    xs = np.linspace(lat.x_lo, lat.x_hi, lat.n_x)
    acts = np.linspace(model.action_lo, model.action_hi, lat.n_a)
    stats = [gaussian_stats(m, v) for m, v in lat.moments]
    moment_coords = np.array([[s.mean, s.std] for s in stats])

    T, X, A = np.meshgrid(ts, xs, acts, indexing="ij")
    b = np.empty((len(stats),) + T.shape)
    r = np.empty_like(b)
    sig = np.empty((len(stats), lat.n_t, lat.n_x))
    F = np.empty_like(sig)
    for k, st in enumerate(stats):
        for label, fn, args, out in (
            ("drift", model.drift, (T, X, st, A), b),
            ("running_reward", model.running_reward, (T, X, st, A), r),
            ("diffusion", model.diffusion, (T[..., 0], X[..., 0], st), sig),
            ("terminal_reward", model.terminal_reward, (T[..., 0], X[..., 0], st), F),
        ):
            vals = np.broadcast_to(np.asarray(fn(*args), dtype=float), out.shape[1:])
            bad = np.argwhere(~np.isfinite(vals))
            if bad.size:
                idx = tuple(bad[0])
                point = dict(zip(("t", "x", "a"), (ts[idx[0]], xs[idx[1]], *(acts[idx[2]],)[: len(idx) - 2])))
                raise ModelError(f"{label} is non-finite at {point}, stats=(mean={st.mean}, var={st.variance})")
            out[k] = vals

    tau = np.linspace(0.0, model.horizon, max(lat.n_t, 8))
    disc = np.asarray(model.discount(tau), dtype=float) * np.ones_like(tau)

    margins = {
        "ellipticity": float(np.min(sig**2) - model.eta_ellipticity),
        "bound_drift": model.k1_bound - float(np.max(np.abs(b))),
        "bound_diffusion": model.k1_bound - float(np.max(np.abs(sig))),
        "bound_running_reward": model.k1_bound - float(np.max(np.abs(r))),
        "bound_terminal_reward": model.k1_bound - float(np.max(np.abs(F))),
        "discount_positive": float(np.min(disc)),
        "discount_at_zero": -abs(float(np.asarray(model.discount(0.0))) - 1.0),
        "action_length": model.action_hi - model.action_lo,
    }
    # x-Lipschitz: |db| + |dsigma| + |dr| <= K2 |dx|
    ratio_x = _pairwise_ratio(b, xs, 2) + _pairwise_ratio(sig, xs, 2) + _pairwise_ratio(r, xs, 2)
    ratio_m = (
        _pairwise_ratio(b, moment_coords, 0)
        + _pairwise_ratio(sig, moment_coords, 0)
        + _pairwise_ratio(r, moment_coords, 0)
    )
    ratio_F = _pairwise_ratio(F, moment_coords, 0)
    margins["lipschitz_x"] = model.k2_lipschitz - ratio_x
    margins["lipschitz_measure"] = model.k2_lipschitz - ratio_m
    margins["terminal_measure_lipschitz"] = model.k6_terminal_lipschitz - ratio_F
    passed = all(v >= -1e-9 for v in margins.values())
    notes = ["cone condition holds for an interval action set"]
    return AssumptionReport(margins, passed, notes)
