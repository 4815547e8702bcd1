"""Policy iteration for the entropy-regularized equilibrium and the vanishing-entropy driver."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TimfgError
from .gibbs import RelaxedPolicyField, gibbs_policy_field
from .grid import GridSpec
from .measure_flow import MeasureFlow, flow_distance, solve_fokker_planck
from .model import ModelSpec
from .value_pde import AuxValueField, level_coefficients, solve_all_slices, spatial_gradient

logger = logging.getLogger(__name__)


@dataclass
class PiaState:
    """Iterate (J^k, m^k) together with the policy and value that produced it.

    ``frozen`` is the flow that was held fixed in the coefficients when ``pi``,
    ``V`` and ``m`` were computed (m^{k-1}); it is None for the initial guess.
    """

    J: np.ndarray
    DxJ: np.ndarray
    m: MeasureFlow
    pi: RelaxedPolicyField | None = None
    V: AuxValueField | None = None
    frozen: MeasureFlow | None = None
    k: int = 0

    @classmethod
    def initial(cls, grid: GridSpec, nu: np.ndarray, J0: np.ndarray | None = None) -> PiaState:
        """Default start: J^0 = 0 (or ``J0``) and m^0 = nu at every time."""
        J = np.zeros((grid.nt, grid.nx)) if J0 is None else np.asarray(J0, dtype=float)
        return cls(J=J, DxJ=spatial_gradient(J, grid.dx), m=MeasureFlow.frozen(grid, nu))

    def restart(self) -> PiaState:
        """Strip everything but (J, m) so the next step starts from this iterate."""
        return PiaState(J=self.J, DxJ=self.DxJ, m=self.m, k=0)


@dataclass
class ConvergenceReport:
    d_m: list = field(default_factory=list)
    d_J: list = field(default_factory=list)
    ratio: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = False
    tol: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.d_m)

    @property
    def gaps(self) -> np.ndarray:
        return np.asarray(self.d_m) + np.asarray(self.d_J)

    def rows(self):
        for k in range(self.iterations):
            yield k + 1, self.d_m[k], self.d_J[k], self.ratio[k], self.seconds[k]


class PhiStepError(TimfgError):
    pass


def phi_step(state: PiaState, lam: float, model: ModelSpec, grid: GridSpec, *, threads: int | None = None) -> PiaState:
    """One application of the fixed-point map (J^k, m^k) -> (J^{k+1}, m^{k+1}).

    The Gibbs policy, the value evaluation and the Fokker-Planck solve all
    read the population from m^k; none of them sees m^{k+1}.
    """
    m_k = state.m
    try:
        pi = gibbs_policy_field(model, grid, state.DxJ, m_k, lam)
    except TimfgError as exc:
        raise PhiStepError(f"policy update: {exc}") from exc
    try:
        coeffs = level_coefficients(model, grid, pi, m_k)
        V = solve_all_slices(model, grid, pi, m_k, lam, coeffs=coeffs, threads=threads)
    except TimfgError as exc:
        raise PhiStepError(f"value evaluation: {exc}") from exc
    try:
        m_next = solve_fokker_planck(model, grid, pi, m_k, m_k.nu)
    except TimfgError as exc:
        raise PhiStepError(f"Fokker-Planck update: {exc}") from exc
    return PiaState(J=V.diagonal, DxJ=V.diagonal_gradient, m=m_next, pi=pi, V=V, frozen=m_k, k=state.k + 1)


def iterate_gap(new: PiaState, old: PiaState) -> tuple[float, float]:
    """(flow distance, sup|dJ| + sup|dDxJ|) between consecutive iterates."""
    d_m = flow_distance(new.m, old.m)
    d_J = float(np.max(np.abs(new.J - old.J)) + np.max(np.abs(new.DxJ - old.DxJ)))
    return d_m, d_J


def run_pia(init: PiaState, lam: float, model: ModelSpec, grid: GridSpec, tol: float = 1e-6,
            max_iters: int = 100, *, threads: int | None = None) -> tuple[PiaState, ConvergenceReport]:
    """Iterate :func:`phi_step` until d_m + d_J <= tol or ``max_iters`` steps."""
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    report = ConvergenceReport(tol=tol)
    state = init
    for _ in range(max_iters):
        t0 = time.perf_counter()
        new = phi_step(state, lam, model, grid, threads=threads)
        d_m, d_J = iterate_gap(new, state)
        prev = report.d_m[-1] + report.d_J[-1] if report.iterations else None
        report.d_m.append(d_m)
        report.d_J.append(d_J)
        report.ratio.append((d_m + d_J) / prev if prev else float("nan"))
        report.seconds.append(time.perf_counter() - t0)
        logger.debug("pia k=%d d_m=%.3e d_J=%.3e", new.k, d_m, d_J)
        state = new
        if d_m + d_J <= tol:
            report.converged = True
            break
    if not report.converged:
        logger.warning("PIA did not converge in %d iterations (last gap %.3e)", max_iters,
                       report.d_m[-1] + report.d_J[-1])
    return state, report


@dataclass
class VanishingRow:
    lam: float
    max_lambda_entropy: float
    J_gap: float
    m_gap: float
    residual: float
    iters: int
    converged: bool


@dataclass
class VanishingResult:
    rows: list
    states: list  # (lam, J, DxJ, m) per schedule entry

    @property
    def total_iterations(self) -> int:
        return sum(r.iters for r in self.rows)


def geometric_schedule(lambda0: float, halvings: int) -> list[float]:
    return [lambda0 * 2.0**-n for n in range(halvings + 1)]


def vanishing_lambda(schedule, model: ModelSpec, grid: GridSpec, nu: np.ndarray, tol: float = 1e-6,
                     max_iters: int = 100, *, warm_start: bool = True, threads: int | None = None,
                     with_residual: bool = True) -> VanishingResult:
    """Equilibria along a decreasing lambda schedule, warm-starting each from the last."""
    from .verify import eehjb_residual

    schedule = [float(v) for v in schedule]
    if any(v <= 0 for v in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("lambda schedule must be positive and strictly decreasing")
    rows, states = [], []
    start = PiaState.initial(grid, nu)
    prev = None
    for lam in schedule:
        state, report = run_pia(start, lam, model, grid, tol, max_iters, threads=threads)
        if not report.converged:
            logger.warning("lambda=%g: no convergence, continuing schedule", lam)
        max_ent = float(np.max(lam * np.abs(state.pi.entropy())))
        if prev is None:
            J_gap = m_gap = float("nan")
        else:
            J_gap = float(np.max(np.abs(state.J - prev.J)))
            m_gap = flow_distance(state.m, prev.m)
        residual = float("nan")
        if with_residual:
            residual = eehjb_residual(state.V, state.pi, state.frozen, lam, model, grid).max_abs
        rows.append(VanishingRow(lam, max_ent, J_gap, m_gap, residual, report.iterations, report.converged))
        states.append((lam, state.J, state.DxJ, state.m))
        prev = state
        start = state.restart() if warm_start else PiaState.initial(grid, nu)
    return VanishingResult(rows, states)
