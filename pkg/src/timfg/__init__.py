"""Entropy-regularized equilibria of time-inconsistent mean field games in one dimension."""

from .catalog import CATALOG, get_scenario, plain_model
from .errors import (ConfigError, ConservationError, InvalidDensityError, ModelError, NumericError, SchemeError,
                     TimfgError)
from .gibbs import (ActionDensity, RelaxedPolicyField, entropy, gibbs_policy, gibbs_policy_field, log_partition,
                    softmax_density)
from .grid import GridSpec, TriangularField, build_grid, tri_index
from .measure_flow import (MeasureFlow, flow_distance, flow_regularity_report, gaussian_density,
                           solve_fokker_planck, wasserstein2_1d)
from .model import AssumptionReport, AuditLattice, MeasureStats, ModelSpec, audit_assumptions, measure_stats_of
from .pia import ConvergenceReport, PiaState, phi_step, run_pia, vanishing_lambda
from .value_pde import AuxValueField, solve_all_slices, solve_slice, solve_t_derivative

__version__ = "0.1.0"

__all__ = [
    "ActionDensity",
    "AssumptionReport",
    "AuditLattice",
    "AuxValueField",
    "CATALOG",
    "ConfigError",
    "ConservationError",
    "ConvergenceReport",
    "GridSpec",
    "InvalidDensityError",
    "MeasureFlow",
    "MeasureStats",
    "ModelError",
    "ModelSpec",
    "NumericError",
    "PiaState",
    "RelaxedPolicyField",
    "SchemeError",
    "TimfgError",
    "TriangularField",
    "audit_assumptions",
    "build_grid",
    "entropy",
    "flow_distance",
    "flow_regularity_report",
    "gaussian_density",
    "get_scenario",
    "gibbs_policy",
    "gibbs_policy_field",
    "log_partition",
    "measure_stats_of",
    "phi_step",
    "plain_model",
    "run_pia",
    "softmax_density",
    "solve_all_slices",
    "solve_fokker_planck",
    "solve_slice",
    "solve_t_derivative",
    "tri_index",
    "vanishing_lambda",
    "wasserstein2_1d",
]
