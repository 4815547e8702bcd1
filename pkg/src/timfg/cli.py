"""Command-line entry point: ``timfg {pia,vanish,verify,mc-check,selftest}``."""

from __future__ import annotations

import argparse
import copy
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import io
from ._parallel import resolve_threads
from .catalog import get_scenario
from .errors import ConfigError, TimfgError
from .grid import GridSpec
from .measure_flow import gaussian_density
from .pia import PiaState, geometric_schedule, run_pia, vanishing_lambda
from .value_pde import solve_slice

logger = logging.getLogger("timfg")

DEFAULTS = {
    "model": {"name": "lq_mean", "params": {}},
    "grid": {"n_time": 200, "n_space": 200, "n_action": 32},
    "initial": {},
    "solver": {"lambda": 0.5, "tol": 1e-6, "max_iters": 100, "lambda0": 0.5, "halvings": 8, "warm_start": True},
    "mc": {"n_particles": 200000, "n_paths": 40000, "seed": 0},
    "verify": {"lambda": 0.1, "tol": 1e-8, "probe_t_fractions": [0.0, 0.25, 0.5],
               "probe_x": [-1.0, 0.25, 1.5], "mc_particles": 200000},
    "out": "out",
}

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NONCONVERGED, EXIT_SELFTEST = 0, 2, 3, 4, 5


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    raw: dict
    grid: GridSpec
    scenario: object
    nu: np.ndarray
    out: Path
    threads: int

    @property
    def model(self):
        return self.scenario.model

    @property
    def solver(self) -> dict:
        return self.raw["solver"]


def load_config(path: str | None, overrides: dict) -> dict:
    data = {}
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    return _merge(_merge(DEFAULTS, data), overrides)


def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def resolve(raw: dict, threads: int | None) -> RunConfig:
    """Validate every numeric field and build the grid and initial law."""
    mdl = raw["model"]
    _require(isinstance(mdl.get("name"), str), "model.name", "must be a catalog name")
    scenario = get_scenario(mdl["name"], **(mdl.get("params") or {}))
    model = scenario.model
    g = {**scenario.grid_defaults, **raw["grid"]}
    raw["grid"] = g
    for key in ("n_time", "n_space", "n_action"):
        _require(isinstance(g.get(key), int) and g[key] > 0, f"grid.{key}", "must be a positive integer")
    grid = GridSpec(model.horizon, g["n_time"], float(g["x_lo"]), float(g["x_hi"]), g["n_space"],
                    model.action_lo, model.action_hi, g["n_action"])
    init = {"mean": scenario.nu_mean, "variance": scenario.nu_variance, **raw["initial"]}
    raw["initial"] = init
    _require(float(init["variance"]) > 0, "initial.variance", "must be positive")
    s = raw["solver"]
    _require(float(s["lambda"]) > 0, "solver.lambda", "must be positive")
    _require(float(s["tol"]) > 0, "solver.tol", "must be positive")
    _require(int(s["max_iters"]) >= 1, "solver.max_iters", "must be >= 1")
    _require(float(s["lambda0"]) > 0, "solver.lambda0", "must be positive")
    _require(int(s["halvings"]) >= 0, "solver.halvings", "must be >= 0")
    _require(int(raw["mc"]["n_particles"]) >= 1000, "mc.n_particles", "must be >= 1000")
    _require(int(raw["mc"]["n_paths"]) >= 1000, "mc.n_paths", "must be >= 1000")
    nu = gaussian_density(grid, float(init["mean"]), float(init["variance"]))
    return RunConfig(raw, grid, scenario, nu, Path(raw["out"]), resolve_threads(threads))


# ---------------------------------------------------------------------------
# commands


def _run_pia(cfg: RunConfig, lam: float, tol: float):
    s = cfg.solver
    return run_pia(PiaState.initial(cfg.grid, cfg.nu), lam, cfg.model, cfg.grid, tol, int(s["max_iters"]),
                   threads=cfg.threads)


def cmd_pia(cfg: RunConfig, args) -> int:
    s = cfg.solver
    state, report = _run_pia(cfg, float(s["lambda"]), float(s["tol"]))
    io.write_convergence(cfg.out / "convergence.csv", report)
    io.write_diagonal(cfg.out / "diagonal.csv", cfg.grid, state.J, state.DxJ)
    io.write_density(cfg.out / "density.csv", state.m)
    io.write_value_slice(cfg.out / "value_slice.csv", cfg.grid, state.V.values.slab(0), 0)
    print(f"pia: {'converged' if report.converged else 'NOT converged'} after {report.iterations} iterations")
    return _exit_for(report.converged, args)


def cmd_vanish(cfg: RunConfig, args) -> int:
    s = cfg.solver
    schedule = geometric_schedule(float(s["lambda0"]), int(s["halvings"]))
    res = vanishing_lambda(schedule, cfg.model, cfg.grid, cfg.nu, float(s["tol"]), int(s["max_iters"]),
                           warm_start=bool(s["warm_start"]), threads=cfg.threads)
    io.write_csv(cfg.out / "vanishing.csv",
                 ["lambda", "max_lambda_entropy", "J_gap", "m_gap", "residual", "iters"],
                 ([r.lam, r.max_lambda_entropy, r.J_gap, r.m_gap, r.residual, r.iters] for r in res.rows))
    ok = all(r.converged for r in res.rows)
    print(f"vanish: {len(res.rows)} lambdas, {res.total_iterations} iterations")
    return _exit_for(ok, args)


def cmd_verify(cfg: RunConfig, args) -> int:
    from .verify import consistency_gap, deviation_gain, eehjb_residual, gibbs_consistency, lemma_checks

    v = cfg.raw["verify"]
    lam, tol = float(v["lambda"]), float(v["tol"])
    state, report = _run_pia(cfg, lam, tol)
    grid, model = cfg.grid, cfg.model
    res = eehjb_residual(state.V, state.pi, state.frozen, lam, model, grid)
    rows = []
    for j in range(grid.nt - 1):
        slab = res.values.slab(j)[:-1, 1:-1]
        rows.append((grid.times[j], float(np.max(np.abs(slab)))))
    io.write_csv(cfg.out / "residual.csv", ["t", "max_abs_residual"], rows)

    dev_rows = []
    for frac in v["probe_t_fractions"]:
        t = grid.times[grid.steps(float(frac) * model.horizon)]
        for x in v["probe_x"]:
            rep = deviation_gain(state, lam, model, grid, t, float(x))
            dev_rows += [(r["t"], r["x"], r["policy"], r["epsilon"], r["gain"], r["stderr"], r["envelope"])
                         for r in rep.rows]
    io.write_csv(cfg.out / "deviation.csv", ["t", "x", "policy", "epsilon", "gain", "stderr", "envelope"], dev_rows)

    lemmas = lemma_checks(model, grid, lam, cfg.nu)
    io.write_csv(cfg.out / "lemmas.csv", ["check", "probe", "value", "bound", "passed"],
                 ([r["check"], r["probe"], r["value"], r["bound"], r["passed"]] for r in lemmas))

    n_mc = int(v.get("mc_particles") or 0)
    gaps = consistency_gap(state.m, state.pi, model, grid, n_mc or None, int(cfg.raw["mc"]["seed"]),
                           threads=cfg.threads)
    gibbs_gap = gibbs_consistency(state.pi, state.V, state.frozen, lam, model, grid)
    bound = 5 * (grid.dt + grid.dx**2)
    eq_rows = [
        ("eehjb_residual", res.max_abs, bound, res.max_abs <= bound),
        ("fp_gap", gaps["fp_gap"], 2 * tol, gaps["fp_gap"] <= 2 * tol),
        ("mc_gap", gaps["mc_gap"], gaps["fp_gap"] + 0.05, not gaps["mc_gap"] > gaps["fp_gap"] + 0.05),
        ("gibbs_consistency", gibbs_gap, 1e-6, gibbs_gap <= 1e-6),
        ("pia_converged", float(report.iterations), float(cfg.solver["max_iters"]), report.converged),
    ]
    io.write_csv(cfg.out / "equilibrium.csv", ["metric", "value", "bound", "passed"], eq_rows)
    failed = [r[0] for r in eq_rows if not r[3]] + [r["check"] for r in lemmas if not r["passed"]]
    print("verify: " + ("all checks passed" if not failed else "FAILED " + ", ".join(failed)))
    if not report.converged and not args.allow_nonconverged:
        return EXIT_NONCONVERGED
    return EXIT_OK if not failed else EXIT_SOLVER


def cmd_mc_check(cfg: RunConfig, args) -> int:
    from .mc_oracle import mc_value

    s, mc = cfg.solver, cfg.raw["mc"]
    lam = float(s["lambda"])
    state, report = _run_pia(cfg, lam, float(s["tol"]))
    grid, model = cfg.grid, cfg.model
    seed, n = int(mc["seed"]), int(mc["n_paths"])
    rows = []
    for frac in (0.0, 0.5):
        j_t = grid.steps(frac * model.horizon)
        slab = solve_slice(model, grid, state.pi, state.m, lam, j_t)
        for x in cfg.raw["verify"]["probe_x"]:
            i = grid.space_index(float(x))
            est = mc_value(model, grid, state.pi, state.m, lam, grid.times[j_t], grid.times[j_t], grid.xs[i],
                           n, seed, threads=cfg.threads)
            rows.append((grid.times[j_t], grid.times[j_t], grid.xs[i], est.estimate, est.stderr, est.n, est.seed,
                         slab[0, i]))
    io.write_csv(cfg.out / "mc_report.csv", ["t", "s", "x", "estimate", "stderr", "n", "seed", "pde"], rows)
    print(f"mc-check: {len(rows)} queries")
    return _exit_for(report.converged, args)


def _exit_for(converged: bool, args) -> int:
    if converged or args.allow_nonconverged:
        return EXIT_OK
    return EXIT_NONCONVERGED


COMMANDS = {"pia": cmd_pia, "vanish": cmd_vanish, "verify": cmd_verify, "mc-check": cmd_mc_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="timfg", description=__doc__)
    p.add_argument("command", choices=[*COMMANDS, "selftest"])
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", help="catalog model name")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: $TIMFG_THREADS or CPU count)")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--halvings", type=int)
    p.add_argument("--n-time", type=int)
    p.add_argument("--n-space", type=int)
    p.add_argument("--n-action", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--allow-nonconverged", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def overrides_from(args) -> dict:
    o: dict = {}

    def put(section, key, val):
        if val is not None:
            o.setdefault(section, {})[key] = val

    if args.model is not None:
        o["model"] = {"name": args.model}
    if args.out is not None:
        o["out"] = args.out
    put("mc", "seed", args.seed)
    put("solver", "lambda", args.lam)
    put("solver", "lambda0", args.lambda0)
    put("solver", "halvings", args.halvings)
    put("solver", "tol", args.tol)
    put("solver", "max_iters", args.max_iters)
    put("grid", "n_time", args.n_time)
    put("grid", "n_space", args.n_space)
    put("grid", "n_action", args.n_action)
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        from .selftest import run_selftest

        return EXIT_OK if run_selftest() else EXIT_SELFTEST
    try:
        raw = load_config(args.config, overrides_from(args))
        cfg = resolve(raw, args.threads)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "resolved_config.yaml").write_text(yaml.safe_dump(cfg.raw, sort_keys=True))
    try:
        return COMMANDS[args.command](cfg, args)
    except TimfgError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
