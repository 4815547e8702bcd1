import numpy as np
import pytest

from timfg import GridSpec, MeasureFlow, RelaxedPolicyField, gaussian_density, get_scenario

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {criterion:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def small_grid():
    return GridSpec(1.0, 8, -2.0, 2.0, 40, 0.0, 1.0, 8)


@pytest.fixture
def lq_small():
    """lq_mean on a coarse grid: (model, grid, nu)."""
    sc = get_scenario("lq_mean")
    g = GridSpec(sc.model.horizon, 20, -2.5, 2.5, 50, sc.model.action_lo, sc.model.action_hi, 12)
    return sc.model, g, gaussian_density(g, sc.nu_mean, sc.nu_variance)


@pytest.fixture
def decoupled_small():
    sc = get_scenario("decoupled")
    g = GridSpec(sc.model.horizon, 10, -2.5, 2.5, 40, 0.0, 1.0, 8)
    return sc.model, g, gaussian_density(g, sc.nu_mean, sc.nu_variance)


def frozen(grid, mean=0.0, var=0.1):
    return MeasureFlow.frozen(grid, gaussian_density(grid, mean, var))


def uniform(grid):
    return RelaxedPolicyField.uniform(grid)


def random_policy(grid, seed=0):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.2, 2.0, (grid.nt, grid.nx, grid.na))
    vals /= (vals @ grid.action_weights)[..., None]
    return RelaxedPolicyField(grid, vals)
