"""Uniform time/space/action grids and the triangular (t, s) index set."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

BOUNDARY_POLICIES = ("zero_flux_reflecting",)


def trapezoid_weights(n_intervals: int, step: float) -> np.ndarray:
    w = np.full(n_intervals + 1, step)
    w[0] = w[-1] = 0.5 * step
    return w


@dataclass(frozen=True)
class GridSpec:
    """Discretization of [0, T] x [x_lo, x_hi] x [a_lo, a_hi].

    ``n_time``, ``n_space`` and ``n_action`` count intervals, so each axis
    carries one more node than its count.
    """

    horizon: float
    n_time: int
    x_lo: float
    x_hi: float
    n_space: int
    action_lo: float
    action_hi: float
    n_action: int
    boundary_policy: str = "zero_flux_reflecting"
    times: np.ndarray = field(init=False, repr=False, compare=False)
    xs: np.ndarray = field(init=False, repr=False, compare=False)
    actions: np.ndarray = field(init=False, repr=False, compare=False)
    action_weights: np.ndarray = field(init=False, repr=False, compare=False)
    space_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.n_time < 1:
            raise ConfigError(f"n_time must be >= 1, got {self.n_time}")
        if self.n_space < 8:
            raise ConfigError(f"n_space must be >= 8, got {self.n_space}")
        if self.n_action < 4:
            raise ConfigError(f"n_action must be >= 4, got {self.n_action}")
        if not self.x_lo < self.x_hi:
            raise ConfigError(f"x_lo must be < x_hi, got [{self.x_lo}, {self.x_hi}]")
        if not self.action_lo < self.action_hi:
            raise ConfigError(
                f"action_lo must be < action_hi, got [{self.action_lo}, {self.action_hi}]"
            )
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise ConfigError(f"unknown boundary_policy {self.boundary_policy!r}")
        # frozen dataclass: derived arrays are attached via object.__setattr__
        times = np.arange(self.n_time + 1) * self.dt
        times[-1] = self.horizon
        xs = self.x_lo + np.arange(self.n_space + 1) * self.dx
        xs[-1] = self.x_hi
        actions = self.action_lo + np.arange(self.n_action + 1) * self.da
        actions[-1] = self.action_hi
        for name, arr in (
            ("times", times),
            ("xs", xs),
            ("actions", actions),
            ("action_weights", trapezoid_weights(self.n_action, self.da)),
            ("space_weights", trapezoid_weights(self.n_space, self.dx)),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_time

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_space

    @property
    def da(self) -> float:
        return (self.action_hi - self.action_lo) / self.n_action

    @property
    def nt(self) -> int:
        """Number of time nodes."""
        return self.n_time + 1

    @property
    def nx(self) -> int:
        return self.n_space + 1

    @property
    def na(self) -> int:
        return self.n_action + 1

    @property
    def n_rows(self) -> int:
        """Rows of a triangular field: (N+1)(N+2)/2."""
        return (self.n_time + 1) * (self.n_time + 2) // 2

    def tri_index(self, j_t: int, j_s: int) -> int:
        return tri_index(j_t, j_s, self.n_time)

    def same_as(self, other: GridSpec) -> bool:
        return (
            self.horizon == other.horizon
            and self.n_time == other.n_time
            and self.x_lo == other.x_lo
            and self.x_hi == other.x_hi
            and self.n_space == other.n_space
            and self.action_lo == other.action_lo
            and self.action_hi == other.action_hi
            and self.n_action == other.n_action
        )

    def require_same(self, other: GridSpec, what: str = "fields") -> None:
        if not self.same_as(other):
            raise ConfigError(f"grid mismatch between {what}")

    def time_index(self, t: float) -> int:
        """Index of the time node at ``t``; raises unless ``t`` sits on the grid."""
        j = int(round(t / self.dt))
        if j < 0 or j > self.n_time or abs(j * self.dt - t) > 1e-9 * max(1.0, self.horizon):
            raise ConfigError(f"time {t} is not a grid node (dt={self.dt})")
        return j

    def steps(self, duration: float) -> int:
        """Number of time steps in ``duration``; raises unless grid-aligned."""
        k = int(round(duration / self.dt))
        if k < 0 or abs(k * self.dt - duration) > 1e-9 * max(1.0, self.horizon):
            raise ConfigError(f"duration {duration} is not a multiple of dt={self.dt}")
        return k

    def space_index(self, x: float) -> int:
        """Index of the space node nearest to ``x``."""
        if not self.x_lo <= x <= self.x_hi:
            raise ConfigError(f"x={x} outside box [{self.x_lo}, {self.x_hi}]")
        return int(round((x - self.x_lo) / self.dx))


def tri_index(j_t: int, j_s: int, n_time: int) -> int:
    """Flat row of (j_t, j_s) in a triangular field, row-major in j_t.

    Rows for j_t start at j_t*(N+1) - j_t*(j_t-1)/2 and run over j_s = j_t..N.
    """
    if not 0 <= j_t <= j_s <= n_time:
        raise IndexError(f"need 0 <= j_t <= j_s <= {n_time}, got ({j_t}, {j_s})")
    return j_t * (n_time + 1) - j_t * (j_t - 1) // 2 + (j_s - j_t)


def row_offsets(n_time: int) -> np.ndarray:
    j = np.arange(n_time + 2)
    return j * (n_time + 1) - j * (j - 1) // 2


class TriangularField:
    """Values on {(j_t, j_s): j_t <= j_s} x space nodes, flat storage."""

    def __init__(self, grid: GridSpec, data: np.ndarray | None = None):
        self.grid = grid
        self.offsets = row_offsets(grid.n_time)
        shape = (grid.n_rows, grid.nx)
        if data is None:
            data = np.zeros(shape)
        elif data.shape != shape:
            raise ConfigError(f"triangular data shape {data.shape} != {shape}")
        self.data = data

    def slab(self, j_t: int) -> np.ndarray:
        """View of rows j_s = j_t..N for slice j_t, shape (N - j_t + 1, nx)."""
        if not 0 <= j_t <= self.grid.n_time:
            raise IndexError(f"slice {j_t} out of range")
        return self.data[self.offsets[j_t] : self.offsets[j_t + 1]]

    def __getitem__(self, key):
        j_t, j_s = key[0], key[1]
        row = self.data[tri_index(j_t, j_s, self.grid.n_time)]
        return row if len(key) == 2 else row[key[2]]

    def diagonal(self) -> np.ndarray:
        return self.data[self.offsets[:-1]].copy()

    def column(self, j_s: int) -> np.ndarray:
        """Values at running time j_s for every slice j_t <= j_s, shape (j_s+1, nx)."""
        rows = self.offsets[: j_s + 1] + (j_s - np.arange(j_s + 1))
        return self.data[rows]

    def set_column(self, j_s: int, values: np.ndarray) -> None:
        rows = self.offsets[: j_s + 1] + (j_s - np.arange(j_s + 1))
        self.data[rows] = values


def build_grid(config: dict) -> GridSpec:
    """Build a :class:`GridSpec` from a flat mapping of grid keys."""
    try:
        return GridSpec(
            horizon=float(config["horizon"]),
            n_time=int(config["n_time"]),
            x_lo=float(config["x_lo"]),
            x_hi=float(config["x_hi"]),
            n_space=int(config["n_space"]),
            action_lo=float(config["action_lo"]),
            action_hi=float(config["action_hi"]),
            n_action=int(config["n_action"]),
            boundary_policy=config.get("boundary_policy", "zero_flux_reflecting"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing grid key {exc.args[0]!r}") from None
