"""Built-in models selectable by name from the command line."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import ModelSpec


@dataclass(frozen=True)
class Scenario:
    """A catalog model plus its default initial law and grid box."""

    model: ModelSpec
    nu_mean: float
    nu_variance: float
    grid_defaults: dict = field(default_factory=dict)


def hyperbolic(beta: float):
    def discount(tau):
        return 1.0 / (1.0 + beta * np.asarray(tau, dtype=float))

    def derivative(tau):
        return -beta / (1.0 + beta * np.asarray(tau, dtype=float)) ** 2

    return discount, derivative


def flat_bowl(box: float):
    """c^2 (1 - cos(x / c)) with c = box / pi: x^2 / 2 near 0, bounded, flat at +-box."""
    c = box / np.pi

    def bowl(x):
        return c**2 * (1.0 - np.cos(np.asarray(x, dtype=float) / c))

    return bowl


def lq_mean(horizon: float = 0.25, coupling: float = 0.5, sigma: float = 0.5, state_cost: float = 1.0,
            terminal_cost: float = 1.0, beta: float = 1.0, action_lo: float = -1.0, action_hi: float = 1.0,
            nu_mean: float = 0.25, nu_variance: float = 0.04) -> Scenario:
    """Linear-quadratic game with mean attraction and hyperbolic discounting.

    b = a + coupling * mean(m), sigma constant,
    r(tau, x, m, a) = -delta(tau) (a^2/2 + state_cost (x - mean)^2 / 2),
    F(t, x) = -delta(T - t) terminal_cost bowl(x) with bowl(x) ~ x^2 / 2, delta(tau) = 1 / (1 + beta tau).
    """
    disc, ddisc = hyperbolic(beta)
    box = 2.5
    bowl = flat_bowl(box)

    def drift(t, x, m, a):
        return a + coupling * m.mean + 0.0 * x

    def diffusion(t, x, m):
        return sigma + 0.0 * x

    def running_reward(tau, x, m, a):
        return -disc(tau) * (0.5 * a**2 + 0.5 * state_cost * (x - m.mean) ** 2)

    def running_reward_dtau(tau, x, m, a):
        return -ddisc(tau) * (0.5 * a**2 + 0.5 * state_cost * (x - m.mean) ** 2)

    def terminal_reward(t, x, m):
        return -terminal_cost * disc(horizon - t) * bowl(x)

    def terminal_reward_dt(t, x, m):
        return terminal_cost * ddisc(horizon - t) * bowl(x)

    model = ModelSpec(
        drift=drift, diffusion=diffusion, running_reward=running_reward,
        terminal_reward=terminal_reward, discount=disc,
        action_lo=action_lo, action_hi=action_hi, horizon=horizon,
        k1_bound=max(abs(action_lo), abs(action_hi)) + abs(coupling) * box
        + 0.5 * max(action_lo**2, action_hi**2) + 2 * state_cost * box**2 + terminal_cost * box**2,
        k2_lipschitz=2 * state_cost * box + abs(coupling) + 1.0,
        eta_ellipticity=sigma**2,
        k6_terminal_lipschitz=0.0,
        running_reward_dtau=running_reward_dtau,
        terminal_reward_dt=terminal_reward_dt,
        discount_derivative=ddisc,
        name="lq_mean",
    )
    return Scenario(model, nu_mean, nu_variance, {"x_lo": -box, "x_hi": box})


def decoupled(horizon: float = 0.5, sigma: float = 0.4, beta: float = 1.0,
              nu_mean: float = 0.0, nu_variance: float = 0.04) -> Scenario:
    """Drift and reward ignore both the action and the population; U = [0, 1]."""
    disc, ddisc = hyperbolic(beta)

    def drift(t, x, m, a):
        return -0.5 * np.tanh(x) + 0.0 * a

    def diffusion(t, x, m):
        return sigma + 0.0 * x

    def running_reward(tau, x, m, a):
        return -disc(tau) * 0.5 * np.tanh(x) ** 2 + 0.0 * a

    def terminal_reward(t, x, m):
        return -disc(horizon - t) * np.cos(x)

    model = ModelSpec(
        drift=drift, diffusion=diffusion, running_reward=running_reward,
        terminal_reward=terminal_reward, discount=disc,
        action_lo=0.0, action_hi=1.0, horizon=horizon,
        k1_bound=1.0, k2_lipschitz=2.0, eta_ellipticity=sigma**2, k6_terminal_lipschitz=0.0,
        discount_derivative=ddisc, name="decoupled",
    )
    return Scenario(model, nu_mean, nu_variance, {"x_lo": -2.5, "x_hi": 2.5})


def timeconsistent(horizon: float = 0.25, coupling: float = 0.5, sigma: float = 0.5, state_cost: float = 1.0,
                   terminal_cost: float = 1.0, nu_mean: float = 0.25, nu_variance: float = 0.04) -> Scenario:
    """The LQ game with r independent of tau, F independent of t and delta = 1."""

    def one(tau):
        return np.ones_like(np.asarray(tau, dtype=float))

    def drift(t, x, m, a):
        return a + coupling * m.mean + 0.0 * x

    def diffusion(t, x, m):
        return sigma + 0.0 * x

    def running_reward(tau, x, m, a):
        return -(0.5 * a**2 + 0.5 * state_cost * (x - m.mean) ** 2) + 0.0 * tau

    def terminal_reward(t, x, m):
        return -0.5 * terminal_cost * x**2 + 0.0 * t

    model = ModelSpec(
        drift=drift, diffusion=diffusion, running_reward=running_reward,
        terminal_reward=terminal_reward, discount=one,
        action_lo=-1.0, action_hi=1.0, horizon=horizon,
        k1_bound=20.0, k2_lipschitz=7.0, eta_ellipticity=sigma**2, k6_terminal_lipschitz=0.0,
        running_reward_dtau=lambda tau, x, m, a: 0.0 * x * a,
        terminal_reward_dt=lambda t, x, m: 0.0 * x,
        discount_derivative=lambda tau: 0.0 * np.asarray(tau, dtype=float),
        name="timeconsistent",
    )
    return Scenario(model, nu_mean, nu_variance, {"x_lo": -2.5, "x_hi": 2.5})


def plain_model(*, drift: float = 0.0, sigma: float = 1.0, running: float = 0.0, terminal=None,
                horizon: float = 1.0, action_lo: float = 0.0, action_hi: float = 1.0,
                k1_bound: float = 2.0, eta: float | None = None) -> ModelSpec:
    """Constant drift and volatility, constant running reward, terminal reward ``terminal(t, x)``.

    Nothing depends on the action or the population and the discount is 1, so
    the value equation reduces to a heat equation with a constant source.
    """
    terminal = terminal or (lambda t, x: 0.0 * x)

    def one(tau):
        return np.ones_like(np.asarray(tau, dtype=float))

    return ModelSpec(
        drift=lambda t, x, m, a: drift + 0.0 * x * a,
        diffusion=lambda t, x, m: sigma + 0.0 * x,
        running_reward=lambda tau, x, m, a: running + 0.0 * x * a,
        terminal_reward=lambda t, x, m: terminal(t, x) + 0.0 * x,
        discount=one,
        action_lo=action_lo, action_hi=action_hi, horizon=horizon,
        k1_bound=k1_bound, k2_lipschitz=1.0, eta_ellipticity=sigma**2 if eta is None else eta,
        running_reward_dtau=lambda tau, x, m, a: 0.0 * x * a,
        discount_derivative=lambda tau: 0.0 * np.asarray(tau, dtype=float),
        name="plain",
    )


CATALOG = {"lq_mean": lq_mean, "decoupled": decoupled, "timeconsistent": timeconsistent}


def get_scenario(name: str, **params) -> Scenario:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(CATALOG)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from None
