"""Order-flow building blocks.

Two exogenous trade streams (bid-side sells, ask-side buys) arrive with
self-exciting intensities that mean-revert between events and jump by kappa
on every event, the agent's own interventions included. Trade sizes are
fractions of available depth drawn from a mark law. Client option fills
respond to the agent's quotes through a logistic curve around the reference
price.

Within one grid step the intensity is frozen at the step's left endpoint for
count sampling; decay is applied over the step and excitation at the step
boundary. The exact mean recursion of that scheme is
E[lam_{k+1}] = E[lam_k] (e^{-theta dt} + kappa dt) + mu (1 - e^{-theta dt}).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng
from .errors import ConfigError


@dataclass(frozen=True)
class SelfExcitingFlow:
    """One side's exogenous arrival intensity."""

    mu: float        # long-run base level
    theta: float     # mean-reversion speed
    kappa: float     # upward jump per event (subcritical: kappa < theta)
    lam0: float      # initial level

    def __post_init__(self):
        if self.mu < 0.0 or self.lam0 < 0.0:
            raise ConfigError("intensity levels must be nonnegative")
        if self.kappa < 0.0:
            raise ConfigError("excitation kappa must be nonnegative")
        if self.kappa > 0.0 and not self.kappa < self.theta:
            raise ConfigError("self-excitation must be subcritical (kappa < theta)")
        if self.theta < 0.0:
            raise ConfigError("mean-reversion speed must be nonnegative")

    def decayed(self, lam, dt: float):
        """Intensity after dt event-free time: mu + (lam - mu) e^{-theta dt}."""
        f = math.exp(-self.theta * dt)
        return self.mu + (lam - self.mu) * f

    def excited(self, lam, n_events):
        return lam + self.kappa * n_events


@dataclass(frozen=True)
class MarkLaw:
    """Relative trade size in [0, 1]: Beta(a, b) or a constant."""

    kind: str = "beta"
    a: float = 2.0
    b: float = 5.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("beta", "constant"):
            raise ConfigError(f"unknown mark law kind {self.kind!r}")
        if self.kind == "beta" and (self.a <= 0.0 or self.b <= 0.0):
            raise ConfigError("beta mark parameters must be positive")
        if self.kind == "constant" and not 0.0 <= self.value <= 1.0:
            raise ConfigError("constant mark must lie in [0, 1]")

    def mean(self) -> float:
        if self.kind == "beta":
            return self.a / (self.a + self.b)
        return self.value

    def mean_square(self) -> float:
        if self.kind == "beta":
            s = self.a + self.b
            return self.a * (self.a + 1.0) / (s * (s + 1.0))
        return self.value * self.value

    def sample(self, seed: int, step: int, channel: int, n: int, index: int = 0) -> np.ndarray:
        if self.kind == "beta":
            return rng.betas(seed, step, channel, n, self.a, self.b, index=index)
        return np.full(n, self.value)


@dataclass(frozen=True)
class QuoteResponse:
    """Client fill intensity at one of the agent's quotes."""

    lambda_bar: float  # intensity ceiling
    k: float           # logistic steepness in price units
    mu: float = 0.0    # logit shift (demand tilt)

    def __post_init__(self):
        if self.lambda_bar < 0.0:
            raise ConfigError("lambda_bar must be nonnegative")
        if self.k <= 0.0:
            raise ConfigError("quote response steepness must be positive")


def bid_fill_intensity(resp: QuoteResponse, bid_quote, reference_price):
    """Fills at the agent's option bid: rises as the bid approaches the reference."""
    return resp.lambda_bar * ad.sigmoid(resp.k * (bid_quote - reference_price) + resp.mu)


def ask_fill_intensity(resp: QuoteResponse, ask_quote, reference_price):
    """Fills at the agent's option ask: falls as the ask moves above the reference."""
    return resp.lambda_bar * ad.sigmoid(resp.k * (reference_price - ask_quote) + resp.mu)


def draw_counts(seed: int, step: int, channel: int, mean, n: int) -> np.ndarray:
    """Poisson counts for one step and channel via single-uniform inverse CDF."""
    u = rng.uniforms(seed, step, channel, n)
    return rng.poisson_from_uniform(mean, u)


def discrete_mean_intensity(flow: SelfExcitingFlow, dt: float, n_steps: int) -> np.ndarray:
    """Exact per-step means E[lam_k] of the frozen-intensity scheme (oracle-free)."""
    f = math.exp(-flow.theta * dt)
    out = np.empty(n_steps + 1)
    out[0] = flow.lam0
    for k in range(n_steps):
        out[k + 1] = out[k] * (f + flow.kappa * dt) + flow.mu * (1.0 - f)
    return out
