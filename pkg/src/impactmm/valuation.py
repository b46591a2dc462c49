"""Option valuation against the impacted underlying.

The reference price is a zero-rate Black-Scholes call value driven by an
effective volatility: the diffusion level whose quadratic variation matches
the jump variance the exogenous flow injects into the mid. For a side with
cutoff U hit at rate lam by trades of relative size M, each jump moves the
mid by (M U)/2 on the full-depth book, so the variance rate is
lam U^2 E[M^2] / 4 per side; dividing by spot^2 gives the squared vol.

Penalties: the position penalty squares the mismatch between the hedge and
the delta-equivalent option exposure; the activity penalty squares the
shortfall of quoted fill intensity below a floor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import orderbook as ob
from .errors import ConfigError
from .flows import MarkLaw, QuoteResponse, SelfExcitingFlow


def effective_volatility(book: ob.BookShape, sell_rate, buy_rate,
                         sell_marks: MarkLaw, buy_marks: MarkLaw, spot):
    """Jump-variance-matching volatility at the given spot.

    Rates and spot may be floats or per-path arrays; the result matches their
    broadcast shape. Raises ConfigError on a non-positive spot.
    """
    if np.any(np.asarray(spot) <= 0.0):
        raise ConfigError("spot must be positive")
    var_rate = (buy_rate * book.ask.cutoff ** 2 * buy_marks.mean_square()
                + sell_rate * book.bid.cutoff ** 2 * sell_marks.mean_square())
    out = np.sqrt(var_rate) / (2.0 * np.asarray(spot, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def call_price(spot, strike: float, tau: float, sigma):
    """Zero-rate Black-Scholes call. At tau == 0 this is the intrinsic value.

    sigma may be a float or a per-lane array (positive lanes throughout, or
    identically zero, in which case the value degenerates to intrinsic).
    """
    if tau < 0.0:
        raise ValueError("negative time to maturity")
    if tau == 0.0 or np.all(np.asarray(sigma) == 0.0):
        return ad.relu(spot - strike)
    sig_rt = sigma * math.sqrt(tau)
    d1 = ad.log(spot / strike) / sig_rt + 0.5 * sig_rt
    d2 = d1 - sig_rt
    return spot * ad.norm_cdf(d1) - strike * ad.norm_cdf(d2)


def call_delta(spot, strike: float, tau: float, sigma):
    """Spot derivative of call_price; a 0/1 indicator at expiry."""
    if tau < 0.0:
        raise ValueError("negative time to maturity")
    if tau == 0.0 or np.all(np.asarray(sigma) == 0.0):
        sv = np.asarray(ad.value_of(spot), dtype=float)
        step = np.where(sv > strike, 1.0, np.where(sv < strike, 0.0, 0.5))
        return step  # locally constant: no gradient through the expiry kink
    sig_rt = sigma * math.sqrt(tau)
    d1 = ad.log(spot / strike) / sig_rt + 0.5 * sig_rt
    return ad.norm_cdf(d1)


def reference(spot, strike: float, tau: float, sigma: float):
    """(price, delta) of the reference call at the current mid."""
    return call_price(spot, strike, tau, sigma), call_delta(spot, strike, tau, sigma)


@dataclass(frozen=True)
class PenaltySpec:
    hedge_coeff: float      # weight on squared delta-hedge mismatch
    activity_coeff: float   # weight on squared quoted-intensity shortfall
    activity_floor: float   # minimum combined client fill intensity

    def __post_init__(self):
        if self.hedge_coeff < 0.0 or self.activity_coeff < 0.0 or self.activity_floor < 0.0:
            raise ConfigError("penalty parameters must be nonnegative")


def hedge_penalty(spec: PenaltySpec, hedge, inventory, delta):
    """kappa (Q + I * delta)^2: zero exactly when the book is delta-flat."""
    mismatch = hedge + inventory * delta
    return spec.hedge_coeff * mismatch * mismatch


def activity_penalty(spec: PenaltySpec, bid_intensity, ask_intensity):
    """kappa (floor - (lam_bid + lam_ask))_+^2: punishes quoting too wide."""
    short = ad.relu(spec.activity_floor - (bid_intensity + ask_intensity))
    return spec.activity_coeff * short * short


def activity_floor(theta_flow: float, bid: QuoteResponse, ask: QuoteResponse) -> float:
    return theta_flow * (bid.lambda_bar + ask.lambda_bar)


def liquidation_value(book: ob.BookShape, P, S, hedge, inventory, strike: float):
    """Terminal wealth of unwinding: hedge into the book, options at payoff.

    Long hedge sells into the bid side, capped at available depth (the excess
    is abandoned); short hedge buys back from the ask side, which must hold
    enough volume (the simulator keeps Q above -ask depth for that reason).
    Option inventory settles at intrinsic value.
    """
    bid_q = P - S * 0.5
    ask_q = P + S * 0.5

    long_part = ad.relu(hedge)
    avail = ob.depth(book.bid, bid_q)
    sell_vol = ad.minimum(long_part, avail)
    short_part = ad.relu(-hedge)

    cash = (ob.sell_execution_value(book.bid, bid_q, sell_vol)
            - ob.buy_execution_value(book.ask, ask_q, short_part))
    payoff = ad.relu(P - strike)
    return cash + inventory * payoff
