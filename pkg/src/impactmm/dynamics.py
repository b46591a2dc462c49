"""Underlying price dynamics under trade impact.

State per path: mid price P, transient displacement D, spread S, and the two
exogenous flow intensities. Best quotes are derived: bid = P - S/2,
ask = P + S/2.

Every trade that consumes book depth x (the distance its volume reaches into
the side) moves the mid by x/2 toward the trade, widens the spread by x, and
books (1-eta) x/2 of the mid move into the transient D. Between trades D
relaxes to zero at speed r with P absorbing the relaxation (so the permanent
share of a jump works out to eta x/2), and S relaxes to its floor at speed
rho.

All update functions accept plain arrays or autodiff Vars; zero-volume trades
are exact no-ops, which is how vectorized multi-arrival steps avoid masking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import orderbook as ob
from . import rng
from .errors import ConfigError
from .flows import MarkLaw, SelfExcitingFlow


@dataclass(frozen=True)
class Impact:
    eta: float    # permanent share of each mid jump, in [0, 1]
    r: float      # transient relaxation speed
    rho: float    # spread relaxation speed
    floor: float  # spread floor (the tick-like minimum spread)

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("permanent impact share eta must be in [0, 1]")
        if self.r < 0.0 or self.rho < 0.0:
            raise ConfigError("relaxation speeds must be nonnegative")
        if self.floor <= 0.0:
            raise ConfigError("spread floor must be positive")


@dataclass(frozen=True)
class MarketState:
    """Per-path market variables; fields are arrays or Vars of equal shape."""

    P: object
    D: object
    S: object
    lam_sell: object
    lam_buy: object

    def values(self) -> "MarketState":
        return MarketState(*(np.asarray(ad.value_of(f), dtype=float)
                             for f in (self.P, self.D, self.S, self.lam_sell, self.lam_buy)))


def best_bid(state: MarketState):
    return state.P - state.S * 0.5


def best_ask(state: MarketState):
    return state.P + state.S * 0.5


def initial_state(P0: float, D0: float, S0: float, sell_flow: SelfExcitingFlow,
                  buy_flow: SelfExcitingFlow, n_paths: int, impact: Impact) -> MarketState:
    if S0 < impact.floor:
        raise ConfigError("initial spread below the spread floor")
    ones = np.ones(n_paths)
    return MarketState(
        P=P0 * ones, D=D0 * ones, S=S0 * ones,
        lam_sell=sell_flow.lam0 * ones, lam_buy=buy_flow.lam0 * ones,
    )


def decay(state: MarketState, impact: Impact, sell_flow: SelfExcitingFlow,
          buy_flow: SelfExcitingFlow, dt: float) -> MarketState:
    """Event-free relaxation over dt: D to 0 (P absorbing it), S to floor."""
    f_r = math.exp(-impact.r * dt)
    f_rho = math.exp(-impact.rho * dt)
    return MarketState(
        P=state.P - state.D * (1.0 - f_r),
        D=state.D * f_r,
        S=impact.floor + (state.S - impact.floor) * f_rho,
        lam_sell=sell_flow.decayed(state.lam_sell, dt),
        lam_buy=buy_flow.decayed(state.lam_buy, dt),
    )


def apply_sell(state: MarketState, book: ob.BookShape, impact: Impact, volume) -> MarketState:
    """Market sell of `volume` into the bid side. volume <= depth at the bid."""
    x = ob.inverse_depth(book.bid, volume)
    return replace(
        state,
        P=state.P - x * 0.5,
        D=state.D - x * (0.5 * (1.0 - impact.eta)),
        S=state.S + x,
    )


def apply_buy(state: MarketState, book: ob.BookShape, impact: Impact, volume) -> MarketState:
    """Market buy of `volume` from the ask side. volume <= total ask depth."""
    x = ob.inverse_depth(book.ask, volume)
    return replace(
        state,
        P=state.P + x * 0.5,
        D=state.D + x * (0.5 * (1.0 - impact.eta)),
        S=state.S + x,
    )


def exogenous_step(state: MarketState, book: ob.BookShape, impact: Impact,
                   sell_flow: SelfExcitingFlow, buy_flow: SelfExcitingFlow,
                   sell_marks: MarkLaw, buy_marks: MarkLaw,
                   dt: float, seed: int, step: int, n_total: int,
                   lane: "slice | None" = None):
    """One grid step of exogenous flow.

    Counts are Poisson with the intensity frozen at the step's left endpoint;
    the state then relaxes over dt; arrivals apply sequentially (sells first,
    then buys), each mark scaling the depth available at its own moment; and
    excitation lands at the step boundary.

    Random draws always cover the full batch of `n_total` paths; `lane`
    selects this call's slice of it, so results do not depend on how a batch
    is chunked across workers.

    Returns (state, n_sell, n_buy).
    """
    if lane is None:
        lane = slice(0, n_total)
    lam_s = np.asarray(ad.value_of(state.lam_sell), dtype=float)
    lam_b = np.asarray(ad.value_of(state.lam_buy), dtype=float)
    u_s = rng.uniforms(seed, step, rng.SELL_COUNT, n_total)[lane]
    u_b = rng.uniforms(seed, step, rng.BUY_COUNT, n_total)[lane]
    n_sell = rng.poisson_from_uniform(lam_s * dt, u_s)
    n_buy = rng.poisson_from_uniform(lam_b * dt, u_b)

    state = decay(state, impact, sell_flow, buy_flow, dt)

    for j in range(int(n_sell.max()) if n_sell.size else 0):
        live = (n_sell > j).astype(float)
        m = sell_marks.sample(seed, step, rng.SELL_MARK, n_total, index=j)[lane] * live
        avail = ob.depth(book.bid, best_bid(state))  # depth saturates past the cutoff
        state = apply_sell(state, book, impact, avail * m)
    for j in range(int(n_buy.max()) if n_buy.size else 0):
        live = (n_buy > j).astype(float)
        m = buy_marks.sample(seed, step, rng.BUY_MARK, n_total, index=j)[lane] * live
        state = apply_buy(state, book, impact, book.ask.total_volume * m)

    state = replace(
        state,
        lam_sell=sell_flow.excited(state.lam_sell, n_sell),
        lam_buy=buy_flow.excited(state.lam_buy, n_buy),
    )
    return state, n_sell, n_buy


def apply_impulse(state: MarketState, book: ob.BookShape, impact: Impact,
                  sell_flow: SelfExcitingFlow, buy_flow: SelfExcitingFlow,
                  dq, fee: float):
    """The agent's hedge trade dq (buy > 0, sell < 0) at current quotes.

    Returns (state, cash, fee_paid): cash is signed execution value (received
    minus paid); fee_paid is fee per intervention, charged on dq != 0 and
    treated as locally constant in differentiation. The traded side's
    exogenous intensity is excited exactly like an external event.
    """
    dq_val = np.asarray(ad.value_of(dq), dtype=float)
    sell_vol = ad.relu(-dq) if ad.is_var(dq) else np.maximum(-dq_val, 0.0)
    buy_vol = ad.relu(dq) if ad.is_var(dq) else np.maximum(dq_val, 0.0)

    cash = (ob.sell_execution_value(book.bid, best_bid(state), sell_vol)
            - ob.buy_execution_value(book.ask, best_ask(state), buy_vol))
    state = apply_sell(state, book, impact, sell_vol)
    state = apply_buy(state, book, impact, buy_vol)

    sold = (dq_val < 0.0).astype(float)
    bought = (dq_val > 0.0).astype(float)
    state = replace(
        state,
        lam_sell=sell_flow.excited(state.lam_sell, sold),
        lam_buy=buy_flow.excited(state.lam_buy, bought),
    )
    fee_paid = fee * (sold + bought)
    return state, cash, fee_paid
