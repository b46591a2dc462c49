"""Limit order book sides with piecewise-constant depth density.

A side is described in distance-from-quote coordinates: x >= 0 is how far an
order sits beyond the best quote (below the bid, above the ask). The density
is constant on each segment, zero in gaps and past the last segment, so
cumulative depth is piecewise linear and every execution-cost integral has a
closed form. The quadrature route used to cross-check these closed forms
lives in the test suite, not here.

Conventions that matter:
  * inverse_depth is the generalized inverse inf{x >= 0 : depth(x) >= y}; on
    a plateau (a gap in the book) it returns the left edge, and
    inverse_depth(0) == 0 even when the first segment starts above 0.
  * volumes may exceed available depth by a ~1e-9 relative slack (clamped)
    to absorb float noise from upstream clipping; beyond that it is an error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, LiquidityExceededError

_REL_SLACK = 1e-9


@dataclass(frozen=True)
class Side:
    """One book side: sorted, non-overlapping constant-density segments."""

    starts: np.ndarray
    ends: np.ndarray
    density: np.ndarray
    # derived tables
    seg_volume: np.ndarray = field(init=False, repr=False)
    cum_before: np.ndarray = field(init=False, repr=False)
    cum_end: np.ndarray = field(init=False, repr=False)
    int_before: np.ndarray = field(init=False, repr=False)
    total_volume: float = field(init=False)
    cutoff: float = field(init=False)
    max_density: float = field(init=False)

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=float)
        ends = np.asarray(self.ends, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if starts.ndim != 1 or starts.shape != ends.shape or starts.shape != dens.shape:
            raise ConfigError("book side arrays must be 1-d and equally sized")
        if starts.size == 0:
            raise ConfigError("book side needs at least one segment")
        if np.any(dens <= 0.0):
            raise ConfigError("segment densities must be positive")
        if starts[0] < 0.0 or np.any(ends <= starts) or np.any(starts[1:] < ends[:-1]):
            raise ConfigError("segments must be ordered, non-overlapping, with positive width")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "density", dens)
        vol = dens * (ends - starts)
        cum_end = np.cumsum(vol)
        cum_before = cum_end - vol
        # integral of the inverse depth over each full segment:
        # l_i * v_i + v_i^2 / (2 c_i)
        seg_int = starts * vol + vol * vol / (2.0 * dens)
        int_before = np.concatenate(([0.0], np.cumsum(seg_int)))[:-1]
        object.__setattr__(self, "seg_volume", vol)
        object.__setattr__(self, "cum_before", cum_before)
        object.__setattr__(self, "cum_end", cum_end)
        object.__setattr__(self, "int_before", int_before)
        object.__setattr__(self, "total_volume", float(cum_end[-1]))
        object.__setattr__(self, "cutoff", float(ends[-1]))
        object.__setattr__(self, "max_density", float(dens.max()))


def linear_side(density: float, cutoff: float) -> Side:
    """The single-segment book: constant density on [0, cutoff]."""
    return Side(np.array([0.0]), np.array([float(cutoff)]), np.array([float(density)]))


@dataclass(frozen=True)
class BookShape:
    bid: Side
    ask: Side


# ---------------------------------------------------------------- numerics

def _depth_value(side: Side, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for l, h, c in zip(side.starts, side.ends, side.density):
        out += c * np.clip(x - l, 0.0, h - l)
    return out


def _density_value(side: Side, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for l, h, c in zip(side.starts, side.ends, side.density):
        out = np.where((x >= l) & (x < h), c, out)
    return out


def _check_volume(side: Side, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0):
        raise LiquidityExceededError("negative volume")
    limit = side.total_volume * (1.0 + _REL_SLACK) + 1e-12
    if np.any(y > limit):
        raise LiquidityExceededError(
            f"volume {float(np.max(y)):.9g} exceeds side depth {side.total_volume:.9g}"
        )
    return np.minimum(y, side.total_volume)


def _segment_of_volume(side: Side, y: np.ndarray) -> np.ndarray:
    # first segment whose cumulative end reaches y; exact boundary volumes
    # land on the earlier segment, which is what the left-edge convention needs
    return np.minimum(np.searchsorted(side.cum_end, y, side="left"), len(side.cum_end) - 1)


def _inverse_value(side: Side, y) -> np.ndarray:
    y = _check_volume(side, y)
    i = _segment_of_volume(side, y)
    x = side.starts[i] + (y - side.cum_before[i]) / side.density[i]
    return np.where(y <= 0.0, 0.0, x)


def _inverse_derivative(side: Side, y) -> np.ndarray:
    y = _check_volume(side, y)
    i = _segment_of_volume(side, y)
    return 1.0 / side.density[i]


def _inverse_integral_value(side: Side, q) -> np.ndarray:
    q = _check_volume(side, q)
    i = _segment_of_volume(side, q)
    w = np.maximum(q - side.cum_before[i], 0.0)
    return side.int_before[i] + side.starts[i] * w + w * w / (2.0 * side.density[i])


# ------------------------------------------------------------- public API

def depth(side: Side, x):
    """Cumulative volume within distance x of the quote (accepts Vars)."""
    return ad.elementwise(x, lambda v: _depth_value(side, v), lambda v: _density_value(side, v))


def inverse_depth(side: Side, y):
    """Distance consumed by volume y: the left-continuous generalized inverse."""
    return ad.elementwise(y, lambda v: _inverse_value(side, v), lambda v: _inverse_derivative(side, v))


def inverse_integral(side: Side, q):
    """Integral of inverse_depth from 0 to q (the execution-cost kernel)."""
    return ad.elementwise(q, lambda v: _inverse_integral_value(side, v), lambda v: _inverse_value(side, v))


def sell_execution_value(side: Side, bid_quote, volume):
    """Cash received for selling `volume` into the bid side quoted at bid_quote.

    Precondition: volume <= depth(side, bid_quote) (the book below price zero
    does not exist). Checked on concrete values with float slack.
    """
    b = ad.value_of(bid_quote)
    v = np.asarray(ad.value_of(volume), dtype=float)
    avail = _depth_value(side, np.minimum(np.asarray(b, dtype=float), side.cutoff))
    if np.any(v > avail * (1.0 + _REL_SLACK) + 1e-12):
        worst = float(np.max(v - avail))
        raise LiquidityExceededError(f"sell volume exceeds bid depth by {worst:.3g}")
    return bid_quote * volume - inverse_integral(side, volume)


def buy_execution_value(side: Side, ask_quote, volume):
    """Cash paid for buying `volume` from the ask side quoted at ask_quote."""
    return ask_quote * volume + inverse_integral(side, volume)
