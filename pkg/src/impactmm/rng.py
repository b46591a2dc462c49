"""Counter-based random streams.

Every draw is a pure function of (seed, step, channel, index): re-running a
simulation with the same seed reproduces each draw bit for bit, paired runs
that share a seed see identical exogenous randomness, and evaluation chunks
can regenerate any slice of a stream without coordination.

Channel ids are part of the reproducibility contract; do not renumber.
"""
from __future__ import annotations

import numpy as np

SELL_COUNT = 0    # exogenous bid-side trade counts
BUY_COUNT = 1     # exogenous ask-side trade counts
SELL_MARK = 2     # relative sizes of bid-side trades (index = arrival number)
BUY_MARK = 3      # relative sizes of ask-side trades
CLIENT_BUY = 4    # option fills at the agent's ask quote (client buys)
CLIENT_SELL = 5   # option fills at the agent's bid quote (client sells)
POLICY_INIT = 6   # network weight initialization (index = layer)
SCRATCH = 7       # free channel for tests and tooling

_GOLDEN = 0x9E3779B97F4A7C15  # decorrelates small seeds in the key


def generator(seed: int, step: int, channel: int, index: int = 0) -> np.random.Generator:
    """Fresh Philox generator for one (seed, step, channel, index) cell."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(_GOLDEN)], dtype=np.uint64)
    counter = np.array(
        [0, np.uint64(index), np.uint64(channel), np.uint64(step)], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def uniforms(seed: int, step: int, channel: int, n: int, index: int = 0) -> np.ndarray:
    """n uniforms in [0, 1) for the given stream cell."""
    return generator(seed, step, channel, index).random(n)


def normals(seed: int, step: int, channel: int, n: int, index: int = 0) -> np.ndarray:
    return generator(seed, step, channel, index).standard_normal(n)


def betas(seed: int, step: int, channel: int, n: int, a: float, b: float, index: int = 0) -> np.ndarray:
    return generator(seed, step, channel, index).beta(a, b, size=n)


def poisson_from_uniform(mean, u, max_iter: int = 4096) -> np.ndarray:
    """Poisson counts via the inverse CDF of a single uniform per element.

    Unlike rejection samplers, the count is a piecewise-constant function of
    the mean, so a tiny perturbation of the intensity almost never changes
    the sampled count: exactly what common-random-number gradient checks and
    paired-path couplings need.

    Args:
        mean: Poisson means, broadcastable against u. Must satisfy mean < 700
            (exp(-mean) must not underflow); the config layer enforces this.
        u: uniforms in [0, 1).
    Returns:
        int64 counts, k = min{n : u <= CDF(n)}.
    """
    m = np.asarray(mean, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(m < 0.0) or np.any(~np.isfinite(m)):
        raise ValueError("poisson mean must be finite and nonnegative")
    if np.any(m >= 700.0):
        raise ValueError("poisson mean too large for inverse-CDF sampling (>= 700)")
    m, u = np.broadcast_arrays(m, u)
    pmf = np.exp(-m)
    cdf = pmf.copy()
    k = np.zeros(m.shape, dtype=np.int64)
    for n in range(1, max_iter + 1):
        active = u > cdf
        if not active.any():
            break
        k[active] += 1
        pmf = pmf * (m / n)
        cdf = cdf + pmf
    return k
