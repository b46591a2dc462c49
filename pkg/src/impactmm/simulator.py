"""Discrete-time rollouts of the hedged market maker, and policy training.

One step of the loop, starting from the grid state at t_k:
reference price and delta are computed at the current mid, the network maps
scaled state features to quotes and a hedge fraction, client fills arrive at
the quoted intensities, and the option inventory updates. Exogenous flow and
resilience decay then advance the market over the interval, and the hedge
impulse executes last, clipped to the depth of the book it actually hits
(moving mid and spread and exciting the traded side's flow). Penalties accrue
on the post-step state; terminal wealth adds the liquidation value of the
remaining position.

The same step code serves three callers: plain numpy rollouts for evaluation
and property checks, taped rollouts whose reverse pass yields the policy
gradient, and the epoch loop of `train`. Batches are processed in fixed-size
chunks; every random draw covers the full batch and is sliced per chunk, so
results are identical however the chunks are scheduled.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dynamics as dyn
from . import flows
from . import orderbook as ob
from . import policy as pol
from . import rng
from . import valuation as val
from .config import Config
from .errors import SimulationFault

# Lanes per worker chunk. Rollout results never depend on this (draws are
# sliced from full-batch streams); it bounds tape memory and enables
# threading. The hybrid estimator's score baseline is chunk-local, so its
# gradient noise (not its expectation) does see the chunk size.
CHUNK = 512

# Column order of trajectory CSV files.
CSV_COLUMNS = ("time", "P", "D", "S", "B", "A", "b_ref", "delta", "beta",
               "alpha", "gamma", "dN_a", "dN_b", "dN_minus", "dN_plus",
               "I", "Q", "dQ", "X", "g", "h")

# Every per-step series a rollout records. The first block mirrors the CSV;
# the rest are diagnostics (intensities, effective vol, mean |I|).
CURVE_NAMES = CSV_COLUMNS[1:] + ("lam_minus", "lam_plus", "sigma", "absI")


@dataclass(frozen=True)
class Model:
    """Config plus every prebuilt ingredient a rollout needs."""

    cfg: Config
    book: ob.BookShape
    impact: dyn.Impact
    sell_flow: flows.SelfExcitingFlow
    buy_flow: flows.SelfExcitingFlow
    sell_marks: flows.MarkLaw
    buy_marks: flows.MarkLaw
    bid_resp: flows.QuoteResponse
    ask_resp: flows.QuoteResponse
    penalties: val.PenaltySpec
    scaler: pol.FeatureScaler

    @classmethod
    def build(cls, cfg: Config) -> "Model":
        return cls(
            cfg=cfg,
            book=cfg.book_shape(),
            impact=cfg.impact_params(),
            sell_flow=cfg.sell_flow(),
            buy_flow=cfg.buy_flow(),
            sell_marks=cfg.sell_marks(),
            buy_marks=cfg.buy_marks(),
            bid_resp=cfg.bid_response(),
            ask_resp=cfg.ask_response(),
            penalties=cfg.penalty_spec(),
            scaler=cfg.feature_scaler(),
        )


def _as_model(m) -> Model:
    return m if isinstance(m, Model) else Model.build(m)


@dataclass
class ChunkResult:
    lo: int
    hi: int
    J: np.ndarray
    core: np.ndarray          # J minus the initial cash (exactly policy terms)
    sum_g: np.ndarray         # time-integrated position penalty per lane
    sum_h: np.ndarray         # time-integrated activity penalty per lane
    liquidation: np.ndarray
    inventory_T: np.ndarray
    hedge_T: np.ndarray
    fills_a: np.ndarray
    fills_b: np.ndarray
    exo_sells: np.ndarray
    exo_buys: np.ndarray
    traded_volume: np.ndarray  # sum |dQ| per lane
    curve_sums: dict
    sample: "dict | None"
    min_bid: float
    min_ask: float
    min_spread: float
    loss: object = None        # scalar surrogate loss (taped runs only)
    grad: "np.ndarray | None" = None


@dataclass
class RolloutResult:
    """Aggregated batch rollout: per-path terminals plus per-step mean curves."""

    n_paths: int
    seed: int
    stream: int
    times: np.ndarray
    J: np.ndarray
    core: np.ndarray
    sum_g: np.ndarray
    sum_h: np.ndarray
    liquidation: np.ndarray
    inventory_T: np.ndarray
    hedge_T: np.ndarray
    fills_a: np.ndarray
    fills_b: np.ndarray
    exo_sells: np.ndarray
    exo_buys: np.ndarray
    traded_volume: np.ndarray
    curves: dict
    sample: "dict | None"
    min_bid: float
    min_ask: float
    min_spread: float


@dataclass
class TrainResult:
    policy: pol.Policy
    curve: dict
    adam: "pol.AdamState | None"
    gradient_mode: str
    optimizer: str
    epochs: int
    batch_size: int
    seed: int


# ---------------------------------------------------------------- rollouts

def _simulate(model: Model, layers, scales, *, seed: int, stream: int,
              n_total: int, lo: int, hi: int, taped: bool,
              gradient_mode: str, want_sample: bool) -> ChunkResult:
    cfg = model.cfg
    count = hi - lo
    lane = slice(lo, hi)
    n_steps = cfg.grid.steps
    dt = cfg.dt
    horizon = cfg.horizon
    strike = cfg.option.strike
    fee = cfg.impact.fee
    base_step = stream * n_steps  # distinct randomness per epoch / stream
    ask_total = model.book.ask.total_volume
    hybrid = taped and gradient_mode == "hybrid"
    straight = taped and gradient_mode == "straight_through"

    state = dyn.initial_state(cfg.initial.P0, cfg.initial.D0, cfg.initial.S0,
                              model.sell_flow, model.buy_flow, count, model.impact)
    I = np.full(count, float(cfg.initial.I0))
    Q = np.full(count, float(cfg.initial.Q0))  # becomes a Var once traded
    F = np.zeros(count)       # realized cash flows, independent of X0
    pg = np.zeros(count)      # position penalty accruals (Var once Q is)
    ph = np.zeros(count)
    fills_a = np.zeros(count)
    fills_b = np.zeros(count)
    exo_sells = np.zeros(count)
    exo_buys = np.zeros(count)
    traded = np.zeros(count)

    rev_sum = np.zeros(count)   # compensator client revenue (training only)
    exec_sum = np.zeros(count)
    fee_sum = np.zeros(count)
    c_pre = np.zeros((n_steps, count)) if hybrid else None
    c_post = np.zeros((n_steps, count)) if hybrid else None
    logp = [None] * n_steps if hybrid else None

    curve_sums = {name: np.zeros(n_steps + 1) for name in CURVE_NAMES}
    sample = ({name: np.zeros(n_steps + 1) for name in CURVE_NAMES}
              if want_sample else None)
    min_bid = min_ask = min_spread = np.inf

    def rec(name, k, values):
        v = np.broadcast_to(np.asarray(ad.value_of(values), dtype=float), (count,))
        curve_sums[name][k] = v.sum()
        if sample is not None:
            sample[name][k] = v[0]

    g = None
    for k in range(n_steps + 1):
        t = k * dt
        tau = horizon - t
        if k == n_steps:
            tau = 0.0  # guard fp drift at the last grid point
        P_v = np.asarray(ad.value_of(state.P), dtype=float)
        lam_s_v = np.asarray(ad.value_of(state.lam_sell), dtype=float)
        lam_b_v = np.asarray(ad.value_of(state.lam_buy), dtype=float)
        sigma = val.effective_volatility(model.book, lam_s_v, lam_b_v,
                                         model.sell_marks, model.buy_marks, P_v)
        b_ref = val.call_price(state.P, strike, tau, sigma)
        delta = val.call_delta(state.P, strike, tau, sigma)

        g = val.hedge_penalty(model.penalties, Q, I, delta)
        if k > 0:
            pg = pg + g  # the state penalty pairs with the step that led here
            if hybrid:
                c_post[k - 1] -= dt * np.asarray(ad.value_of(g), dtype=float)

        bid = dyn.best_bid(state)
        ask = dyn.best_ask(state)
        bid_v = np.asarray(ad.value_of(bid), dtype=float)
        ask_v = np.asarray(ad.value_of(ask), dtype=float)
        s_v = np.asarray(ad.value_of(state.S), dtype=float)
        min_bid = min(min_bid, float(bid_v.min()))
        min_ask = min(min_ask, float(ask_v.min()))
        min_spread = min(min_spread, float(s_v.min()))

        for name, values in (("P", state.P), ("D", state.D), ("S", state.S),
                             ("B", bid), ("A", ask), ("b_ref", b_ref),
                             ("delta", delta), ("I", I), ("Q", Q),
                             ("X", cfg.initial.X0 + F), ("g", g),
                             ("lam_minus", lam_s_v), ("lam_plus", lam_b_v),
                             ("sigma", sigma),
                             ("absI", np.abs(np.asarray(ad.value_of(I),
                                                        dtype=float)))):
            rec(name, k, values)
        if k == n_steps:
            break

        feats = model.scaler.features(t, state.P, state.D, state.S, I, Q,
                                      b_ref, delta)
        beta, alpha, gamma = pol.decode(pol.forward(layers, feats), b_ref, scales)
        lam_bid = flows.bid_fill_intensity(model.bid_resp, beta, b_ref)
        lam_ask = flows.ask_fill_intensity(model.ask_resp, alpha, b_ref)
        h = val.activity_penalty(model.penalties, lam_bid, lam_ask)
        ph = ph + h

        alpha_v = np.asarray(ad.value_of(alpha), dtype=float)
        beta_v = np.asarray(ad.value_of(beta), dtype=float)
        lam_ask_v = np.asarray(ad.value_of(lam_ask), dtype=float)
        lam_bid_v = np.asarray(ad.value_of(lam_bid), dtype=float)
        u_a = rng.uniforms(seed, base_step + k, rng.CLIENT_BUY, n_total)[lane]
        u_b = rng.uniforms(seed, base_step + k, rng.CLIENT_SELL, n_total)[lane]
        dN_a = rng.poisson_from_uniform(lam_ask_v * dt, u_a)
        dN_b = rng.poisson_from_uniform(lam_bid_v * dt, u_b)
        if straight:
            # counts stay the sampled integers in value, but the backward
            # pass sees the fill means, so quote changes reach the
            # inventory-dependent terms downstream
            dN_a_t = dN_a + (lam_ask - lam_ask_v) * dt
            dN_b_t = dN_b + (lam_bid - lam_bid_v) * dt
            I_next = I + dN_b_t - dN_a_t
        else:
            I_next = I + dN_b - dN_a

        # exogenous flow advances the market first; the hedge toward
        # gamma * inventory then executes at the freshest quotes, inside
        # what the book can absorb there
        state, n_sell, n_buy = dyn.exogenous_step(
            state, model.book, model.impact, model.sell_flow, model.buy_flow,
            model.sell_marks, model.buy_marks, dt, seed, base_step + k,
            n_total, lane)
        exo_sells += n_sell
        exo_buys += n_buy

        q_target = gamma * I_next
        sell_cap = ob.depth(model.book.bid, dyn.best_bid(state))
        lower = ad.maximum(-sell_cap, -ask_total - Q)
        dQ = ad.clip(q_target - Q, lower, ask_total)
        state, exec_cash, fee_paid = dyn.apply_impulse(
            state, model.book, model.impact, model.sell_flow, model.buy_flow,
            dQ, fee)
        Q = Q + dQ
        I = I_next
        dQ_v = np.asarray(ad.value_of(dQ), dtype=float)
        exec_v = np.asarray(ad.value_of(exec_cash), dtype=float)
        F = F + alpha_v * dN_a - beta_v * dN_b + exec_v - fee_paid
        fills_a += dN_a
        fills_b += dN_b
        traded += np.abs(dQ_v)

        if taped:
            rev = alpha * lam_ask - beta * lam_bid
            rev_sum = rev_sum + rev
            exec_sum = exec_sum + exec_cash
            fee_sum = fee_sum + fee_paid
            if hybrid:
                h_v = np.asarray(ad.value_of(h), dtype=float)
                rev_v = np.asarray(ad.value_of(rev), dtype=float)
                c_pre[k] = dt * (rev_v - h_v)
                c_post[k] += exec_v - fee_paid
                terms = None
                # score contributions of the client fill draws; the tiny
                # floor keeps log finite when a quote shuts a side off
                if model.ask_resp.lambda_bar > 0.0:
                    terms = dN_a * ad.log(lam_ask * dt + 1e-300) - lam_ask * dt
                if model.bid_resp.lambda_bar > 0.0:
                    t_b = dN_b * ad.log(lam_bid * dt + 1e-300) - lam_bid * dt
                    terms = t_b if terms is None else terms + t_b
                logp[k] = terms

        for name, values in (("beta", beta), ("alpha", alpha), ("gamma", gamma),
                             ("dN_a", dN_a), ("dN_b", dN_b),
                             ("dN_minus", n_sell), ("dN_plus", n_buy),
                             ("dQ", dQ), ("h", h)):
            rec(name, k, values)

    L = val.liquidation_value(model.book, state.P, state.S, Q, I, strike)
    L_v = np.asarray(ad.value_of(L), dtype=float)
    pg_v = np.asarray(ad.value_of(pg), dtype=float)
    ph_v = np.asarray(ad.value_of(ph), dtype=float)
    core = F - dt * (pg_v + ph_v) + L_v
    J = cfg.initial.X0 + core

    res = ChunkResult(
        lo=lo, hi=hi, J=J, core=core, sum_g=dt * pg_v, sum_h=dt * ph_v,
        liquidation=L_v,
        inventory_T=np.asarray(ad.value_of(I), dtype=float).copy(),
        hedge_T=np.asarray(ad.value_of(Q), dtype=float).copy(),
        fills_a=fills_a, fills_b=fills_b,
        exo_sells=exo_sells, exo_buys=exo_buys, traded_volume=traded,
        curve_sums=curve_sums, sample=sample,
        min_bid=float(min_bid), min_ask=float(min_ask),
        min_spread=float(min_spread),
    )

    if taped:
        j_train = rev_sum * dt + exec_sum - fee_sum - dt * (pg + ph) + L
        surrogate = ad.mean(j_train)
        if hybrid:
            # reward to go of each step's fill draws, chunk-mean baseline
            suffix_post = np.cumsum(c_post[::-1], axis=0)[::-1]
            suffix_pre = np.cumsum(c_pre[::-1], axis=0)[::-1]
            for k in range(n_steps):
                if logp[k] is None:
                    continue
                G = suffix_post[k] + (suffix_pre[k] - c_pre[k]) + L_v
                w = G - G.mean()
                surrogate = surrogate + ad.mean(w * logp[k])
        res.loss = -surrogate
    return res


def _run_chunk(model: Model, policy: pol.Policy, **kw) -> ChunkResult:
    if not kw["taped"]:
        return _simulate(model, policy.layers(), policy.scales, **kw)
    tape = ad.Tape()
    with ad.recording(tape):
        layers, leaves = policy.layer_leaves(tape)
        res = _simulate(model, layers, policy.scales, **kw)
        tape.backward(res.loss)
    res.grad = policy.gather_grad(leaves)
    res.loss = float(res.loss.value)
    return res


def _run_chunks(model: Model, policy: pol.Policy, n_paths: int, seed: int,
                stream: int, *, taped: bool, gradient_mode: str,
                threads: int, want_sample: bool) -> list:
    if n_paths <= 0:
        raise SimulationFault("need at least one path")
    spans = [(lo, min(lo + CHUNK, n_paths)) for lo in range(0, n_paths, CHUNK)]

    def work(span):
        lo, hi = span
        return _run_chunk(model, policy, seed=seed, stream=stream,
                          n_total=n_paths, lo=lo, hi=hi, taped=taped,
                          gradient_mode=gradient_mode,
                          want_sample=want_sample and lo == 0)

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(work, spans))
    return [work(s) for s in spans]


def rollout(model, policy: pol.Policy, n_paths: int, *, seed: "int | None" = None,
            stream: int = 0, threads: int = 1,
            want_sample: bool = False) -> RolloutResult:
    """Plain batch rollout: per-path terminal results and per-step mean curves."""
    model = _as_model(model)
    if seed is None:
        seed = model.cfg.run.seed
    chunks = _run_chunks(model, policy, n_paths, seed, stream, taped=False,
                         gradient_mode="pathwise", threads=threads,
                         want_sample=want_sample)
    n_steps = model.cfg.grid.steps
    curves = {name: np.zeros(n_steps + 1) for name in CURVE_NAMES}
    for c in chunks:
        for name in CURVE_NAMES:
            curves[name] += c.curve_sums[name]
    for name in CURVE_NAMES:
        curves[name] /= n_paths

    def cat(attr):
        return np.concatenate([getattr(c, attr) for c in chunks])

    sample = next((c.sample for c in chunks if c.sample is not None), None)
    return RolloutResult(
        n_paths=n_paths, seed=seed, stream=stream,
        times=np.arange(n_steps + 1) * model.cfg.dt,
        J=cat("J"), core=cat("core"), sum_g=cat("sum_g"), sum_h=cat("sum_h"),
        liquidation=cat("liquidation"), inventory_T=cat("inventory_T"),
        hedge_T=cat("hedge_T"), fills_a=cat("fills_a"), fills_b=cat("fills_b"),
        exo_sells=cat("exo_sells"), exo_buys=cat("exo_buys"),
        traded_volume=cat("traded_volume"), curves=curves, sample=sample,
        min_bid=min(c.min_bid for c in chunks),
        min_ask=min(c.min_ask for c in chunks),
        min_spread=min(c.min_spread for c in chunks),
    )


def objective_estimate(model, policy: pol.Policy, n_paths: int,
                       seed: "int | None" = None, *, stream: int = 0,
                       threads: int = 1):
    """Monte Carlo objective estimate: (mean, standard error, diagnostics).

    The mean splits as initial cash plus a policy-dependent part; both are
    reported (`core_mean` in the diagnostics is the latter).
    """
    r = rollout(model, policy, n_paths, seed=seed, stream=stream, threads=threads)
    mean = float(r.J.mean())
    stderr = float(r.J.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    diag = {
        "core_mean": float(r.core.mean()),
        "liquidation_mean": float(r.liquidation.mean()),
        "hedge_penalty_mean": float(r.sum_g.mean()),
        "activity_penalty_mean": float(r.sum_h.mean()),
        "fills_ask_mean": float(r.fills_a.mean()),
        "fills_bid_mean": float(r.fills_b.mean()),
        "inventory_T_abs_mean": float(np.abs(r.inventory_T).mean()),
        "hedge_T_mean": float(r.hedge_T.mean()),
        "traded_volume_mean": float(r.traded_volume.mean()),
        "time_avg_abs_inventory": float(r.curves["absI"].mean()),
        "min_bid": r.min_bid,
        "min_ask": r.min_ask,
        "min_spread": r.min_spread,
    }
    return mean, stderr, diag


# ---------------------------------------------------------------- training

def training_loss(model, policy: pol.Policy, n_paths: int, *,
                  seed: "int | None" = None, stream: int = 0,
                  threads: int = 1, gradient_mode: "str | None" = None):
    """Surrogate loss (negative objective estimate) and its policy gradient.

    Returns (loss, grad, chunk results). In "pathwise" mode the gradient is
    exactly the derivative of the reported loss under frozen draws, which is
    what finite-difference checks compare against; fill counts are constants
    there, so the estimator is blind to how quotes steer inventory.
    "straight_through" keeps the sampled counts in the forward values but
    substitutes the fill means in the backward pass, giving the quotes a
    low-variance (if biased) path into the inventory-dependent terms.
    "hybrid" instead adds a score (likelihood ratio) term for the fill
    counts, with baseline-centered weights treated as constants: unbiased,
    but noisier per batch.
    """
    model = _as_model(model)
    if seed is None:
        seed = model.cfg.run.seed
    if gradient_mode is None:
        gradient_mode = model.cfg.policy.gradient_mode
    chunks = _run_chunks(model, policy, n_paths, seed, stream, taped=True,
                         gradient_mode=gradient_mode, threads=threads,
                         want_sample=False)
    loss = 0.0
    grad = np.zeros(policy.arch.n_params)
    for c in chunks:
        w = (c.hi - c.lo) / n_paths
        loss += w * c.loss
        grad += w * c.grad
    return loss, grad, chunks


def train(model, *, policy: "pol.Policy | None" = None,
          epochs: "int | None" = None, batch_size: "int | None" = None,
          seed: "int | None" = None, threads: int = 1,
          gradient_mode: "str | None" = None,
          progress=None) -> TrainResult:
    """Stochastic gradient training of the quoting and hedging policy.

    Each epoch simulates a fresh batch (epoch index shifts the random
    streams), estimates the surrogate gradient, and takes one optimizer step.
    The learning curve records, per epoch, the realized objective mean and
    the two penalty means of the batch the gradient was computed on, before
    the update. A non-finite loss or gradient aborts with diagnostics.
    """
    model = _as_model(model)
    cfg = model.cfg
    if policy is None:
        policy = cfg.fresh_policy()
    if epochs is None:
        epochs = cfg.train.epochs
    if batch_size is None:
        batch_size = cfg.train.batch_size
    if seed is None:
        seed = cfg.run.seed
    if gradient_mode is None:
        gradient_mode = cfg.policy.gradient_mode
    optimizer = cfg.policy.optimizer
    adam = pol.AdamState(policy.arch.n_params) if optimizer == "adam" else None

    names = ("epoch", "return", "hedge_penalty", "activity_penalty", "loss",
             "grad_norm", "fills", "time_avg_abs_inventory")
    curve = {n: [] for n in names}

    for epoch in range(epochs):
        loss, grad, chunks = training_loss(
            model, policy, batch_size, seed=seed, stream=epoch,
            threads=threads, gradient_mode=gradient_mode)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise SimulationFault(
                f"non-finite training signal at epoch {epoch}: "
                f"loss={loss!r}, |grad|={float(np.abs(grad).max())!r}, "
                f"theta_max={float(np.abs(policy.theta).max())!r}")

        n_steps = cfg.grid.steps
        j_mean = g_mean = h_mean = fills = absi = 0.0
        for c in chunks:
            w = (c.hi - c.lo) / batch_size
            j_mean += w * float(c.J.mean())
            g_mean += w * float(c.sum_g.mean())
            h_mean += w * float(c.sum_h.mean())
            fills += w * float((c.fills_a + c.fills_b).mean())
            absi += w * float(c.curve_sums["absI"].sum()
                              / ((n_steps + 1) * (c.hi - c.lo)))
        row = (epoch, j_mean, g_mean, h_mean, loss,
               float(np.linalg.norm(grad)), fills, absi)
        for n, v in zip(names, row):
            curve[n].append(v)
        if progress is not None:
            progress(dict(zip(names, row)))

        if optimizer == "adam":
            theta = pol.adam_step(policy.theta, grad, adam, cfg.policy.lr,
                                  cfg.policy.beta1, cfg.policy.beta2,
                                  cfg.policy.eps)
        else:
            theta = pol.sgd_step(policy.theta, grad, cfg.policy.lr)
        policy = pol.Policy(policy.arch, policy.scales, theta)

    return TrainResult(
        policy=policy,
        curve={n: np.asarray(v) for n, v in curve.items()},
        adam=adam, gradient_mode=gradient_mode, optimizer=optimizer,
        epochs=epochs, batch_size=batch_size, seed=seed,
    )


# ------------------------------------------------------------------ export

def write_trajectory_csv(path, times: np.ndarray, columns: dict) -> None:
    """Write per-step series as CSV with the standard column set.

    Floats are rendered with repr (shortest round-trip), so identical inputs
    produce byte-identical files.
    """
    series = dict(columns)
    series["time"] = times
    n = len(times)
    lines = [",".join(CSV_COLUMNS)]
    for i in range(n):
        lines.append(",".join(repr(float(series[c][i])) for c in CSV_COLUMNS))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
