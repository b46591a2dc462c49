"""Feed-forward quoting and hedging policy.

A small MLP (ReLU hidden layers) maps normalized market/agent features to
three raw outputs, decoded into an action: an option bid quoted at an offset
below the reference price, an ask at the bid plus a positive width, and an
inventory-normalized hedge ratio in [-1, 1]. Parameters live in one flat
vector so optimizer steps and checkpoints stay trivial; per-layer views are
created on demand, as plain arrays for rollout and as tape leaves when the
simulator differentiates through the policy.

Weights are He-initialized for the hidden stack and zero-initialized for the
output layer: the starting policy quotes fixed symmetric offsets (softplus(0)
times each head scale) and does not hedge, a penalty-light neutral start.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng
from .errors import ConfigError, SimulationFault

FEATURE_NAMES = ("tau_frac", "moneyness", "transient", "spread_ex",
                 "inv_options", "inv_hedge", "ref_price", "ref_delta")


@dataclass(frozen=True)
class FeatureScaler:
    """Fixed normalization constants for the 8 policy inputs.

    Chosen once from the configuration so feature magnitudes are O(1) at the
    initial state; stored with checkpoints because a policy is only meaningful
    together with the normalization it was trained under.
    """
    horizon: float       # T, for the time feature
    p_anchor: float      # strike, moneyness reference
    p_scale: float       # typical terminal mid dispersion
    d_scale: float       # typical transient-impact magnitude
    s_floor: float       # minimal spread
    s_scale: float       # initial spread
    i_scale: float       # option-inventory unit
    q_scale: float       # hedge-inventory unit
    b_scale: float       # initial reference price

    def __post_init__(self):
        for name in ("horizon", "p_scale", "d_scale", "s_scale", "i_scale",
                     "q_scale", "b_scale"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"feature scale {name} must be positive")

    def features(self, t: float, P, D, S, I, Q, b_ref, delta):
        """Stack the normalized inputs into an (M, 8) matrix (Var-aware)."""
        pv = np.atleast_1d(np.asarray(ad.value_of(P), dtype=float))
        tau = np.full(pv.shape[0], (self.horizon - t) / self.horizon)
        cols = [
            tau,
            (P - self.p_anchor) / self.p_scale,
            D / self.d_scale,
            (S - self.s_floor) / self.s_scale,
            I / self.i_scale,
            Q / self.q_scale,
            b_ref / self.b_scale,
            delta,
        ]
        return ad.stack_cols(cols)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class HeadScales:
    """Decoding scales for the raw network outputs."""
    offset: float   # bid offset below the reference price, per unit softplus
    width: float    # ask-over-bid width, per unit softplus

    def __post_init__(self):
        if self.offset <= 0.0 or self.width <= 0.0:
            raise ConfigError("head scales must be positive")


@dataclass(frozen=True)
class Architecture:
    n_features: int
    hidden: tuple

    def __post_init__(self):
        if self.n_features < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError("architecture sizes must be positive")

    @property
    def layer_dims(self) -> list:
        """[(fan_in, fan_out), ...] for hidden layers plus the 3-unit output."""
        widths = (self.n_features,) + tuple(self.hidden) + (3,)
        return list(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


def init_theta(arch: Architecture, seed: int) -> np.ndarray:
    """He-initialized hidden stack, zero output layer, flat parameter vector."""
    gen = rng.generator(seed, step=0, channel=rng.POLICY_INIT)
    parts = []
    dims = arch.layer_dims
    for li, (fan_in, fan_out) in enumerate(dims):
        if li == len(dims) - 1:
            w = np.zeros(fan_in * fan_out)
        else:
            w = gen.standard_normal(fan_in * fan_out) * np.sqrt(2.0 / fan_in)
        parts.append(w)
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def _layer_slices(arch: Architecture) -> list:
    out, pos = [], 0
    for fan_in, fan_out in arch.layer_dims:
        w = slice(pos, pos + fan_in * fan_out)
        b = slice(w.stop, w.stop + fan_out)
        out.append((w, b, (fan_in, fan_out)))
        pos = b.stop
    return out


class Policy:
    """Flat parameter vector + decoding scales; forward in plain or taped mode."""

    def __init__(self, arch: Architecture, scales: HeadScales, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (arch.n_params,):
            raise ConfigError(f"theta has {theta.shape}, architecture needs ({arch.n_params},)")
        if not np.all(np.isfinite(theta)):
            raise ConfigError("policy parameters must be finite")
        self.arch = arch
        self.scales = scales
        self.theta = theta

    @classmethod
    def fresh(cls, arch: Architecture, scales: HeadScales, seed: int) -> "Policy":
        return cls(arch, scales, init_theta(arch, seed))

    def layers(self) -> list:
        """Plain (W, b) views into theta for rollout-mode forward passes."""
        return [(self.theta[w].reshape(shape), self.theta[b])
                for w, b, shape in _layer_slices(self.arch)]

    def layer_leaves(self, tape: ad.Tape) -> tuple:
        """Tape leaves [(W, b), ...] plus the flat list used to gather gradients."""
        layers, leaves = [], []
        for w, b, shape in _layer_slices(self.arch):
            wv = tape.var(self.theta[w].reshape(shape))
            bv = tape.var(self.theta[b])
            layers.append((wv, bv))
            leaves.extend((wv, bv))
        return layers, leaves

    def act(self, features, b_ref):
        """(beta, alpha, gamma) without recording; features is (M, n_features)."""
        return decode(forward(self.layers(), features), b_ref, self.scales)

    def gather_grad(self, leaves) -> np.ndarray:
        """Flatten accumulated leaf gradients into theta order (zeros if unused)."""
        parts = []
        for leaf in leaves:
            g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
            parts.append(np.asarray(g, dtype=float).ravel())
        return np.concatenate(parts)


def forward(layers, features):
    """Raw 3-column network output for (M, F) features (Var-aware)."""
    fv = np.asarray(ad.value_of(features), dtype=float)
    if not np.all(np.isfinite(fv)):
        raise SimulationFault("non-finite policy features")
    h = features
    for wi, (w, b) in enumerate(layers):
        h = ad.matmul(h, w) + b
        if wi < len(layers) - 1:
            h = ad.relu(h)
    return h


def decode(raw, b_ref, scales: HeadScales):
    """Map raw outputs to a feasible action: 0 <= beta <= alpha, |gamma| <= 1."""
    offset = ad.softplus(ad.col(raw, 0)) * scales.offset
    width = ad.softplus(ad.col(raw, 1)) * scales.width
    beta = ad.relu(b_ref - offset)
    alpha = beta + width
    gamma = ad.tanh(ad.col(raw, 2))
    return beta, alpha, gamma


# ------------------------------------------------------------- optimizers

class AdamState:
    """First/second moment accumulators for the Adam update."""

    def __init__(self, n_params: int):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> np.ndarray:
    """One descent step on the given gradient; updates state in place."""
    if not np.all(np.isfinite(grad)):
        raise SimulationFault("non-finite gradient")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)


def sgd_step(theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    if not np.all(np.isfinite(grad)):
        raise SimulationFault("non-finite gradient")
    return theta - lr * grad


# ------------------------------------------------------------ checkpoints

def save_checkpoint(path, policy: Policy, scaler: FeatureScaler,
                    adam: "AdamState | None" = None, extra: "dict | None" = None):
    meta = {
        "n_features": policy.arch.n_features,
        "hidden": list(policy.arch.hidden),
        "offset_scale": policy.scales.offset,
        "width_scale": policy.scales.width,
        "scaler": scaler.to_dict(),
        "extra": extra or {},
    }
    arrays = {"theta": policy.theta, "meta": np.asarray(json.dumps(meta, sort_keys=True))}
    if adam is not None:
        arrays["adam_m"] = adam.m
        arrays["adam_v"] = adam.v
        arrays["adam_t"] = np.asarray([adam.t])
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (policy, scaler, adam or None, extra-meta dict)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        arch = Architecture(int(meta["n_features"]), tuple(meta["hidden"]))
        scales = HeadScales(float(meta["offset_scale"]), float(meta["width_scale"]))
        policy = Policy(arch, scales, data["theta"])
        scaler = FeatureScaler(**meta["scaler"])
        adam = None
        if "adam_m" in data:
            adam = AdamState(arch.n_params)
            adam.m = np.asarray(data["adam_m"], dtype=float)
            adam.v = np.asarray(data["adam_v"], dtype=float)
            adam.t = int(data["adam_t"][0])
        return policy, scaler, adam, meta["extra"]
