"""Experiment configuration: schema, TOML loading, validation, derived parts.

A config file is TOML with flat dotted keys (sections become prefixes); the
shipped files under `impactmm/configs/` state every key explicitly. Loading
never fails on the first bad value: all violated gates are collected and
reported together.

The Config object is the single source for building model components (book
shape, flows, penalties, policy) so the simulator, the property checks, and
the CLI cannot drift apart on derived constants.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import orderbook as ob
from . import valuation
from .dynamics import Impact
from .errors import ConfigError
from .flows import MarkLaw, QuoteResponse, SelfExcitingFlow
from .policy import Architecture, FeatureScaler, HeadScales, Policy
from .valuation import PenaltySpec

EXPERIMENTS = ("baseline", "neg_inventory", "shifted_intensities", "low_liquidity")


@dataclass(frozen=True)
class GridCfg:
    horizon_days: float = 25.0
    days_per_year: float = 252.0
    steps: int = 250


@dataclass(frozen=True)
class BookCfg:
    bid_density: float = 100.0
    bid_cutoff: float = 0.5
    ask_density: float = 100.0
    ask_cutoff: float = 0.5


@dataclass(frozen=True)
class ImpactCfg:
    eta: float = 0.3
    resilience: float = 15120.0
    spread_decay: float = 50400.0
    spread_floor: float = 0.02
    fee: float = 0.0


@dataclass(frozen=True)
class FlowCfg:
    mu: float = 7560.0
    theta: float = 1.0
    kappa: float = 0.0
    lam0: float = 7560.0


@dataclass(frozen=True)
class MarkCfg:
    kind: str = "beta"
    a: float = 2.0
    b: float = 5.0
    value: float = 1.0


@dataclass(frozen=True)
class OptionCfg:
    strike: float = 98.0


@dataclass(frozen=True)
class ClientCfg:
    lambda_bar: float = 50400.0
    k: float = 50.0
    mu: float = 0.0


@dataclass(frozen=True)
class PenaltyCfg:
    kappa_hedge: float = 4.0
    theta_flow: float = 0.05
    kappa_act: float = 0.1


@dataclass(frozen=True)
class InitialCfg:
    P0: float = 100.0
    D0: float = 0.0
    S0: float = 0.10
    I0: float = 0.0
    Q0: float = 0.0
    X0: float = 0.0


@dataclass(frozen=True)
class PolicyCfg:
    hidden: tuple = (128, 128)
    offset_scale: float = 0.06
    width_scale: float = 0.12
    optimizer: str = "adam"
    gradient_mode: str = "hybrid"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainCfg:
    batch_size: int = 10000
    epochs: int = 500


@dataclass(frozen=True)
class RunCfg:
    seed: int = 2026
    threads: int = 1


@dataclass(frozen=True)
class Config:
    grid: GridCfg = field(default_factory=GridCfg)
    book: BookCfg = field(default_factory=BookCfg)
    impact: ImpactCfg = field(default_factory=ImpactCfg)
    flow_sell: FlowCfg = field(default_factory=FlowCfg)
    flow_buy: FlowCfg = field(default_factory=FlowCfg)
    marks_sell: MarkCfg = field(default_factory=MarkCfg)
    marks_buy: MarkCfg = field(default_factory=MarkCfg)
    option: OptionCfg = field(default_factory=OptionCfg)
    client_bid: ClientCfg = field(default_factory=ClientCfg)
    client_ask: ClientCfg = field(default_factory=ClientCfg)
    penalty: PenaltyCfg = field(default_factory=PenaltyCfg)
    initial: InitialCfg = field(default_factory=InitialCfg)
    policy: PolicyCfg = field(default_factory=PolicyCfg)
    train: TrainCfg = field(default_factory=TrainCfg)
    run: RunCfg = field(default_factory=RunCfg)

    # ------------------------------------------------------ derived scalars

    @property
    def horizon(self) -> float:
        return self.grid.horizon_days / self.grid.days_per_year

    @property
    def dt(self) -> float:
        return self.horizon / self.grid.steps

    # ------------------------------------------------------- model builders

    def book_shape(self) -> ob.BookShape:
        return ob.BookShape(
            bid=ob.linear_side(self.book.bid_density, self.book.bid_cutoff),
            ask=ob.linear_side(self.book.ask_density, self.book.ask_cutoff),
        )

    def impact_params(self) -> Impact:
        c = self.impact
        return Impact(eta=c.eta, r=c.resilience, rho=c.spread_decay, floor=c.spread_floor)

    def sell_flow(self) -> SelfExcitingFlow:
        return SelfExcitingFlow(**asdict(self.flow_sell))

    def buy_flow(self) -> SelfExcitingFlow:
        return SelfExcitingFlow(**asdict(self.flow_buy))

    def sell_marks(self) -> MarkLaw:
        return MarkLaw(**asdict(self.marks_sell))

    def buy_marks(self) -> MarkLaw:
        return MarkLaw(**asdict(self.marks_buy))

    def bid_response(self) -> QuoteResponse:
        return QuoteResponse(**asdict(self.client_bid))

    def ask_response(self) -> QuoteResponse:
        return QuoteResponse(**asdict(self.client_ask))

    def penalty_spec(self) -> PenaltySpec:
        floor = valuation.activity_floor(self.penalty.theta_flow,
                                         self.bid_response(), self.ask_response())
        return PenaltySpec(hedge_coeff=self.penalty.kappa_hedge,
                           activity_coeff=self.penalty.kappa_act,
                           activity_floor=floor)

    def reference_volatility(self) -> float:
        """Effective volatility at the initial state (spot P0, initial rates)."""
        return valuation.effective_volatility(
            self.book_shape(), self.flow_sell.lam0, self.flow_buy.lam0,
            self.sell_marks(), self.buy_marks(), self.initial.P0)

    def feature_scaler(self) -> FeatureScaler:
        ini, imp = self.initial, self.impact
        sig0 = self.reference_volatility()
        b0 = float(valuation.call_price(ini.P0, self.option.strike, self.horizon, sig0))
        u_max = max(self.book.bid_cutoff, self.book.ask_cutoff)
        return FeatureScaler(
            horizon=self.horizon,
            p_anchor=self.option.strike,
            p_scale=max(ini.P0 * sig0 * math.sqrt(self.horizon), ini.S0),
            d_scale=max(0.5 * (1.0 - imp.eta) * u_max, 1e-6),
            s_floor=imp.spread_floor,
            s_scale=ini.S0,
            i_scale=1.5,
            q_scale=5.0,
            b_scale=max(b0, 0.1),
        )

    def head_scales(self) -> HeadScales:
        return HeadScales(offset=self.policy.offset_scale, width=self.policy.width_scale)

    def architecture(self) -> Architecture:
        return Architecture(n_features=8, hidden=tuple(self.policy.hidden))

    def fresh_policy(self) -> Policy:
        return Policy.fresh(self.architecture(), self.head_scales(), self.run.seed)

    # -------------------------------------------------------- serialization

    def flat_dict(self) -> dict:
        out = {}
        for section, sub in asdict(self).items():
            key = section.replace("_", ".", 1) if section.startswith(("flow_", "marks_", "client_")) else section
            for name, value in sub.items():
                out[f"{key}.{name}"] = list(value) if isinstance(value, tuple) else value
        return out

    def digest(self) -> str:
        blob = json.dumps(self.flat_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def desk_scale(cfg: Config) -> Config:
    """The fast-training variant: fewer steps, smaller batches, fewer epochs."""
    return replace(cfg,
                   grid=replace(cfg.grid, steps=50),
                   train=replace(cfg.train, batch_size=512, epochs=50))


# ----------------------------------------------------------------- loading

_SECTIONS = {
    "grid": ("grid", GridCfg), "book": ("book", BookCfg),
    "impact": ("impact", ImpactCfg),
    "flow.sell": ("flow_sell", FlowCfg), "flow.buy": ("flow_buy", FlowCfg),
    "marks.sell": ("marks_sell", MarkCfg), "marks.buy": ("marks_buy", MarkCfg),
    "option": ("option", OptionCfg),
    "client.bid": ("client_bid", ClientCfg), "client.ask": ("client_ask", ClientCfg),
    "penalty": ("penalty", PenaltyCfg), "initial": ("initial", InitialCfg),
    "policy": ("policy", PolicyCfg), "train": ("train", TrainCfg), "run": ("run", RunCfg),
}


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def config_from_mapping(flat: dict) -> Config:
    """Build and validate a Config from flat dotted keys over the defaults."""
    problems = []
    kwargs = {}
    claimed = set()
    for dotted, (attr, cls) in _SECTIONS.items():
        section_kwargs = {}
        for name in cls.__dataclass_fields__:
            key = f"{dotted}.{name}"
            if key in flat:
                claimed.add(key)
                value = flat[key]
                section_kwargs[name] = tuple(value) if isinstance(value, list) else value
        try:
            kwargs[attr] = cls(**section_kwargs)
        except (TypeError, ValueError) as exc:
            problems.append(f"{dotted}: {exc}")
    unknown = sorted(set(flat) - claimed)
    problems.extend(f"unknown key {key!r}" for key in unknown)
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    cfg = Config(**kwargs)
    gates = validation_gates(cfg)
    if gates:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(gates))
    return cfg


def validation_gates(cfg: Config) -> list:
    """Every violated constraint, named; an empty list means the config is sound."""
    bad = []

    def gate(ok: bool, message: str):
        if not ok:
            bad.append(message)

    g = cfg.grid
    gate(g.horizon_days > 0, "grid.horizon_days must be positive")
    gate(g.days_per_year > 0, "grid.days_per_year must be positive")
    gate(g.steps >= 1, "grid.steps must be at least 1")

    b = cfg.book
    gate(b.bid_density > 0 and b.ask_density > 0, "book densities must be positive")
    gate(b.bid_cutoff > 0 and b.ask_cutoff > 0, "book cutoffs must be positive")

    im = cfg.impact
    gate(0.0 <= im.eta <= 1.0, "impact.eta must lie in [0, 1]")
    gate(im.resilience >= 0, "impact.resilience must be nonnegative")
    gate(im.spread_decay >= 0, "impact.spread_decay must be nonnegative")
    gate(im.spread_floor > 0, "impact.spread_floor must be positive")
    gate(im.fee >= 0, "impact.fee must be nonnegative")

    for label, fl in (("flow.sell", cfg.flow_sell), ("flow.buy", cfg.flow_buy)):
        gate(fl.mu >= 0 and fl.lam0 >= 0, f"{label} levels must be nonnegative")
        gate(fl.kappa >= 0, f"{label}.kappa must be nonnegative")
        gate(fl.theta >= 0, f"{label}.theta must be nonnegative")
        gate(fl.kappa == 0 or fl.kappa < fl.theta,
             f"{label} must be subcritical (kappa < theta)")
    for label, mk in (("marks.sell", cfg.marks_sell), ("marks.buy", cfg.marks_buy)):
        gate(mk.kind in ("beta", "constant"), f"{label}.kind must be beta or constant")
        if mk.kind == "beta":
            gate(mk.a > 0 and mk.b > 0, f"{label} beta parameters must be positive")
        if mk.kind == "constant":
            gate(0.0 <= mk.value <= 1.0, f"{label}.value must lie in [0, 1]")

    gate(cfg.option.strike > 0, "option.strike must be positive")

    for label, cl in (("client.bid", cfg.client_bid), ("client.ask", cfg.client_ask)):
        gate(cl.lambda_bar >= 0, f"{label}.lambda_bar must be nonnegative")
        gate(cl.k > 0, f"{label}.k must be positive")

    pe = cfg.penalty
    gate(pe.kappa_hedge >= 0, "penalty.kappa_hedge must be nonnegative")
    gate(0.0 < pe.theta_flow < 1.0, "penalty.theta_flow must lie in (0, 1)")
    gate(pe.kappa_act >= 0, "penalty.kappa_act must be nonnegative")

    ini = cfg.initial
    bid0 = ini.P0 - 0.5 * ini.S0
    gate(ini.P0 > 0, "initial.P0 must be positive")
    gate(ini.S0 >= im.spread_floor, "initial.S0 must be at least the spread floor")
    gate(bid0 >= 0, "initial bid P0 - S0/2 must be nonnegative")
    gate(bid0 >= ini.D0, "initial bid must dominate the transient displacement D0")

    po = cfg.policy
    gate(all(h >= 1 for h in po.hidden), "policy.hidden sizes must be positive")
    gate(po.offset_scale > 0 and po.width_scale > 0, "policy scales must be positive")
    gate(po.optimizer in ("adam", "sgd"), "policy.optimizer must be adam or sgd")
    gate(po.gradient_mode in ("pathwise", "straight_through", "hybrid"),
         "policy.gradient_mode must be pathwise, straight_through, or hybrid")
    gate(po.lr >= 0, "policy.lr must be nonnegative")
    gate(0.0 <= po.beta1 < 1.0 and 0.0 <= po.beta2 < 1.0,
         "policy.beta1/beta2 must lie in [0, 1)")
    gate(po.eps > 0, "policy.eps must be positive")

    tr = cfg.train
    gate(tr.batch_size >= 1, "train.batch_size must be at least 1")
    gate(tr.epochs >= 0, "train.epochs must be nonnegative")

    ru = cfg.run
    gate(ru.seed >= 0, "run.seed must be nonnegative")
    gate(ru.threads >= 1, "run.threads must be at least 1")
    return bad


def load_config(path) -> Config:
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_mapping(_flatten(tree))


def builtin_config(name: str) -> Config:
    """One of the shipped experiment configs, by name."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    text = resources.files("impactmm").joinpath(f"configs/{name}.toml").read_text()
    return config_from_mapping(_flatten(tomllib.loads(text)))
