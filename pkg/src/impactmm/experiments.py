"""End-to-end experiment runs: train, evaluate, and emit result files.

Four scenarios ship with the package. Each run is a pure function of the
resolved configuration and seed: with a fixed thread count, re-running
reproduces every CSV and chart byte for byte. Artifacts land in
``out_dir/<name>``: the learning curve, mean trajectory tables, a few sample
paths, the four charts, a policy checkpoint, and a JSON summary keyed by the
configuration digest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import charts
from . import policy as pol
from . import simulator as sim
from . import valuation as val
from .config import Config, desk_scale, load_config
from .errors import ConfigError

EXPERIMENTS = ("baseline", "neg_inventory", "shifted_intensities",
               "low_liquidity")

# rollout streams kept clear of the training epochs and the verify suites
EVAL_STREAM = 100003
SAMPLE_STREAM = 100100

LEARNING_COLUMNS = ("epoch", "return", "hedge_penalty", "activity_penalty",
                    "loss", "grad_norm", "fills", "time_avg_abs_inventory")

MEAN_TABLES = {
    "avg_quotes.csv": ("time", "b_ref", "beta", "alpha"),
    "avg_inventories.csv": ("time", "I", "Q"),
    "avg_cash.csv": ("time", "X"),
    "avg_market.csv": ("time", "P", "S"),
}

CHART_SOURCES = {
    "learning": "learning_curve.csv",
    "quotes": "avg_quotes.csv",
    "inventories": "avg_inventories.csv",
    "pnl": "avg_cash.csv",
}


@dataclass
class ExperimentResult:
    name: str
    out_dir: Path
    config: Config
    digest: str
    policy: pol.Policy
    curve: dict
    evaluation: dict
    summary: dict
    files: dict


def shipped_config_path(name: str) -> Path:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r} (expected one of "
                          f"{', '.join(EXPERIMENTS)})")
    return Path(resources.files("impactmm") / "configs" / f"{name}.toml")


def resolve_config(name: str, *, config_path=None, seed: "int | None" = None,
                   paper_scale: bool = False) -> Config:
    """Load the scenario config and apply scale and seed overrides."""
    cfg = load_config(config_path or shipped_config_path(name))
    if not paper_scale:
        cfg = desk_scale(cfg)
    if seed is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=int(seed)))
    return cfg


# --------------------------------------------------------------- csv output

def _write_csv(path, header, columns: dict) -> None:
    arrays = {}
    for name in header:
        arr = np.asarray(columns[name])
        arrays[name] = arr
    n = len(arrays[header[0]])
    lines = [",".join(header)]
    for i in range(n):
        cells = []
        for name in header:
            v = arrays[name][i]
            if np.issubdtype(arrays[name].dtype, np.integer):
                cells.append(str(int(v)))
            else:
                cells.append(repr(float(v)))
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_learning_curve(path, curve: dict) -> None:
    """Write a training curve as CSV with the standard column set."""
    _write_csv(path, LEARNING_COLUMNS, curve)


def _curve_payload(curve: dict) -> dict:
    return {name: [float(v) for v in curve[name]] for name in LEARNING_COLUMNS}


# ----------------------------------------------------------------- training

def _train_or_load(model, checkpoint, out_dir: Path, threads: int,
                   progress) -> tuple:
    """Returns (policy, curve dict, source tag, checkpoint path)."""
    cfg = model.cfg
    ckpt = Path(checkpoint) if checkpoint else out_dir / "policy.npz"
    if checkpoint and ckpt.exists():
        policy, scaler, _, extra = pol.load_checkpoint(ckpt)
        want = cfg.digest()
        got = extra.get("config_digest")
        if got != want:
            raise ConfigError(
                f"checkpoint {ckpt} was trained under config {got}, "
                f"this run resolves to {want}")
        if scaler != model.scaler:
            raise ConfigError(f"checkpoint {ckpt} feature scaling does not "
                              "match the configuration")
        curve = {k: np.asarray(v) for k, v in extra["curve"].items()}
        curve["epoch"] = curve["epoch"].astype(int)
        return policy, curve, "checkpoint", ckpt

    tr = sim.train(model, threads=threads, progress=progress)
    extra = {
        "config_digest": cfg.digest(),
        "epochs": tr.epochs,
        "batch_size": tr.batch_size,
        "seed": tr.seed,
        "curve": _curve_payload(tr.curve),
    }
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    pol.save_checkpoint(ckpt, tr.policy, model.scaler, tr.adam, extra)
    return tr.policy, tr.curve, "trained", ckpt


# ------------------------------------------------------------------- runner

def run_experiment(name: str, *, out_dir, config_path=None,
                   seed: "int | None" = None, paper_scale: bool = False,
                   threads: int = 1, checkpoint=None, eval_paths: int = 10000,
                   n_samples: int = 3, progress=None) -> ExperimentResult:
    """Train (or load) the scenario policy, evaluate it, and write artifacts."""
    cfg = resolve_config(name, config_path=config_path, seed=seed,
                         paper_scale=paper_scale)
    model = sim.Model.build(cfg)
    run_dir = Path(out_dir) / name
    run_dir.mkdir(parents=True, exist_ok=True)
    files = {}

    policy, curve, source, ckpt = _train_or_load(
        model, checkpoint, run_dir, threads, progress)
    files["checkpoint"] = ckpt

    lc_path = run_dir / "learning_curve.csv"
    _write_csv(lc_path, LEARNING_COLUMNS, curve)
    files["learning_curve.csv"] = lc_path

    r = sim.rollout(model, policy, eval_paths, seed=cfg.run.seed,
                    stream=EVAL_STREAM, threads=threads)
    mean_cols = dict(r.curves)
    mean_cols["time"] = r.times
    for fname, header in MEAN_TABLES.items():
        path = run_dir / fname
        _write_csv(path, header, mean_cols)
        files[fname] = path

    for i in range(n_samples):
        one = sim.rollout(model, policy, 1, seed=cfg.run.seed,
                          stream=SAMPLE_STREAM + i, want_sample=True)
        path = run_dir / f"sample_path_{i}.csv"
        sim.write_trajectory_csv(path, one.times, one.sample)
        files[path.name] = path

    chart_inputs = {kind: files[src] for kind, src in CHART_SOURCES.items()}
    for kind, path in charts.emit_charts(chart_inputs, run_dir).items():
        files[path.name] = path

    sigma0 = val.effective_volatility(
        model.book, cfg.flow_sell.lam0, cfg.flow_buy.lam0,
        model.sell_marks, model.buy_marks, cfg.initial.P0)
    j_mean = float(r.J.mean())
    j_se = float(r.J.std(ddof=1) / np.sqrt(eval_paths)) if eval_paths > 1 else 0.0
    evaluation = {
        "paths": eval_paths,
        "J_mean": j_mean,
        "J_stderr": j_se,
        "hedge_penalty_mean": float(r.sum_g.mean()),
        "activity_penalty_mean": float(r.sum_h.mean()),
        "liquidation_mean": float(r.liquidation.mean()),
        "fills_ask_mean": float(r.fills_a.mean()),
        "fills_bid_mean": float(r.fills_b.mean()),
        "inventory_T_abs_mean": float(np.abs(r.inventory_T).mean()),
        "time_avg_abs_inventory": float(r.curves["absI"].mean()),
        "traded_volume_mean": float(r.traded_volume.mean()),
        "min_bid": r.min_bid,
        "min_ask": r.min_ask,
        "min_spread": r.min_spread,
    }
    summary = {
        "experiment": name,
        "config_digest": cfg.digest(),
        "seed": cfg.run.seed,
        "scale": "paper" if paper_scale else "desk",
        "steps": cfg.grid.steps,
        "sigma_eff": float(sigma0),
        "policy_source": source,
        "train_epochs": int(len(curve["epoch"])),
        "train_batch_size": cfg.train.batch_size,
        "evaluation": evaluation,
        "files": sorted(p.name for p in files.values()),
    }
    sm_path = run_dir / "summary.json"
    with open(sm_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["summary.json"] = sm_path

    return ExperimentResult(
        name=name, out_dir=run_dir, config=cfg, digest=cfg.digest(),
        policy=policy, curve=curve, evaluation=evaluation, summary=summary,
        files=files,
    )
