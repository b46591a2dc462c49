"""Command-line entry point.

Subcommands:
  simulate    batch rollout under a fresh or checkpointed policy
  train       fit the quoting and hedging policy, save a checkpoint
  verify      run the no-free-lunch and moment property suites
  experiment  one of the four shipped scenarios, with full artifacts

All subcommands share --config/--seed/--out-dir/--paper-scale/--threads/
--checkpoint. Exit codes: 0 success, 1 usage or config problem, 2 property
violation, 3 runtime fault.
"""
import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as exp
from . import policy as pol
from . import simulator as sim
from . import verify as ver
from .errors import ConfigError, PropertyViolation, SimulationFault


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impactmm",
        description="Option market making with hedging impact: simulation, "
                    "training, and property verification.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="TOML config file (default: shipped baseline)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config's seed")
    common.add_argument("--out-dir", type=Path, default=Path("out"),
                        help="directory for emitted files (default: ./out)")
    common.add_argument("--paper-scale", action="store_true",
                        help="keep the config's full grid and batch sizes "
                             "instead of the fast desk-scale override")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for batch simulation")
    common.add_argument("--checkpoint", type=Path, default=None,
                        help="policy checkpoint (.npz) to load instead of "
                             "a fresh or newly trained one")

    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="batch rollout; writes stats and a sample path")
    p_sim.add_argument("--paths", type=int, default=1000,
                       help="number of Monte Carlo paths (default 1000)")

    sub.add_parser("train", parents=[common],
                   help="train the policy; writes checkpoint and learning curve")

    p_ver = sub.add_parser("verify", parents=[common],
                           help="run property checks; nonzero exit on failure")
    p_ver.add_argument("--suite", choices=ver.SUITES, default="all")
    p_ver.add_argument("--trials", type=int, default=None,
                       help="rescale pathwise-inequality trial counts")
    p_ver.add_argument("--paths", type=int, default=None,
                       help="sample size for the statistical checks")

    p_exp = sub.add_parser("experiment", parents=[common],
                           help="run a shipped scenario end to end")
    p_exp.add_argument("name", choices=exp.EXPERIMENTS)
    return parser


def _resolve(args):
    """Shared config resolution: file or shipped baseline, scale, seed."""
    return exp.resolve_config("baseline", config_path=args.config,
                              seed=args.seed, paper_scale=args.paper_scale)


def _load_policy(model: sim.Model, checkpoint):
    """Fresh zero-head policy, or the checkpointed one with its scaler."""
    if checkpoint is None:
        return model.cfg.fresh_policy(), model
    policy, scaler, _, _ = pol.load_checkpoint(checkpoint)
    return policy, dataclasses.replace(model, scaler=scaler)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    model = sim.Model.build(cfg)
    policy, model = _load_policy(model, args.checkpoint)
    r = sim.rollout(model, policy, args.paths, seed=cfg.run.seed,
                    threads=args.threads, want_sample=True)
    mean = float(r.J.mean())
    stderr = float(r.J.std(ddof=1) / np.sqrt(args.paths)) if args.paths > 1 else 0.0

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim.write_trajectory_csv(out / "sample_path.csv", r.times, r.sample)
    stats = {
        "config_digest": cfg.digest(),
        "paths": int(args.paths),
        "seed": int(cfg.run.seed),
        "J_mean": mean,
        "J_stderr": stderr,
        "hedge_penalty_mean": float(r.sum_g.mean()),
        "activity_penalty_mean": float(r.sum_h.mean()),
        "fills_mean": float((r.fills_a + r.fills_b).mean()),
        "inventory_T_abs_mean": float(np.abs(r.inventory_T).mean()),
        "min_bid": r.min_bid,
        "min_ask": r.min_ask,
        "min_spread": r.min_spread,
        "policy_source": "checkpoint" if args.checkpoint else "fresh",
    }
    _write_json(out / "simulate_stats.json", stats)
    print(f"simulate: {args.paths} paths, J = {mean:.4f} +- {stderr:.4f}")
    print(f"wrote {out / 'sample_path.csv'} and {out / 'simulate_stats.json'}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args)
    model = sim.Model.build(cfg)
    start = time.time()

    def progress(row):
        print(f"epoch {int(row['epoch']) + 1:>4}/{cfg.train.epochs}  "
              f"return {row['return']:>12.2f}  "
              f"hedge {row['hedge_penalty']:>10.2f}  "
              f"activity {row['activity_penalty']:>10.2f}", flush=True)

    tr = sim.train(model, threads=args.threads, progress=progress)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "policy.npz"
    pol.save_checkpoint(ckpt, tr.policy, model.scaler, adam=tr.adam,
                        extra={"config_digest": cfg.digest(),
                               "epochs": tr.epochs,
                               "batch_size": tr.batch_size,
                               "seed": tr.seed})
    curve_path = out / "learning_curve.csv"
    exp.write_learning_curve(curve_path, tr.curve)
    print(f"trained {tr.epochs} epochs in {time.time() - start:.1f}s; "
          f"wrote {ckpt} and {curve_path}")
    return 0


def cmd_verify(args) -> int:
    cfg = _resolve(args)
    reports = ver.run_suite(cfg, args.suite, trials=args.trials,
                            paths=args.paths, seed=args.seed,
                            threads=args.threads)
    records = [r.to_record() for r in reports]
    for r in reports:
        print(r.line())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "verify_report.json", {
        "suite": args.suite, "config_digest": cfg.digest(),
        "reports": records,
    })
    failed = [r.name for r in reports if not r.passed]
    if failed:
        raise PropertyViolation(f"property checks failed: {', '.join(failed)}")
    print(f"all {len(reports)} checks passed ({args.suite} suite)")
    return 0


def cmd_experiment(args) -> int:
    def progress(row):
        print(f"epoch {int(row['epoch']) + 1:>4}  "
              f"return {row['return']:>12.2f}", flush=True)

    result = exp.run_experiment(
        args.name, out_dir=args.out_dir, config_path=args.config,
        seed=args.seed, paper_scale=args.paper_scale, threads=args.threads,
        checkpoint=args.checkpoint, progress=progress)
    s = result.summary
    print(f"experiment {args.name}: J = {s['evaluation']['J_mean']:.4f} "
          f"+- {s['evaluation']['J_stderr']:.4f}, "
          f"sigma_eff = {s['sigma_eff']:.4f}")
    print(f"artifacts in {result.out_dir}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses status 2 for usage errors; reserve 2 for property
        # violations and report usage problems as config errors instead
        if e.code not in (0, None):
            return 1
        return 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except PropertyViolation as e:
        print(f"property violation: {e}", file=sys.stderr)
        return 2
    except SimulationFault as e:
        print(f"simulation fault: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
