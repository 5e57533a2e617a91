"""Command-line entry points.

Subcommands: train, eval, schedule, plot, bench.  Exit codes: 0 success,
1 user error (bad flags, config, or files), 2 internal error.
"""

import argparse
import csv
import json
import os
import sys
import traceback

import numpy as np

from .config import (
    ConfigError,
    VALID_MODES,
    apply_overrides,
    default_config,
    load_config_file,
    write_manifest,
)


class UserError(RuntimeError):
    pass


def _build_parser():
    p = argparse.ArgumentParser(prog="sizerl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run training")
    t.add_argument("--config", help="config file (key = value lines)")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    t.add_argument("--mode", help=f"one of {', '.join(VALID_MODES)}")
    t.add_argument("--seed", type=int)
    t.add_argument("--t-max", type=int, dest="t_max")
    t.add_argument("--out", help="output directory")
    t.add_argument("--adapter", help="external simulator endpoint (host:port or exec:CMD)")
    t.add_argument("--fixed-schedule", action="store_true",
                   help="use the fixed-parameter baseline schedule")
    t.add_argument("--stop-on-success", action="store_true",
                   help="stop once evaluation passes on every circuit")
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="optional report path (csv)")

    s = sub.add_parser("schedule", help="dump the schedule as CSV")
    s.add_argument("--config", help="config file")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", help="output CSV path (default stdout)")
    s.add_argument("--fixed-schedule", action="store_true")

    g = sub.add_parser("plot", help="plot learning curves from metrics CSVs")
    g.add_argument("csvs", nargs="+")
    g.add_argument("--out", default="plots")

    b = sub.add_parser("bench", help="benchmark compiled vs fallback scan kernels")
    b.add_argument("--l", type=int, default=30)
    b.add_argument("--batch", type=int, default=256)
    b.add_argument("--d-inner", type=int, default=64)
    b.add_argument("--d-state", type=int, default=8)
    b.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    return p


def _resolve_config(args):
    cfg = load_config_file(args.config) if args.config else default_config()
    apply_overrides(cfg, args.set)
    if getattr(args, "mode", None):
        apply_overrides(cfg, [f"mode={args.mode}"])
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "t_max", None) is not None:
        cfg["train.t_max"] = args.t_max
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "adapter", None):
        cfg["adapter"] = args.adapter
    if getattr(args, "fixed_schedule", False):
        cfg["mode"] = "mbrl_fixed"
    if getattr(args, "stop_on_success", False):
        cfg["train.stop_on_success"] = True
    return cfg


def cmd_train(args):
    from .trainer import Trainer

    cfg = _resolve_config(args)
    if cfg["mode"] not in VALID_MODES:
        raise UserError(f"unknown mode {cfg['mode']!r}; valid modes: {', '.join(VALID_MODES)}")
    os.makedirs(cfg["out"], exist_ok=True)
    write_manifest(cfg["out"], cfg)
    trainer = Trainer(cfg)

    def progress(t, report, elapsed):
        if not args.quiet:
            parts = " ".join(
                f"{cid}:len={r['mean_ep_len']:.1f},sr={r['success_rate']:.1f}"
                for cid, r in report.items()
            )
            print(f"[t={t:>6d}  {elapsed:7.0f}s]  {parts}", flush=True)

    summary = trainer.run(progress=progress)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_eval(args):
    from .checkpoint import CheckpointError
    from .circuits import build_surrogates, registry, sample_target
    from .env import SizingEnv
    from .trainer import load_agent_from_checkpoint

    if not os.path.exists(args.checkpoint):
        raise UserError(f"checkpoint not found: {args.checkpoint}")
    try:
        agent, cfg, extra = load_agent_from_checkpoint(args.checkpoint)
    except CheckpointError as e:
        raise UserError(str(e)) from e
    circuits = registry()
    sims = build_surrogates(
        circuits, seed=cfg["surrogate.seed"], roughness=cfg["surrogate.roughness"],
        master_slack=cfg["surrogate.master_slack"],
    )
    rng = np.random.default_rng(args.seed)
    rows = []
    for ci, c in enumerate(circuits):
        env = SizingEnv(circuits, sims, np.random.default_rng(0),
                        episode_limit=cfg["train.episode_limit"])
        succ, lengths, rewards = 0, [], []
        for _ in range(args.episodes):
            obs = env.reset(forced_circuit=ci, forced_target=sample_target(c, rng),
                            forced_p=rng.uniform(0, 1, c.n_params))
            done = False
            total, steps = 0.0, 0
            while not done:
                obs, rew, done, info = env.step(agent.act(obs, deterministic=True))
                total += rew
                steps += 1
            succ += bool(info["success"])
            lengths.append(steps)
            rewards.append(total)
        rows.append((c.cid, succ, args.episodes, float(np.mean(lengths)), float(np.mean(rewards))))
    print(f"{'circuit':8s} {'success':>9s} {'mean len':>9s} {'mean reward':>12s}")
    for cid, s, n, ml, mr in rows:
        print(f"{cid:8s} {s:>6d}/{n:<2d} {ml:9.2f} {mr:12.3f}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["circuit", "successes", "episodes", "mean_ep_len", "mean_ep_reward"])
            w.writerows(rows)
    return 0


def cmd_schedule(args):
    from .schedule import Schedule, ScheduleConfig, fixed_mode

    cfg = _resolve_config(args)
    if getattr(args, "fixed_schedule", False) or cfg["mode"] == "mbrl_fixed":
        sched = fixed_mode()
        scale = cfg["schedule.scale"]
    else:
        sched = Schedule(ScheduleConfig(
            alpha_i=cfg["schedule.alpha_i"], alpha_f=cfg["schedule.alpha_f"],
            ta_i=cfg["schedule.ta_i"], ta_f=cfg["schedule.ta_f"],
            r_i=cfg["schedule.r_i"], r_f=cfg["schedule.r_f"],
            scale=cfg["schedule.scale"],
        ))
        scale = cfg["schedule.scale"]
    lines = [["t", "alpha", "t_a", "r"]]
    for t in range(0, int(2 * scale) + 1, 100):
        lines.append([t, f"{sched.alpha(t):.10g}", sched.t_a(t), sched.r(t)])
    if args.out:
        with open(args.out, "w", newline="") as f:
            csv.writer(f).writerows(lines)
    else:
        for row in lines:
            print(",".join(str(v) for v in row))
    return 0


def cmd_plot(args):
    from .plotting import PlotError, plot_learning_curves

    for p in args.csvs:
        if not os.path.exists(p):
            raise UserError(f"metrics file not found: {p}")
    try:
        written = plot_learning_curves(args.csvs, args.out)
    except PlotError as e:
        raise UserError(str(e)) from e
    for w in written:
        print(w)
    return 0


def cmd_bench(args):
    from .bench import format_bench, run_bench

    rows = run_bench(l=args.l, b=args.batch, d=args.d_inner, n=args.d_state,
                     dtype=args.dtype)
    print(format_bench(rows, (args.l, args.batch, args.d_inner, args.d_state)))
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "schedule": cmd_schedule,
    "plot": cmd_plot,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return COMMANDS[args.command](args)
    except (UserError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
