"""Command line entry point: ``tsa-lab {train,verify,bias,sweep,boundary}``.

Without ``--data`` every command runs on the default rotated two-moons task.
"""
import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import dataset as ds_mod
from . import network as nn
from . import oracle
from . import runner
from .errors import ConfigError, TSAError


def _add_train_flags(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--data", help="CSV with domain,label,x1,...,xd rows")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--lambda0", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--iters", dest="total_iters", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--hidden", dest="hidden_widths",
                   help="comma-separated extractor widths, e.g. 32,32")
    p.add_argument("--seed", type=int)
    p.add_argument("--estimator", choices=["memory", "iterative"])
    p.add_argument("--rho", type=float)
    p.add_argument("--refresh-k", dest="stats_refresh_k", type=int)
    p.add_argument("--eval-interval", dest="eval_interval", type=int)


CONFIG_KEYS = ["lambda0", "beta", "total_iters", "batch_size", "learning_rate",
               "momentum", "hidden_widths", "seed", "estimator", "rho",
               "stats_refresh_k", "eval_interval"]


def build_config(args):
    values = runner.read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return runner.TrainConfig.from_mapping(values).validate()


def load_task(args):
    if not args.data:
        return ds_mod.two_moons_task()
    source, target = ds_mod.load_csv(args.data)
    if source is None or target is None:
        raise ConfigError(f"{args.data}: need both source and target rows")
    return source, target


def cmd_train(args):
    config = build_config(args)
    source, target = load_task(args)
    out = runner.ensure_dir(args.out)
    result = runner.train(source, target, config)
    runner.write_metrics_csv(result.metrics, os.path.join(out, "metrics.csv"))
    nn.save_checkpoint(result.params, os.path.join(out, "model.ckpt"))
    last = result.metrics[-1]
    print(f"iter {last.iter}: loss {last.loss_total:.4f} "
          f"src_acc {last.src_acc:.4f} tgt_acc {last.tgt_acc:.4f}")
    if source.dim == 2:
        runner.dump_boundary(result.params, runner.padded_bounds(source, target),
                             args.resolution, os.path.join(out, "boundary.csv"))


def cmd_boundary(args):
    out = runner.ensure_dir(args.out)
    if args.model:
        params = nn.load_checkpoint(args.model)
    else:
        source, target = load_task(args)
        params = runner.train(source, target, build_config(args)).params
    if args.bounds:
        bounds = tuple(float(v) for v in args.bounds.split(","))
    else:
        bounds = runner.padded_bounds(*load_task(args))
    runner.dump_boundary(params, bounds, args.resolution,
                         os.path.join(out, "boundary.csv"))


def cmd_bias(args):
    config = build_config(args)
    source, target = load_task(args)
    out = runner.ensure_dir(args.out)
    result = runner.bias_experiment(source, target, config, os.path.join(out, "bias.csv"))
    rows = np.array(result.bias, dtype=float)
    post = rows[rows[:, 0] > 3]
    if len(post):
        print(f"memory <= iterative: mu {np.mean(post[:, 1] <= post[:, 3]):.2f}, "
              f"sigma {np.mean(post[:, 2] <= post[:, 4]):.2f} of epochs after 3")


def cmd_sweep(args):
    config = build_config(args)
    source, target = load_task(args)
    out = runner.ensure_dir(args.out)
    rhos = [float(r) for r in args.rhos.split(",")]
    seeds = range(args.seeds) if args.seeds else None
    rows = runner.rho_sweep(source, target, config, rhos, seeds,
                            os.path.join(out, "sweep.csv"))
    for row in rows:
        print(f"rho {row[0]:.2f}: mean target accuracy {row[1]:.4f}")


def cmd_verify(args):
    out = runner.ensure_dir(args.out)
    rows = oracle.run_bound_suite(args.instances, args.draws, args.seed)
    oracle.write_verify_csv(rows, os.path.join(out, "verify.csv"))
    bad = [r for r in rows if not r["holds"]]
    rng = np.random.default_rng(args.seed)
    mgf = max(oracle.mgf_check(a, mu, s, args.mgf_draws, rng)
              for a in (-1.0, -0.5, 0.5, 1.0) for mu in (-1.0, 0.0, 1.0)
              for s in (0.5, 1.0, 2.0))
    print(f"bound: {len(rows) - len(bad)}/{len(rows)} instances hold "
          f"(M={args.draws})")
    print(f"mgf: max relative error {mgf:.2e} (M={args.mgf_draws})")
    if bad:
        raise TSAError(f"bound violated on {len(bad)} instance(s)")


def make_parser():
    parser = argparse.ArgumentParser(prog="tsa-lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a two-domain task")
    _add_train_flags(p)
    p.add_argument("--resolution", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="Monte-Carlo bound and MGF checks")
    p.add_argument("--out", default=".")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--mgf-draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bias", help="memory vs iterative estimation bias")
    _add_train_flags(p)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("sweep", help="target-fraction sweep")
    _add_train_flags(p)
    p.add_argument("--rhos", default="0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--seeds", type=int, default=0,
                   help="number of seeds 0..n-1 (default: --seed only)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("boundary", help="dump a decision-boundary grid")
    _add_train_flags(p)
    p.add_argument("--model", help="checkpoint to load instead of training")
    p.add_argument("--bounds", help="xmin,xmax,ymin,ymax")
    p.add_argument("--resolution", type=int, default=100)
    p.set_defaults(func=cmd_boundary)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        args.func(args)
    except (TSAError, OSError, ValueError) as exc:
        print(f"tsa-lab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
