"""Command-line entry point: ``tprop {train,sweep,diagnose,timing,export}``.

Configuration flags mirror the config-file keys (``--lr-forward``,
``--batch-size``, ...).  Values are layered: built-in defaults, then the
``--config`` file, then flags.  Failures print a single line
``ERROR <code>: <message>`` to stderr and exit with status 2.
"""

import argparse
import dataclasses
import os
import sys

from .errors import ConfigError, TpropError
from .experiments.config import KEYS, RunConfig, SweepConfig, build_config, convert, load_config_file
from .experiments.runner import run_train
from .experiments.sweep import run_sweep
from .experiments.tools import export_checkpoint, run_diagnose, run_timing


def _add_config_flags(parser):
    parser.add_argument("--config", help="key = value configuration file")
    for key in KEYS:
        parser.add_argument(f"--{key}", dest=f"cfg_{KEYS[key]}", default=argparse.SUPPRESS, metavar="VALUE")


def _config_from_args(args):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        name[4:]: convert(name[4:], value) for name, value in vars(args).items() if name.startswith("cfg_")
    }
    return build_config(file_values, overrides)


def _parse_centers(items):
    centers = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or key.strip() not in KEYS:
            raise ConfigError(f"bad --center {item!r}; expected KEY=VALUE")
        name = KEYS[key.strip()]
        centers[name] = convert(name, value)
    return centers


def cmd_train(args):
    cfg = _config_from_args(args)

    def report(result):
        row = result.rows[-1]
        print(f"epoch {row[0]} train_ce {row[1]:.4f} test_error {row[3]:.2f}", flush=True)

    result = run_train(cfg, on_epoch=report)
    best = result.best_val_epoch
    if result.rows:
        print(f"final test_error {result.final_test_error:.2f}")
    if best is not None:
        print(f"best validation epoch {best} test_error {result.best_val_test_error:.2f}")


def cmd_sweep(args):
    sweep = SweepConfig(
        _config_from_args(args),
        centers=_parse_centers(args.center),
        trials=args.trials,
        low=args.low,
        high=args.high,
        jobs=args.jobs,
        bin_width=args.bin_width,
    )
    header, rows, _ = run_sweep(sweep)
    done = sum(1 for r in rows if r[-1] == "ok")
    print(f"{done}/{len(rows)} trials completed")


def cmd_diagnose(args):
    cfg = _config_from_args(args)
    out = os.path.join(cfg.out, "diagnostics.csv") if cfg.out else None
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
    layers = [int(t) for t in args.layers.split(",")] if args.layers else None
    header, rows = run_diagnose(args.checkpoint, cfg, layers, out)
    for row in rows:
        print(f"layer {row[0]} trace {row[1]:.6g} psd_proportion {row[2]:.4f}")


def cmd_timing(args):
    base = _config_from_args(args)
    configs = [dataclasses.replace(base, algorithm=a.strip()) for a in args.algorithms.split(",")]
    out = os.path.join(base.out, "timing.csv") if base.out else None
    if base.out:
        os.makedirs(base.out, exist_ok=True)
    _, rows = run_timing(configs, args.repetitions, args.warmup, out)
    for name, mean, std, ratio, per_batch in rows:
        ratio_text = "n/a" if ratio is None else f"{ratio:.2f}"
        print(f"{name} {mean:.3f}s +/- {std:.3f}s ratio {ratio_text} decoder_grads/batch {per_batch:g}")


def cmd_export(args):
    for path in export_checkpoint(args.checkpoint, args.out):
        print(path)


def build_parser():
    parser = argparse.ArgumentParser(prog="tprop", description="Target propagation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one network")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="random hyperparameter sweep")
    _add_config_flags(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--low", type=float, default=0.2, help="lower range factor")
    p.add_argument("--high", type=float, default=5.0, help="upper range factor")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--bin-width", type=float, default=5.0, help="accuracy histogram bin width")
    p.add_argument("--center", action="append", metavar="KEY=VALUE", help="override a sweep center")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="Jacobian conditions of a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layers", help="comma-separated layer indices (default: all)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("timing", help="epoch wall-time comparison")
    _add_config_flags(p)
    p.add_argument("--algorithms", default="fwdtp,dtp")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("export", help="write checkpoint weights as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except TpropError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ERROR io-error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"ERROR invalid-config: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
