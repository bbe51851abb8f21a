"""Command line interface.

Subcommands: calibrate, train, hard-prune, bench, compress.  Runs are
described by a TOML config file; --seed and --out override the config.
Exit codes: 0 success, 2 config error, 3 training divergence,
4 IO/format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .bench import bench_matvec, format_bench_table, write_bench_csv
from .config import config_from_dict, load_config, validate_config
from .errors import ConfigError, DivergenceError, ModelFormatError, ParameterError
from .plots import emit_curves, line_chart
from .serialize import compression_report, dense_equivalent_bytes, load_model
from .training import run_calibrate, run_compare, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _load(args):
    overrides = {"seed": args.seed, "out_dir": args.out}
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict({}, overrides)


def _add_common(parser):
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")


def _cmd_calibrate(args):
    config = _load(args)
    calib, hp, path = run_calibrate(config)
    print(f"q={calib.q:.6g} start_slope={calib.start_slope:.6g} "
          f"ramp_slope={calib.ramp_slope:.6g}")
    print(f"schedule: start={hp.start_itr} ramp={hp.ramp_itr} end={hp.end_itr} freq={hp.freq}")
    print(f"wrote {path}")
    return EXIT_OK


def _summarize(result, out_dir, label):
    print(f"[{label}] final sparsity {result.report.overall:.4f}  "
          f"val loss {result.final_val_loss:.6g}  "
          f"params remaining {result.report.params_remaining}  "
          f"({result.wall_seconds:.1f}s)")
    print(f"[{label}] artifacts in {out_dir}")


def _cmd_train(args):
    config = _load(args)
    if args.compare:
        results = run_compare(config)
        for mode in ("dense", "gradual", "hard"):
            _summarize(results[mode], os.path.join(config.out_dir, mode), mode)
        metrics = [os.path.join(config.out_dir, m, "metrics.csv")
                   for m in ("dense", "gradual", "hard")]
        emit_curves(metrics, config.out_dir)
        return EXIT_OK
    if config.pruning.mode == "hard":
        raise ConfigError("pruning.mode is 'hard'; use the hard-prune subcommand")
    result = run_experiment(config)
    emit_curves([os.path.join(config.out_dir, "metrics.csv")], config.out_dir)
    _summarize(result, config.out_dir, config.pruning.mode)
    return EXIT_OK


def _cmd_hard_prune(args):
    config = _load(args)
    if config.pruning.mode != "hard":
        config = validate_config(config.with_pruning(mode="hard"))
    result = run_experiment(config)
    emit_curves([os.path.join(config.out_dir, "metrics.csv")], config.out_dir)
    _summarize(result, config.out_dir, "hard")
    return EXIT_OK


def _parse_floats(text):
    return tuple(float(v) for v in text.split(","))


def _cmd_bench(args):
    config = _load(args)
    bench = config.bench
    if args.sizes:
        bench = dataclasses.replace(bench, sizes=tuple(int(v) for v in args.sizes.split(",")))
    if args.sparsities:
        bench = dataclasses.replace(bench, sparsities=_parse_floats(args.sparsities))
    if args.layer_type:
        bench = dataclasses.replace(bench, layer_type=args.layer_type)
    if args.parallel:
        bench = dataclasses.replace(bench, parallel=True)
    records = bench_matvec(
        bench.sizes, bench.sparsities, bench.layer_type,
        reps=bench.reps, warmup=bench.warmup, seed=config.seed, parallel=bench.parallel,
    )
    print(format_bench_table(records))
    os.makedirs(config.out_dir, exist_ok=True)
    csv_path = os.path.join(config.out_dir, "bench.csv")
    write_bench_csv(records, csv_path)
    svg_path = os.path.join(config.out_dir, "bench.svg")
    series = []
    for layer_type in sorted({r.layer_type for r in records}):
        rows = [r for r in records if r.layer_type == layer_type and r.sparsity > 0]
        if rows:
            series.append(
                (layer_type, [r.sparsity for r in rows], [r.speedup for r in rows])
            )
    if series:
        with open(svg_path, "w") as fh:
            fh.write(line_chart(series, "Sparse matvec speedup", "sparsity", "speedup vs dense"))
    print(f"wrote {csv_path}")
    return EXIT_OK


def _cmd_compress(args):
    try:
        model = load_model(args.model_file)
        actual = os.path.getsize(args.model_file)
    except OSError as exc:
        print(f"error: cannot read {args.model_file}: {exc}", file=sys.stderr)
        return EXIT_IO
    dense = dense_equivalent_bytes(model)
    print(f"{'record':<20} {'storage':>7} {'dense B':>12} {'actual B':>12} {'ratio':>7}")
    for name, storage, dense_b, actual_b in compression_report(model):
        ratio = dense_b / actual_b if actual_b else float("inf")
        print(f"{name:<20} {storage:>7} {dense_b:>12} {actual_b:>12} {ratio:>6.2f}x")
    print(f"dense-equivalent file: {dense} bytes")
    print(f"actual file:           {actual} bytes")
    print(f"compression ratio:     {dense / actual:.2f}x")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradprune",
        description="Train recurrent networks with gradual magnitude pruning, "
                    "benchmark sparse inference and inspect compressed models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="dense pre-run; compute the threshold schedule")
    _add_common(p)
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("train", help="train (dense or gradually pruned)")
    _add_common(p)
    p.add_argument("--compare", action="store_true",
                   help="run dense, gradual and matched hard-pruned variants")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("hard-prune", help="train dense, prune once at an epoch, finish frozen")
    _add_common(p)
    p.set_defaults(fn=_cmd_hard_prune)

    p = sub.add_parser("bench", help="dense vs sparse matvec benchmark")
    _add_common(p)
    p.add_argument("--sizes", help="comma-separated layer sizes")
    p.add_argument("--sparsities", help="comma-separated sparsity fractions")
    p.add_argument("--layer-type", choices=("RNN", "GRU"), dest="layer_type")
    p.add_argument("--parallel", action="store_true", help="parallel sparse kernel")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("compress", help="report compression of a serialized model")
    p.add_argument("model_file")
    p.set_defaults(fn=_cmd_compress)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ModelFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
