"""Command-line front end.

Exit codes: 0 success, 2 invalid input or flags, 3 numeric failure.
Every output file is written atomically and only after all computation succeeded.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bpnn, cnn, pipeline, smoothing
from .data import (
    INDEX_NAMES,
    NormPolicy,
    bundled_dataset_path,
    fit_normalization,
    forecast_records,
    load_dataset,
    training_records,
)
from .errors import EmuFleetError, NumericError
from .textio import atomic_write, fmt_real

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


class _HelpFormatter(argparse.HelpFormatter):
    """Append ``(default: ...)`` unless the help text already explains the default."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" not in text and action.default not in (None, argparse.SUPPRESS) and not action.required:
            text += " (default: %(default)s)"
        return text


def _load(args):
    return load_dataset(args.data) if args.data else load_dataset(bundled_dataset_path().read_bytes())


def _nonneg_float(text):
    v = float(text)
    if not (np.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _write_outputs(outputs):
    """Atomically write each (path, text); if any write fails, remove the ones already written."""
    done = []
    try:
        for path, text in outputs:
            atomic_write(path, text)
            done.append(path)
    except BaseException:
        for path in done:
            try:
                os.remove(path)
            except OSError:
                pass
        raise


def _trace_csv(trace):
    return "epoch,mse\n" + "".join(f"{i + 1},{fmt_real(v)}\n" for i, v in enumerate(trace))


def _add_common(p, training=False, policy=True):
    p.add_argument("--data", default=None, help="dataset CSV (default: bundled dataset)")
    if policy:
        p.add_argument("--policy", default=NormPolicy.TRAIN_YEARS.value,
                       choices=[v.value for v in NormPolicy], help="feature normalization range")
    if training:
        p.add_argument("--epochs", type=_nonneg_int, default=100, help="training epochs")
        p.add_argument("--lr", type=_nonneg_float, default=0.5, help="learning rate")
        p.add_argument("--seed", type=_nonneg_int, default=0, help="seed for all randomness")
        p.add_argument("--init-scale", type=_nonneg_float, default=0.5,
                       help="initial weights drawn from uniform(-s, s)")


def cmd_validate(args):
    recs = _load(args)
    train = training_records(recs)
    fit_normalization(recs, args.policy)  # rejects degenerate ranges
    print(f"ok: {len(recs)} records ({len(train)} with fleet size), years {recs[0].year}-{recs[-1].year}")
    return EXIT_OK


def cmd_smooth(args):
    recs = _load(args)
    future = forecast_records(recs)
    orders = {n: args.order for n in INDEX_NAMES} if args.order else None
    references = None
    if args.alpha is None and future:
        references = {n: [r[n] for r in future][: args.horizon] for n in INDEX_NAMES}
    result = smoothing.smooth_indices(recs, args.horizon, orders, references, args.alpha)
    last = training_records(recs)[-1].year
    lines = ["year,index,forecast"]
    for name, (_, values) in result.items():
        lines += [f"{last + m},{name},{fmt_real(v)}" for m, v in enumerate(values, start=1)]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    alphas = " ".join(f"{n}={m.alpha:g}" for n, (m, _) in result.items())
    print(f"smoothed {len(result)} indices over {args.horizon} years; alpha {alphas}",
          file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_train_cnn(args):
    recs = _load(args)
    spec = fit_normalization(recs, args.policy)
    cfg = cnn.TrainConfig(args.lr, args.epochs, args.seed, args.init_scale)
    params, trace = cnn.train_cnn(cnn.make_samples(recs, spec), cfg)
    outputs = [(args.out, cnn.dumps_checkpoint(params))]
    if args.trace:
        outputs.append((args.trace, _trace_csv(trace)))
    _write_outputs(outputs)
    final = f"{trace[-1]:.6g}" if len(trace) else "n/a"
    print(f"trained cnn: {args.epochs} epochs, final mse {final}, checkpoint {args.out}")
    return EXIT_OK


def cmd_train_bpnn(args):
    recs = _load(args)
    spec = fit_normalization(recs, args.policy)
    cfg = cnn.TrainConfig(args.lr, args.epochs, args.seed, args.init_scale)
    params, trace = bpnn.train_bpnn(bpnn.make_mlp_samples(recs, spec), cfg, mode=args.mode)
    outputs = [(args.out, bpnn.dumps_checkpoint(params))]
    if args.trace:
        outputs.append((args.trace, _trace_csv(trace)))
    _write_outputs(outputs)
    final = f"{trace[-1]:.6g}" if len(trace) else "n/a"
    print(f"trained bpnn: {args.epochs} epochs, final mse {final}, checkpoint {args.out}")
    return EXIT_OK


def _read_any_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.startswith(f"format={bpnn.CKPT_FORMAT}"):
        return "bpnn", bpnn.loads_checkpoint(text)
    return "cnn", cnn.loads_checkpoint(text)


def cmd_predict(args):
    recs = _load(args)
    spec = fit_normalization(recs, args.policy)
    kind, params = _read_any_checkpoint(args.ckpt)
    predict = cnn.cnn_predict if kind == "cnn" else bpnn.mlp_predict
    rows = predict(params, recs, spec)
    text = "year,trains\n" + "".join(f"{y},{t}\n" for y, t in rows)
    if args.out:
        atomic_write(args.out, text)
        print(f"predicted {len(rows)} years with {kind} checkpoint, written to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_replay(args):
    recs = _load(args)
    params = cnn.load_checkpoint(args.ckpt) if args.ckpt else cnn.table4_params()
    results, best = pipeline.replay_all(params, recs)
    shown = [r for r in results if args.policy is None or r.policy.value == args.policy]
    text = pipeline.replay_to_text(shown, best)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args):
    recs = _load(args)
    config = pipeline.ExperimentConfig(args.policy, args.epochs, args.lr, args.seed, args.seed, args.init_scale)
    report = pipeline.run_experiment(recs, config)
    csv_text = pipeline.report_to_csv(report)
    md_text = pipeline.report_to_markdown(report)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_outputs([(os.path.join(args.out_dir, "report.csv"), csv_text),
                    (os.path.join(args.out_dir, "report.md"), md_text)])
    print(f"report written to {args.out_dir}: cnn abs pct sum {report.cnn_abs_pct_sum:.2f}%, "
          f"bpnn abs pct sum {report.bpnn_abs_pct_sum:.2f}%")
    return EXIT_OK


def build_parser():
    fmt = _HelpFormatter
    parser = _Parser(prog="emufleet", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate-data", help="check a dataset CSV", formatter_class=fmt)
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("smooth", help="forecast each index by exponential smoothing", formatter_class=fmt)
    _add_common(p, policy=False)
    p.add_argument("--order", choices=[o.value for o in smoothing.Order], default=None,
                   help="smoothing order for every index (default: per-index choice)")
    p.add_argument("--alpha", type=float, default=None,
                   help="fixed smoothing constant (default: grid-fit against the dataset's forecast rows)")
    p.add_argument("--horizon", type=_pos_int, default=5, help="years to forecast")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("train-cnn", help="train the convolutional network", formatter_class=fmt)
    _add_common(p, training=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", default=None, help="per-epoch MSE CSV (default: not written)")
    p.set_defaults(func=cmd_train_cnn)

    p = sub.add_parser("train-bpnn", help="train the fully connected baseline", formatter_class=fmt)
    _add_common(p, training=True)
    p.add_argument("--mode", choices=["batch", "per-sample"], default="batch", help="update scheme")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", default=None, help="per-epoch MSE CSV (default: not written)")
    p.set_defaults(func=cmd_train_bpnn)

    p = sub.add_parser("predict", help="predict fleet size for every dataset year", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--ckpt", required=True, help="cnn or bpnn checkpoint")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("replay", help="replay a CNN checkpoint against the published fitted values",
                       formatter_class=fmt)
    p.add_argument("--data", default=None, help="dataset CSV (default: bundled dataset)")
    p.add_argument("--ckpt", default=None, help="CNN checkpoint (default: bundled published parameters)")
    p.add_argument("--policy", default=None, choices=[v.value for v in NormPolicy],
                   help="only print per-year rows for this policy (default: both)")
    p.add_argument("--out", default=None, help="also write the table to this file")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="full reproduction: train both networks and write report.csv/report.md",
                       formatter_class=fmt)
    _add_common(p, training=True)
    p.add_argument("--out-dir", default=".", help="directory for report.csv and report.md")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            return args.func(args)
    except NumericError as exc:
        print(f"numeric failure ({exc.name}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EmuFleetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
