"""
Command-line front end.

Subcommands::

    synth        scenario -> h_chan.chx1 (+ h_meas/b2b when simulated) and paths_true.json
    estimate     CHX1 channel -> paths_L{n}.json for every configured estimator
    extrapolate  paths JSON -> reconstructed CHX1 over the configured grid
    evaluate     two CHX1 files -> metrics CSV
    run          the whole experiment

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .channel_synth import read_chx1, read_pathset, synthesize_channel, write_chx1, write_pathset
from .errors import NumericalError
from .harness import (assumed_pattern, build_pattern, prepare_channel, run_experiment,
                      validate_config, _tags)
from .metrics import series_to_csv, sweep
from .preprocess import select_band
from .sage import estimate

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="fddextrap", description="FDD channel extrapolation experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", type=Path, help="experiment config JSON (defaults apply if omitted)")
        sp.add_argument("--seed", type=_u64)
        sp.add_argument("--out", type=Path, help=out_help)
        sp.add_argument("--train-start-hz", type=float)
        sp.add_argument("--train-count", type=int)
        sp.add_argument("--absolute", action="store_true",
                        help="keep absolute channel power (no training-band normalization)")

    common(sub.add_parser("synth", help="generate a scenario channel"), "output directory")
    sp = sub.add_parser("estimate", help="estimate paths from a CHX1 channel")
    sp.add_argument("channel", type=Path)
    common(sp, "output directory")
    sp = sub.add_parser("extrapolate", help="reconstruct a channel from a path set")
    sp.add_argument("paths", type=Path)
    common(sp, "output CHX1 header path")
    sp = sub.add_parser("evaluate", help="score a reconstruction against the reference")
    sp.add_argument("chan", type=Path)
    sp.add_argument("sage", type=Path)
    common(sp, "output CSV path (stdout if omitted)")
    common(sub.add_parser("run", help="run a full experiment"), "output directory")
    return p


def _load_raw(args):
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            from .errors import ConfigError
            raise ConfigError(f"invalid JSON in {args.config}: {exc}") from None
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None and args.command in ("synth", "estimate", "run"):
        raw["output_dir"] = str(args.out)
    if args.train_start_hz is not None or args.train_count is not None:
        t = dict(raw.get("training", {}))
        if args.train_start_hz is not None:
            t.pop("start_index", None)
            t["start_hz"] = args.train_start_hz
        if args.train_count is not None:
            t["count"] = args.train_count
        raw["training"] = t
    if args.absolute:
        raw["absolute"] = True
    return raw


def _cmd_synth(cfg, args):
    prep = prepare_channel(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_chx1(prep.h_chan, out / "h_chan.chx1")
    if prep.h_meas is not None:
        write_chx1(prep.h_meas, out / "h_meas.chx1")
        write_chx1(prep.b2b.as_channel(), out / "b2b.chx1")
    if prep.true_paths is not None:
        write_pathset(prep.true_paths, out / "paths_true.json")


def _cmd_estimate(cfg, args):
    h = read_chx1(args.channel)
    true_pattern, _ = build_pattern(cfg)
    pattern = assumed_pattern(cfg, true_pattern)
    h_train = select_band(h, cfg.training)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tag, est_cfg in zip(_tags(cfg.estimators), cfg.estimators):
        report = estimate(h_train, pattern, est_cfg)
        (out / f"paths_{tag}.json").write_text(report.dumps())


def _cmd_extrapolate(cfg, args):
    doc = json.loads(args.paths.read_text())
    if isinstance(doc, dict):
        from .sage import EstimationReport
        paths = EstimationReport.from_json(doc).paths
    else:
        paths = read_pathset(args.paths)
    true_pattern, _ = build_pattern(cfg)
    h = synthesize_channel(paths, assumed_pattern(cfg, true_pattern), cfg.grid, role="sage")
    out = args.out if args.out is not None else Path(cfg.output_dir) / "h_sage.chx1"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_chx1(h, out)


def _cmd_evaluate(cfg, args):
    chan = read_chx1(args.chan)
    sage = read_chx1(args.sage)
    text = series_to_csv(sweep(chan, sage, cfg.training))
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)


def _cmd_run(cfg, args):
    result = run_experiment(cfg)
    json.dump({t: r.summary for t, r in zip(_tags(cfg.estimators), result.results)},
              sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


_COMMANDS = {"synth": _cmd_synth, "estimate": _cmd_estimate, "extrapolate": _cmd_extrapolate,
             "evaluate": _cmd_evaluate, "run": _cmd_run}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = _load_raw(args)
        cfg = validate_config(raw)
        _COMMANDS[args.command](cfg, args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK
