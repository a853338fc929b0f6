"""``survlink`` command line: simulate, fit, eval, sweep.

Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .channel import collect_sample_sets, read_sample_set, write_sample_set
from .config import ExperimentConfig, load_config
from .datadriven import DataDrivenSurvival
from .evaluation import ESTIMATORS, run_sweep, write_results
from .exceptions import (
    ConditioningError,
    ConfigurationError,
    DegenerateDataError,
    InsufficientDataError,
    NoBandError,
    SchemaVersionError,
    TrainingError,
)
from .figures import write_figures
from .weibull import WeibullSurvival

log = logging.getLogger("survlink")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def sample_file(directory, kind, threshold_db) -> Path:
    return Path(directory) / f"{kind}_{threshold_db:+g}dB.txt"


def _prepare_out(directory) -> Path:
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f"output directory {path} is not writable")
    return path


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("--seed must be nonnegative")
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "slot_aggregate", False):
        cfg = replace(cfg, data=replace(cfg.data, slot_aggregate=True))
    spec = cfg.sweep
    if getattr(args, "estimator", None):
        spec = replace(spec, estimators=(args.estimator,))
    if getattr(args, "order", None) is not None:
        spec = replace(spec, mlp_orders=(args.order,))
    if getattr(args, "df_mode", None):
        spec = replace(spec, df_mode=args.df_mode)
    return replace(cfg, sweep=spec)


def _simulate(cfg: ExperimentConfig):
    """Train and test SampleSets per threshold, from independent traces."""
    out = {}
    for kind, seed, size in (("train", cfg.data.train_seed, cfg.data.train_size),
                             ("test", cfg.data.test_seed, cfg.data.test_size)):
        fading = replace(cfg.fading, seed=seed)
        out[kind] = collect_sample_sets(fading, cfg.data.thresholds_db, size,
                                        slot_aggregate=cfg.data.slot_aggregate)
        for thr, ss in out[kind].items():
            if ss.size < size:
                log.warning("%s set at %+g dB has %d of %d durations; raise duration_s",
                            kind, thr, ss.size, size)
    return out["train"], out["test"]


def _load_sets(cfg: ExperimentConfig, data_dir):
    if data_dir is None:
        return _simulate(cfg)
    train, test = {}, {}
    for thr in cfg.data.thresholds_db:
        train[float(thr)] = read_sample_set(sample_file(data_dir, "train", thr))
        test[float(thr)] = read_sample_set(sample_file(data_dir, "test", thr))
    return train, test


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out or cfg.output_dir)
    train, test = _simulate(cfg)
    for kind, sets in (("train", train), ("test", test)):
        for thr, ss in sets.items():
            if ss.size == 0:
                raise InsufficientDataError(
                    f"no complete non-blocking run at {thr:+g} dB; lengthen duration_s"
                )
            path = sample_file(out, kind, thr)
            write_sample_set(path, ss)
            print(f"{kind} {thr:+g} dB: {ss.size} durations -> {path}")
    return EXIT_OK


def cmd_fit(args) -> int:
    samples = read_sample_set(args.durations)
    if samples.size == 0:
        raise InsufficientDataError(f"{args.durations}: no durations")
    estimator = args.estimator or "weibull"
    if estimator == "weibull":
        model = WeibullSurvival().fit(samples)
        text = model.fit_report_.to_text()
        if args.epsilon is not None:
            band = model.confidence_band(args.t, args.epsilon, df_mode=args.df_mode or "paper")
            text += f"t={args.t!r}\nepsilon={args.epsilon!r}\n" + band.to_text()
        out = Path(args.out) if args.out else Path(f"{args.durations}.fit.txt")
        out.write_text(text)
        print(text, end="")
    else:
        model = DataDrivenSurvival(t=args.t, order=args.order or 1,
                                   random_state=args.seed or 0).fit(samples)
        out = Path(args.out) if args.out else Path(f"{args.durations}.mlp.json")
        model.model_.save(out)
        meta = model.model_.meta
        print(f"order={model.order}\nt={args.t!r}\ntrain_size={meta['train_size']}\n"
              f"train_mse={meta['train_mse']!r}\ndigest={model.model_.digest()}")
    log.info("wrote %s", out)
    return EXIT_OK


def _run(args, figures: bool) -> int:
    cfg = _config(args)
    out = _prepare_out(args.out or cfg.output_dir)
    train, test = _load_sets(cfg, args.data)
    models = {} if figures else None
    rows = run_sweep(cfg.sweep, train, test, models=models)
    write_results(out / "results.csv", rows)
    failed = sum(r.status.startswith("error") for r in rows)
    print(f"{len(rows)} rows ({failed} failed) -> {out / 'results.csv'}")
    if figures:
        for name, path in write_figures(out, rows, models, test, cfg.curve_points).items():
            print(f"{name} -> {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    return _run(args, figures=True)


def cmd_sweep(args) -> int:
    return _run(args, figures=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survlink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, data=True):
        p.add_argument("--config", help="experiment file (default: bundled paper.cfg)")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        p.add_argument("--seed", type=int, help="base seed for the train/test traces")
        p.add_argument("--slot-aggregate", action="store_true",
                       help="count durations in whole slots instead of samples")
        if data:
            p.add_argument("--data", help="read train/test files written by `simulate` "
                                          "instead of simulating")
            p.add_argument("--estimator", choices=ESTIMATORS)
            p.add_argument("--order", type=int, help="MLP feature order")
            p.add_argument("--df-mode", choices=("paper", "profile"))

    p = sub.add_parser("simulate", help="write train/test duration files")
    common(p, data=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to a durations file")
    p.add_argument("durations")
    p.add_argument("--out", help="output file")
    p.add_argument("--estimator", choices=ESTIMATORS, default="weibull")
    p.add_argument("--order", type=int)
    p.add_argument("--t", type=float, default=0.0, help="observation time in seconds")
    p.add_argument("--epsilon", type=float, help="also report tau* and its band (weibull)")
    p.add_argument("--df-mode", choices=("paper", "profile"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="sweep plus figure-data tables")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="results table only")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="survlink: %(message)s")
    if getattr(args, "order", None) is not None and args.order < 1:
        parser.error("--order must be a positive integer")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return args.func(args)
    except ConfigurationError as exc:
        print(f"survlink: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, NoBandError, ConditioningError, ArithmeticError) as exc:
        print(f"survlink: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InsufficientDataError, DegenerateDataError, SchemaVersionError, OSError,
            ValueError) as exc:
        print(f"survlink: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
