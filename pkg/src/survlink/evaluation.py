"""Blocked-event detection benchmark.

A test set is split into the ``epsilon`` fraction of shortest durations
(positives, the blocking events a reliable schedule must avoid) and the
rest. A predicted duration ``tau*`` flags every test duration shorter than
itself. F1 scores that detection.

Durations are scored as *remaining* time after the observation time ``t``:
only test durations ``>= t`` are kept, shifted by ``-t``. This matches the
way ``tau*`` is defined, as the time past ``t``. At ``t = 0`` the test set
is used as-is.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._validation import check_probability
from .datadriven import DataDrivenSurvival, TrainConfig
from .exceptions import SchemaVersionError, SurvlinkError
from .weibull import WeibullSurvival

__all__ = [
    "Partition",
    "DetectionCounts",
    "SweepSpec",
    "SweepRow",
    "RESULT_COLUMNS",
    "partition_test_set",
    "classify",
    "f_score",
    "remaining_durations",
    "score_tau_star",
    "mlp_label",
    "run_sweep",
    "write_results",
    "read_results",
    "score_external",
]

RESULTS_VERSION = 1
RESULT_COLUMNS = (
    "estimator", "S", "epsilon", "t_s", "threshold_db", "seed", "tau_star_s", "f1",
    "tau_low_s", "tau_high_s", "mean_remaining_s", "var_remaining_s2", "status",
)
ESTIMATORS = ("weibull", "mlp")


@dataclass
class Partition:
    """Index split of a test set; positives are the ``floor(eps * n)`` smallest."""

    values: np.ndarray
    positive_idx: np.ndarray
    negative_idx: np.ndarray
    epsilon: float

    @property
    def positives(self) -> np.ndarray:
        return self.values[self.positive_idx]

    @property
    def negatives(self) -> np.ndarray:
        return self.values[self.negative_idx]


@dataclass
class DetectionCounts:
    tp: int
    fp: int
    fn: int
    tn: int = 0


def _values(test) -> np.ndarray:
    return np.asarray(getattr(test, "durations", test), dtype=np.float64).ravel()


def partition_test_set(test, epsilon) -> Partition:
    """Stable-sort ``test`` and take the first ``floor(eps * n)`` as positives."""
    values = _values(test)
    if values.size == 0:
        raise ValueError("test set is empty")
    epsilon = check_probability(epsilon, "epsilon", closed_right=True)
    order = np.argsort(values, kind="stable")
    # the 1e-9 guard keeps e.g. 0.2 * 10 from flooring to 1
    m = int(math.floor(epsilon * values.size + 1e-9))
    return Partition(values, np.sort(order[:m]), np.sort(order[m:]), epsilon)


def classify(test, partition: Partition, tau_star) -> DetectionCounts:
    """Tally TP/FP/FN (and TN) for the rule "flag if duration < tau*"."""
    values = _values(test)
    if values.shape != partition.values.shape or not np.array_equal(values, partition.values):
        raise ValueError("partition was built from a different test set")
    flagged = values < tau_star
    tp = int(np.count_nonzero(flagged[partition.positive_idx]))
    fp = int(np.count_nonzero(flagged[partition.negative_idx]))
    fn = partition.positive_idx.size - tp
    tn = partition.negative_idx.size - fp
    return DetectionCounts(tp, fp, fn, tn)


def f_score(counts: DetectionCounts) -> float:
    """``TP / (TP + (FP + FN) / 2)``; 1.0 when there is nothing to detect or flag."""
    if counts.tp == 0 and counts.fp == 0 and counts.fn == 0:
        return 1.0
    return counts.tp / (counts.tp + 0.5 * (counts.fp + counts.fn))


def remaining_durations(test, t) -> np.ndarray:
    values = _values(test)
    return values[values >= t] - t


def score_tau_star(test, t, epsilon, tau_star):
    """Partition the remaining test durations at ``t`` and score ``tau_star``."""
    remaining = remaining_durations(test, t)
    if remaining.size == 0:
        raise ValueError(f"no test duration survives t={t}")
    part = partition_test_set(remaining, epsilon)
    counts = classify(remaining, part, tau_star)
    return counts, f_score(counts)


# -- sweeps -------------------------------------------------------------------

@dataclass
class SweepSpec:
    """Grid of evaluation cells; one row per (estimator, S, eps, t, threshold, seed)."""

    sample_sizes: Sequence[int] = (100, 1000, 10000)
    epsilons: Sequence[float] = (1e-3, 1e-2, 0.05, 0.1, 0.2)
    observation_times: Sequence[float] = (0.01, 0.3, 1.0)
    thresholds_db: Sequence[float] = (-8.0,)
    seeds: Sequence[int] = (0,)
    estimators: Sequence[str] = ESTIMATORS
    mlp_orders: Sequence[int] = (1,)
    mlp_train: TrainConfig = field(default_factory=TrainConfig)
    mlp_input_mode: str = "remaining"
    mlp_grid_step: float | None = None
    confidence: bool = True
    gamma: float = 0.95
    df_mode: str = "paper"
    delta: float | None = None
    grid_size: int = 21

    def __post_init__(self):
        for name in ("sample_sizes", "epsilons", "observation_times", "thresholds_db",
                     "seeds", "estimators"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be a nonempty list")
        if "mlp" in self.estimators and len(self.mlp_orders) == 0:
            raise ValueError("mlp_orders must be a nonempty list")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimator(s) {sorted(unknown)}; choose from {ESTIMATORS}")


@dataclass
class SweepRow:
    estimator: str
    S: int
    epsilon: float
    t_s: float
    threshold_db: float
    seed: int
    tau_star_s: float = math.nan
    f1: float = math.nan
    tau_low_s: float = math.nan
    tau_high_s: float = math.nan
    mean_remaining_s: float = math.nan
    var_remaining_s2: float = math.nan
    status: str = "ok"
    counts: DetectionCounts | None = None
    model: str = ""

    def key(self):
        return (self.estimator, self.S, self.epsilon, self.t_s, self.threshold_db, self.seed)

    def as_record(self) -> dict:
        return {c: getattr(self, c) for c in RESULT_COLUMNS}


def _per_threshold(sets, thresholds):
    if isinstance(sets, Mapping):
        return {float(d): sets[d] if d in sets else sets[float(d)] for d in thresholds}
    return {float(d): sets for d in thresholds}


def _error_status(exc) -> str:
    return f"error:{type(exc).__name__}:{str(exc).replace(',', ';')[:120]}"


def mlp_label(order) -> str:
    return f"mlp-n{int(order)}"


def run_sweep(spec: SweepSpec, train, test, models=None) -> list[SweepRow]:
    """Evaluate every cell of ``spec``.

    ``train`` and ``test`` are SampleSets (or arrays), or mappings from
    threshold in dB to SampleSet. For each seed a seeded random subset of
    ``S`` training durations is drawn (all of them when ``S`` equals the pool
    size). A failing cell yields a row whose status starts with ``error:``
    and the sweep carries on.

    MLP rows are tagged ``mlp-n<order>``, one set per entry of
    ``spec.mlp_orders``. If ``models`` is a dict, every fitted estimator is
    stored in it under ``(estimator, S, t, threshold_db, seed)``; the Weibull
    fit does not depend on ``t`` and is stored with ``t = None``.
    """
    trains = _per_threshold(train, spec.thresholds_db)
    tests = _per_threshold(test, spec.thresholds_db)
    rows = []
    for thr in spec.thresholds_db:
        thr = float(thr)
        pool = _values(trains[thr])
        test_values = _values(tests[thr])
        for seed in spec.seeds:
            for size in spec.sample_sizes:
                rows.extend(
                    _sweep_cell(spec, pool, test_values, thr, int(seed), int(size), models)
                )
    return rows


def _subset(pool, size, seed):
    if size > pool.size:
        raise ValueError(f"requested S={size} but only {pool.size} training durations")
    if size == pool.size:
        return pool
    rng = np.random.default_rng(seed)
    return pool[np.sort(rng.choice(pool.size, size=size, replace=False))]


def _labels(spec):
    out = []
    for est in spec.estimators:
        out.extend([est] if est == "weibull" else [mlp_label(n) for n in spec.mlp_orders])
    return out


def _sweep_cell(spec, pool, test_values, thr, seed, size, models):
    rows = []
    base = dict(S=size, threshold_db=thr, seed=seed)
    try:
        samples = _subset(pool, size, seed)
    except ValueError as exc:
        return [SweepRow(est, epsilon=float(e), t_s=float(t), status=_error_status(exc), **base)
                for est in _labels(spec) for t in spec.observation_times for e in spec.epsilons]

    if "weibull" in spec.estimators:
        try:
            weibull = WeibullSurvival().fit(samples)
            if models is not None:
                models[("weibull", size, None, thr, seed)] = weibull
        except SurvlinkError as exc:
            weibull = exc
        for t in spec.observation_times:
            rows.extend(_weibull_rows(spec, weibull, test_values, float(t), base))
    if "mlp" in spec.estimators:
        for order in spec.mlp_orders:
            for t in spec.observation_times:
                rows.extend(_mlp_rows(spec, int(order), samples, test_values, float(t), base,
                                      models))
    return rows


def _weibull_rows(spec, model, test_values, t, base):
    if isinstance(model, Exception):
        return [SweepRow("weibull", epsilon=float(e), t_s=t, status=_error_status(model), **base)
                for e in spec.epsilons]
    label = f"scale={model.scale_!r};shape={model.shape_!r}"
    try:
        mean = model.remaining_mean(t)
        var = model.remaining_variance(t)
    except (ValueError, OverflowError):
        mean = var = math.nan
    rows = []
    for eps in spec.epsilons:
        row = SweepRow("weibull", epsilon=float(eps), t_s=t, mean_remaining_s=mean,
                       var_remaining_s2=var, model=label, **base)
        try:
            row.tau_star_s = model.tau_star(t, eps).tau
            row.counts, row.f1 = score_tau_star(test_values, t, eps, row.tau_star_s)
            if spec.confidence:
                band = model.confidence_band(t, eps, spec.gamma, spec.delta, spec.grid_size,
                                             spec.df_mode)
                row.tau_low_s, row.tau_high_s = band.tau_low, band.tau_high
        except (SurvlinkError, ValueError, ArithmeticError) as exc:
            row.status = _error_status(exc)
        rows.append(row)
    return rows


def _mlp_rows(spec, order, samples, test_values, t, base, models):
    cfg = spec.mlp_train
    name = mlp_label(order)
    try:
        est = DataDrivenSurvival(
            t=t, order=order, input_mode=spec.mlp_input_mode,
            grid_step=spec.mlp_grid_step, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
            momentum=cfg.momentum, decay=cfg.decay, batch_size=cfg.batch_size,
            patience=cfg.patience, refine_iter=cfg.refine_iter,
            random_state=cfg.seed + base["seed"],
        ).fit(samples)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mean, var = est.remaining_mean(), est.remaining_variance()
    except (SurvlinkError, ValueError) as exc:
        return [SweepRow(name, epsilon=float(e), t_s=t, status=_error_status(exc), **base)
                for e in spec.epsilons]
    if models is not None:
        models[(name, base["S"], t, base["threshold_db"], base["seed"])] = est
    label = f"mlp:{est.model_.digest()}"
    rows = []
    for eps in spec.epsilons:
        row = SweepRow(name, epsilon=float(eps), t_s=t, mean_remaining_s=mean,
                       var_remaining_s2=var, model=label, **base)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = est.tau_star(eps)
            row.tau_star_s = result.tau
            if result.status != "ok":
                row.status = result.status
            row.counts, row.f1 = score_tau_star(test_values, t, eps, row.tau_star_s)
        except (SurvlinkError, ValueError) as exc:
            row.status = _error_status(exc)
        rows.append(row)
    return rows


# -- CSV --------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(path, rows: Sequence[SweepRow]) -> None:
    """Results CSV with a ``# survlink results v1`` first line."""
    buf = io.StringIO()
    buf.write(f"# survlink results v{RESULTS_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in sorted(rows, key=lambda r: tuple(map(str, r.key()))):
        writer.writerow([_fmt(getattr(row, c)) for c in RESULT_COLUMNS])
    Path(path).write_text(buf.getvalue())


def read_results(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# survlink results v{RESULTS_VERSION}":
        raise SchemaVersionError(f"{path}: missing or unsupported results version header")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise SchemaVersionError(f"{path}: unexpected columns {reader.fieldnames}")
    out = []
    for rec in reader:
        for key in ("S", "seed"):
            rec[key] = int(rec[key])
        for key in RESULT_COLUMNS:
            if key not in ("estimator", "status", "S", "seed"):
                rec[key] = float(rec[key])
        out.append(rec)
    return out


def score_external(records, test) -> list[SweepRow]:
    """Score externally produced ``tau*`` values (e.g. a GPR baseline).

    ``records`` are mappings with at least ``estimator, S, epsilon, t_s,
    threshold_db, seed, tau_star_s``; ``test`` is a SampleSet or a mapping
    from threshold to SampleSet.
    """
    rows = []
    for rec in records:
        thr = float(rec["threshold_db"])
        test_values = _values(test[thr] if isinstance(test, Mapping) else test)
        row = SweepRow(str(rec["estimator"]), int(rec["S"]), float(rec["epsilon"]),
                       float(rec["t_s"]), thr, int(rec["seed"]),
                       tau_star_s=float(rec["tau_star_s"]))
        try:
            row.counts, row.f1 = score_tau_star(test_values, row.t_s, row.epsilon, row.tau_star_s)
        except ValueError as exc:
            row.status = _error_status(exc)
        rows.append(row)
    return rows
