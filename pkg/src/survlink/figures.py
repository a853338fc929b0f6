"""Figure-data tables derived from a sweep.

Each table is a CSV whose first line is ``# survlink <name> v1``:

``fig2``  failure curves F_t(tau): test-set truth and every fitted model
``fig3``  F1 versus epsilon, averaged over seeds
``fig4``  Weibull confidence band versus S (medians over seeds)
``fig5``  tau*, remaining mean and variance versus t, largest S

The test set serves as ground truth throughout (rows tagged ``empirical``).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from .evaluation import remaining_durations
from .exceptions import ConditioningError, SchemaVersionError
from .survival import EmpiricalCdf, conditional_failure, solve_tau_star

__all__ = [
    "FIGURE_COLUMNS",
    "write_table",
    "read_table",
    "failure_curve_rows",
    "f1_rows",
    "band_rows",
    "moment_rows",
    "write_figures",
]

TABLE_VERSION = 1
FIGURE_COLUMNS = {
    "fig2": ("threshold_db", "t_s", "S", "seed", "estimator", "tau_s", "failure"),
    "fig3": ("threshold_db", "t_s", "S", "estimator", "epsilon", "f1_mean", "n_seeds"),
    "fig4": ("threshold_db", "t_s", "epsilon", "S", "tau_star_s", "tau_low_s", "tau_high_s",
             "width_s", "tau_true_s", "n_seeds"),
    "fig5": ("threshold_db", "t_s", "estimator", "S", "epsilon", "tau_star_s",
             "mean_remaining_s", "var_remaining_s2"),
}


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_table(path, name, rows) -> None:
    columns = FIGURE_COLUMNS[name]
    buf = io.StringIO()
    buf.write(f"# survlink {name} v{TABLE_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_table(path, name) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# survlink {name} v{TABLE_VERSION}":
        raise SchemaVersionError(f"{path}: missing or unsupported {name} header")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != FIGURE_COLUMNS[name]:
        raise SchemaVersionError(f"{path}: unexpected columns {reader.fieldnames}")
    return list(reader)


def _ok(row):
    return row.status in ("ok", "saturated") and math.isfinite(row.f1)


def _truth_tau(test, t, eps):
    try:
        return solve_tau_star(EmpiricalCdf(test), t, eps).tau
    except ConditioningError:
        return math.nan


def failure_curve_rows(models, tests, points=200):
    """Curves on ``[0, q99]`` of the remaining test durations for each fitted model.

    ``models`` maps ``(estimator, S, t, threshold_db, seed)`` to fitted
    estimators as filled in by :func:`run_sweep`; only the first seed is
    drawn. Weibull entries (stored with ``t = None``) are drawn at every
    ``t`` that appears for another model.
    """
    rows = []
    keys = sorted(models, key=lambda k: tuple(map(str, k)))
    seeds = sorted({k[4] for k in keys})
    if not seeds:
        return rows
    seed = seeds[0]
    times = sorted({k[2] for k in keys if k[2] is not None})
    thresholds = sorted({k[3] for k in keys})
    weibull_s = sorted({k[1] for k in keys if k[0] == "weibull"})
    for thr in thresholds:
        test = tests[thr]
        for t in times or [0.0]:
            rem = remaining_durations(test, t)
            if rem.size == 0:
                continue
            grid = np.linspace(0.0, float(np.quantile(rem, 0.99)), int(points))
            truth = conditional_failure(EmpiricalCdf(test), t, grid)
            rows.extend(_curve(thr, t, "", seed, "empirical", grid, truth))
            for size in weibull_s:
                model = models.get(("weibull", size, None, thr, seed))
                if model is not None:
                    rows.extend(_curve(thr, t, size, seed, "weibull", grid,
                                       model.predict_failure(grid, t)))
            for key in keys:
                if key[0] != "weibull" and key[2] == t and key[3] == thr and key[4] == seed:
                    rows.extend(_curve(thr, t, key[1], seed, key[0], grid,
                                       models[key].failure_curve()(grid)))
    return rows


def _curve(thr, t, size, seed, name, grid, values):
    return [
        dict(threshold_db=thr, t_s=t, S=size, seed=seed, estimator=name, tau_s=x, failure=y)
        for x, y in zip(grid.tolist(), np.asarray(values, dtype=float).tolist())
    ]


def f1_rows(sweep_rows):
    groups = defaultdict(list)
    for r in sweep_rows:
        if _ok(r):
            groups[(r.threshold_db, r.t_s, r.S, r.estimator, r.epsilon)].append(r.f1)
    return [
        dict(threshold_db=k[0], t_s=k[1], S=k[2], estimator=k[3], epsilon=k[4],
             f1_mean=float(np.mean(v)), n_seeds=len(v))
        for k, v in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0])))
    ]


def band_rows(sweep_rows, tests):
    groups = defaultdict(list)
    for r in sweep_rows:
        if r.estimator == "weibull" and r.status == "ok" and math.isfinite(r.tau_low_s):
            groups[(r.threshold_db, r.t_s, r.epsilon, r.S)].append(r)
    out = []
    for k in sorted(groups, key=lambda key: tuple(map(str, key))):
        rs = groups[k]
        low = np.median([r.tau_low_s for r in rs])
        high = np.median([r.tau_high_s for r in rs])
        out.append(dict(
            threshold_db=k[0], t_s=k[1], epsilon=k[2], S=k[3],
            tau_star_s=float(np.median([r.tau_star_s for r in rs])),
            tau_low_s=float(low), tau_high_s=float(high),
            width_s=float(np.median([r.tau_high_s - r.tau_low_s for r in rs])),
            tau_true_s=_truth_tau(tests[k[0]], k[1], k[2]), n_seeds=len(rs),
        ))
    return out


def moment_rows(sweep_rows, tests):
    """Per (threshold, t): model rows at the largest S, plus test-set truth."""
    usable = [r for r in sweep_rows if _ok(r)]
    out = []
    if not usable:
        return out
    top = max(r.S for r in usable)
    groups = defaultdict(list)
    for r in usable:
        if r.S == top:
            groups[(r.threshold_db, r.t_s, r.estimator, r.epsilon)].append(r)
    seen = set()
    for k in sorted(groups, key=lambda key: tuple(map(str, key))):
        thr, t, name, eps = k
        rs = groups[k]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out.append(dict(
                threshold_db=thr, t_s=t, estimator=name, S=top, epsilon=eps,
                tau_star_s=float(np.median([r.tau_star_s for r in rs])),
                mean_remaining_s=float(np.nanmedian([r.mean_remaining_s for r in rs])),
                var_remaining_s2=float(np.nanmedian([r.var_remaining_s2 for r in rs])),
            ))
        if (thr, t, eps) not in seen:
            seen.add((thr, t, eps))
            rem = remaining_durations(tests[thr], t)
            out.append(dict(
                threshold_db=thr, t_s=t, estimator="empirical", S=rem.size, epsilon=eps,
                tau_star_s=_truth_tau(tests[thr], t, eps),
                mean_remaining_s=float(rem.mean()) if rem.size else math.nan,
                var_remaining_s2=float(rem.var()) if rem.size else math.nan,
            ))
    return out


def write_figures(out_dir, sweep_rows, models, tests, points=200) -> dict:
    """Write ``fig2.csv`` .. ``fig5.csv`` into ``out_dir``; returns name -> path."""
    out_dir = Path(out_dir)
    tables = {
        "fig2": failure_curve_rows(models, tests, points),
        "fig3": f1_rows(sweep_rows),
        "fig4": band_rows(sweep_rows, tests),
        "fig5": moment_rows(sweep_rows, tests),
    }
    paths = {}
    for name, rows in tables.items():
        paths[name] = out_dir / f"{name}.csv"
        write_table(paths[name], name, rows)
    return paths
