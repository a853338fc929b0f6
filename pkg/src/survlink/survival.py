"""Model-agnostic survival primitives.

A "CDF" here is anything callable returning ``F(x)``. Objects that also
expose ``logsf(x)`` (log survival function) are evaluated through it, which
keeps conditional probabilities accurate deep in the tail where ``1 - F(t)``
would cancel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._roots import bisect_last
from ._validation import check_durations, check_probability
from .exceptions import ConditioningError

__all__ = [
    "EmpiricalCdf",
    "ReliabilityTarget",
    "TauStar",
    "empirical_cdf",
    "conditional_failure",
    "solve_tau_star",
]


class TauStar(NamedTuple):
    """A reliable transmission duration and how it was obtained.

    ``status`` is ``"ok"``, ``"saturated"`` (the failure curve never reached
    the target inside the search range, ``tau`` is the range end) or
    ``"extrapolated"`` (the target lies below the curve's smallest value,
    ``tau`` is 0).
    """

    tau: float
    status: str = "ok"

    @property
    def saturated(self) -> bool:
        return self.status == "saturated"


@dataclass(frozen=True)
class ReliabilityTarget:
    """Outage probability ``epsilon`` and confidence level ``gamma``."""

    epsilon: float
    gamma: float = 0.95

    def __post_init__(self):
        check_probability(self.epsilon, "epsilon")
        check_probability(self.gamma, "gamma")


class EmpiricalCdf:
    """Right-continuous step CDF with ``F(x) = #{t_i <= x} / S``."""

    def __init__(self, durations):
        self.sorted_durations = np.sort(check_durations(durations))

    @property
    def size(self) -> int:
        return self.sorted_durations.size

    def __call__(self, x):
        counts = np.searchsorted(self.sorted_durations, x, side="right")
        out = counts / self.size
        return float(out) if np.ndim(out) == 0 else out

    def sf(self, x):
        counts = self.size - np.searchsorted(self.sorted_durations, x, side="right")
        out = counts / self.size
        return float(out) if np.ndim(out) == 0 else out

    def inverse(self, p):
        """Smallest observed ``x`` with ``F(x) >= p``."""
        idx = np.ceil(np.asarray(p) * self.size - 1e-12).astype(int) - 1
        idx = np.clip(idx, 0, self.size - 1)
        return self.sorted_durations[idx]

    def __repr__(self):
        return f"EmpiricalCdf(S={self.size})"


def empirical_cdf(samples) -> EmpiricalCdf:
    return EmpiricalCdf(samples)


def _log_survival(cdf, x):
    if hasattr(cdf, "logsf"):
        return np.asarray(cdf.logsf(x), dtype=np.float64)
    if hasattr(cdf, "sf"):
        surv = np.asarray(cdf.sf(x), dtype=np.float64)
    else:
        surv = 1.0 - np.asarray(cdf(x), dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(np.clip(surv, 0.0, 1.0))


def conditional_failure(cdf, t, tau):
    """Probability of blocking within ``tau`` after surviving ``t``.

    ``F_t(tau) = (F(t + tau) - F(t)) / (1 - F(t))``, clipped to [0, 1].
    Raises :class:`ConditioningError` when ``F(t) = 1``.
    """
    log_st = float(_log_survival(cdf, t))
    if log_st == -math.inf:
        raise ConditioningError(f"F({t}) = 1: cannot condition on survival to t")
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    if hasattr(cdf, "logsf"):
        value = -np.expm1(_log_survival(cdf, t + tau) - log_st)
    else:
        # direct ratio: exact for step CDFs, no log round-off
        f_t = cdf(t)
        value = (np.asarray(cdf(t + tau), dtype=np.float64) - f_t) / (1.0 - f_t)
    value = np.clip(value, 0.0, 1.0)
    value = np.where(tau == 0, 0.0, value)
    return float(value) if value.ndim == 0 else value


def solve_tau_star(cdf, t, epsilon, *, horizon=None, xtol=1e-9) -> TauStar:
    """Largest ``tau`` with ``F_t(tau) <= epsilon``.

    Step CDFs (:class:`EmpiricalCdf`) are inverted exactly: the result is the
    first observed duration whose CDF exceeds ``eps + (1 - eps) F(t)``, minus
    ``t`` (the supremum of the feasible set). Other CDFs are bracketed by
    doubling and bisected to ``xtol`` seconds.

    ``horizon`` bounds the search; it defaults to 100 x the largest observed
    duration for empirical CDFs and to a very large range otherwise. If the
    constraint still holds at the horizon, the horizon is returned with
    status ``"saturated"``.
    """
    epsilon = check_probability(epsilon, "epsilon")
    log_st = float(_log_survival(cdf, t))
    if log_st == -math.inf:
        raise ConditioningError(f"F({t}) = 1: cannot condition on survival to t")

    if isinstance(cdf, EmpiricalCdf):
        target = epsilon + (1.0 - epsilon) * cdf(t)
        xs = cdf.sorted_durations
        above = np.flatnonzero(np.arange(1, xs.size + 1) / xs.size > target)
        limit = 100.0 * xs[-1] if horizon is None else float(horizon)
        if above.size == 0 or xs[above[0]] - t > limit:
            return TauStar(limit, "saturated")
        return TauStar(max(float(xs[above[0]]) - t, 0.0))

    log_keep = math.log1p(-epsilon)

    def feasible(tau):
        return float(_log_survival(cdf, t + tau)) - log_st >= log_keep

    if horizon is not None:
        hi = float(horizon)
        if feasible(hi):
            return TauStar(hi, "saturated")
    else:
        hi = max(abs(t), 1.0)
        while feasible(hi):
            hi *= 2.0
            if hi > 1e15:
                return TauStar(hi, "saturated")
    return TauStar(bisect_last(feasible, 0.0, hi, xtol))
