"""Model-based estimator: a two-parameter Weibull survival model.

Durations are modelled as ``F(t) = 1 - exp(-(t/lam)^k)``. Parameters come
from maximum likelihood, solved in ``(log lam, log k)`` so the search is
unconstrained. Confidence limits on the reliable transmission duration use
likelihood-ratio bounds over a grid of shape priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._roots import bisect_root
from ._validation import check_durations, check_probability
from .exceptions import DegenerateDataError, NoBandError
from .special import chi2_quantile, log_gamma_upper
from .survival import TauStar

__all__ = [
    "WeibullParams",
    "FitReport",
    "ConfidenceBand",
    "WeibullSurvival",
    "weibull_cdf",
    "weibull_pdf",
    "neg_log_likelihood",
    "nll_gradient",
    "fit_mle",
    "cond_failure_weibull",
    "tau_star_weibull",
    "conditional_moment",
    "remaining_mean",
    "remaining_variance",
    "confidence_bounds_tau",
    "sample_weibull",
]


@dataclass(frozen=True)
class WeibullParams:
    scale: float
    shape: float

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise ValueError(f"scale and shape must be positive, got ({self.scale}, {self.shape})")
        if not (math.isfinite(self.scale) and math.isfinite(self.shape)):
            raise ValueError("scale and shape must be finite")

    # A WeibullParams can be handed to the generic survival-core solvers.
    def __call__(self, t):
        return weibull_cdf(self, t)

    def sf(self, t):
        return np.exp(self.logsf(t))

    def logsf(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = -np.power(np.maximum(t, 0.0) / self.scale, self.shape)
        return float(out) if out.ndim == 0 else out


@dataclass
class FitReport:
    params_hat: WeibullParams
    nll_at_hat: float
    iterations: int
    converged: bool
    grad_norm: float

    def to_text(self) -> str:
        return _kv_block({
            "scale": self.params_hat.scale,
            "shape": self.params_hat.shape,
            "nll": self.nll_at_hat,
            "iterations": self.iterations,
            "converged": str(self.converged).lower(),
            "grad_norm": self.grad_norm,
        })


@dataclass
class ConfidenceBand:
    tau_low: float
    tau_hat: float
    tau_high: float
    gamma: float
    df: int
    delta: float
    grid_size: int
    priors_used: int

    @property
    def width(self) -> float:
        return self.tau_high - self.tau_low

    def to_text(self) -> str:
        return _kv_block({
            "tau_low": self.tau_low,
            "tau_hat": self.tau_hat,
            "tau_high": self.tau_high,
            "gamma": self.gamma,
            "df": self.df,
            "delta": self.delta,
            "grid_size": self.grid_size,
            "priors_used": self.priors_used,
        })


def _kv_block(items) -> str:
    return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in items.items())


def _as_params(params) -> WeibullParams:
    if isinstance(params, WeibullParams):
        return params
    scale, shape = params
    return WeibullParams(float(scale), float(shape))


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def weibull_cdf(params, t):
    p = _as_params(params)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return _scalar_or_array(-np.expm1(-np.power(t / p.scale, p.shape)))


def weibull_pdf(params, t):
    p = _as_params(params)
    t = np.asarray(t, dtype=np.float64)
    z = t / p.scale
    return _scalar_or_array(p.shape / p.scale * np.power(z, p.shape - 1) * np.exp(-np.power(z, p.shape)))


def sample_weibull(params, size, rng=None):
    """Inverse-transform draws ``lam * (-log U)^(1/k)``."""
    p = _as_params(params)
    rng = np.random.default_rng(rng)
    u = rng.random(size)
    return p.scale * np.power(-np.log1p(-u), 1.0 / p.shape)


# -- likelihood -------------------------------------------------------------

class _LogData:
    """Sufficient pieces of a duration sample for repeated NLL evaluation."""

    def __init__(self, samples):
        t = check_durations(samples)
        self.log_t = np.log(t)
        self.n = t.size
        self.sum_log_t = float(np.sum(self.log_t))

    def nll(self, log_scale, log_shape):
        k = math.exp(log_shape)
        log_z = k * (self.log_t - log_scale)
        return float(-self.n * log_shape + self.n * k * log_scale
                     - (k - 1.0) * self.sum_log_t + np.sum(np.exp(log_z)))

    def derivatives(self, log_scale, log_shape):
        """NLL, gradient and Hessian in ``(log lam, log k)``."""
        k = math.exp(log_shape)
        ell = self.log_t - log_scale
        z = np.exp(k * ell)
        sz = float(np.sum(z))
        szl = float(np.dot(z, ell))
        szll = float(np.dot(z * ell, ell))
        sl = self.sum_log_t - self.n * log_scale
        value = -self.n * log_shape + self.n * k * log_scale - (k - 1.0) * self.sum_log_t + sz
        g_a = k * (self.n - sz)
        g_b = -self.n - k * sl + k * szl
        h_aa = k * k * sz
        h_ab = g_a - k * k * szl
        h_bb = -k * sl + k * szl + k * k * szll
        return value, np.array([g_a, g_b]), np.array([[h_aa, h_ab], [h_ab, h_bb]])

    def log_sum_pow(self, k):
        """``log sum_i t_i^k``."""
        return float(logsumexp(k * self.log_t))

    def concentrated_nll(self, log_scale, k, log_sum_pow):
        """NLL at shape ``k`` given ``log sum t_i^k`` precomputed: O(1) per call."""
        return (-self.n * math.log(k) + self.n * k * log_scale - (k - 1.0) * self.sum_log_t
                + math.exp(log_sum_pow - k * log_scale))


def neg_log_likelihood(params, samples) -> float:
    """``-sum_i log f(t_i)`` for the Weibull density with ``params``."""
    p = _as_params(params)
    return _LogData(samples).nll(math.log(p.scale), math.log(p.shape))


def nll_gradient(params, samples, *, log_coords=False) -> np.ndarray:
    """Analytic gradient of :func:`neg_log_likelihood`.

    With respect to ``(lam, k)`` by default, or to ``(log lam, log k)``.
    """
    p = _as_params(params)
    _, grad, _ = _LogData(samples).derivatives(math.log(p.scale), math.log(p.shape))
    if log_coords:
        return grad
    return grad / np.array([p.scale, p.shape])


def _initial_guess(log_t) -> WeibullParams:
    # Var(log T) = pi^2 / (6 k^2) for a Weibull variable
    sd = float(np.std(log_t))
    k0 = math.pi / (math.sqrt(6.0) * sd)
    mean = float(np.mean(np.exp(log_t)))
    return WeibullParams(mean / math.gamma(1.0 + 1.0 / k0), k0)


def fit_mle(samples, init=None, *, max_iter=200, gtol=1e-8) -> FitReport:
    """Maximum-likelihood Weibull fit.

    Damped Newton steps in ``(log lam, log k)`` with a backtracking line
    search; whenever the Hessian is not positive definite the step falls
    back to steepest descent. Converged means the log-coordinate gradient
    norm dropped below ``gtol``. On non-convergence the best iterate is
    returned with ``converged=False``.
    """
    t = check_durations(samples)
    if t.size < 2:
        raise DegenerateDataError(f"need at least 2 samples to fit, got {t.size}")
    if np.ptp(t) == 0:
        raise DegenerateDataError("all samples identical: the shape estimate diverges")
    data = _LogData(t)
    start = _initial_guess(data.log_t) if init is None else _as_params(init)
    x = np.array([math.log(start.scale), math.log(start.shape)])
    value, grad, hess = data.derivatives(*x)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.linalg.norm(grad) < gtol:
            iterations -= 1
            break
        newton = True
        try:
            chol = np.linalg.cholesky(hess)
            step = -np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        except np.linalg.LinAlgError:
            newton = False
            step = -grad / max(1.0, float(np.linalg.norm(grad)))
        slope = float(grad @ step)
        if slope >= 0:
            newton = False
            step = -grad / max(1.0, float(np.linalg.norm(grad)))
            slope = float(grad @ step)
        if newton and float(np.linalg.norm(step)) < 1e-6:
            # NLL differences here sit below float64 resolution, so Armijo is
            # meaningless; a full Newton step is kept if it shrinks the gradient
            trial_value, trial_grad, trial_hess = data.derivatives(*(x + step))
            if np.linalg.norm(trial_grad) < np.linalg.norm(grad):
                x = x + step
                value, grad, hess = trial_value, trial_grad, trial_hess
                continue
            break
        alpha = 1.0
        while True:
            trial = x + alpha * step
            trial_value = data.nll(*trial)
            if math.isfinite(trial_value) and trial_value <= value + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                trial = None
                break
        if trial is None:
            break
        x = trial
        value, grad, hess = data.derivatives(*x)
    grad_norm = float(np.linalg.norm(grad))
    params = WeibullParams(math.exp(x[0]), math.exp(x[1]))
    return FitReport(params, float(value), iterations, grad_norm < gtol, grad_norm)


# -- closed forms -------------------------------------------------------------

def cond_failure_weibull(params, t, tau):
    """``1 - exp((t/lam)^k - ((t+tau)/lam)^k)``."""
    p = _as_params(params)
    tau = np.asarray(tau, dtype=np.float64)
    if t < 0 or np.any(tau < 0):
        raise ValueError("t and tau must be nonnegative")
    value = -np.expm1((t / p.scale) ** p.shape - np.power((t + tau) / p.scale, p.shape))
    return _scalar_or_array(value)


def tau_star_weibull(params, t, epsilon) -> float:
    """``lam * ((t/lam)^k - ln(1 - eps))^(1/k) - t``."""
    p = _as_params(params)
    epsilon = check_probability(epsilon, "epsilon")
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = (t / p.scale) ** p.shape
    extra = -math.log1p(-epsilon)
    if t > 0 and extra < 1e-8 * x:
        # t + tau* - t loses digits; expand around x instead
        return t * math.expm1(math.log1p(extra / x) / p.shape)
    return p.scale * (x + extra) ** (1.0 / p.shape) - t


def conditional_moment(params, t, order) -> float:
    """``E[(t + tau)^N]`` given survival to ``t``.

    Equals ``lam^N exp((t/lam)^k) Gamma((t/lam)^k; 1 + N/k)``; evaluated as
    one exponential of a log sum so large ``(t/lam)^k`` does not overflow.
    """
    p = _as_params(params)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if int(order) != order or order < 1:
        raise ValueError(f"moment order must be a positive integer, got {order}")
    x = (t / p.scale) ** p.shape
    a = 1.0 + order / p.shape
    return math.exp(order * math.log(p.scale) + x + log_gamma_upper(a, x))


def remaining_mean(params, t) -> float:
    """``E[t + tau] - t``."""
    return conditional_moment(params, t, 1) - t


def remaining_variance(params, t) -> float:
    """``E[(t + tau)^2] - E[t + tau]^2``."""
    m1 = conditional_moment(params, t, 1)
    return conditional_moment(params, t, 2) - m1 * m1


# -- likelihood-ratio bounds on tau* ------------------------------------------

def _resolve_df(df_mode, n):
    if df_mode == "paper":
        return int(n)
    if df_mode == "profile":
        return 1
    if isinstance(df_mode, (int, np.integer)) and df_mode > 0:
        return int(df_mode)
    raise ValueError(f"df_mode must be 'paper', 'profile' or a positive int, got {df_mode!r}")


def confidence_bounds_tau(
    samples,
    fit: FitReport,
    t,
    epsilon,
    gamma=0.95,
    delta=None,
    grid_size=21,
    df_mode="paper",
    *,
    xtol=1e-9,
) -> ConfidenceBand:
    """Likelihood-ratio confidence band on the reliable duration ``tau*``.

    For each shape prior ``k`` on an evenly spaced grid over
    ``[k_hat - delta, k_hat + delta]`` the scale is tied to ``tau`` by
    ``lam(tau, k) = ((t^k - (t+tau)^k) / ln(1-eps))^(1/k)`` and the equation
    ``NLL(lam(tau, k), k) - NLL(theta_hat) = chi2_{gamma,df} / 2`` is solved
    for its two roots by bracketing and bisection. The band spans all roots.
    Priors whose minimum NLL already exceeds the level are skipped.

    ``df_mode="paper"`` uses ``df = S`` (sample count); ``"profile"`` uses
    ``df = 1``, the usual profile-likelihood calibration. Bisection stops at
    ``xtol`` seconds or ``xtol`` relative to the prior's ``tau``, whichever is
    tighter.
    """
    epsilon = check_probability(epsilon, "epsilon")
    gamma = check_probability(gamma, "gamma")
    if t < 0:
        raise ValueError("t must be nonnegative")
    data = _LogData(samples)
    k_hat = fit.params_hat.shape
    delta = 0.2 * k_hat if delta is None else float(delta)
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid_size = int(grid_size)
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    df = _resolve_df(df_mode, data.n)
    half_level = 0.5 * chi2_quantile(gamma, df)
    log_neg_ln_keep = math.log(-math.log1p(-epsilon))
    tau_hat = tau_star_weibull(fit.params_hat, t, epsilon)

    lsp_hat = data.log_sum_pow(k_hat)
    nll_hat = min(fit.nll_at_hat, _profile_min(data, k_hat, lsp_hat))

    if grid_size == 1:
        priors = np.array([k_hat])
    else:
        priors = np.linspace(k_hat - delta, k_hat + delta, grid_size)
        if grid_size % 2:
            priors[grid_size // 2] = k_hat
    priors = priors[priors > 0]

    roots = []
    used = 0
    for k in priors:
        lsp = lsp_hat if k == k_hat else data.log_sum_pow(k)
        log_scale_star = (lsp - math.log(data.n)) / k
        centre = k == k_hat
        # the MLE always lies inside its own region; round-off must not drop it
        if not centre and data.concentrated_nll(log_scale_star, k, lsp) - nll_hat >= half_level:
            continue

        def gap(tau, k=k, lsp=lsp):
            if tau <= 0:
                return math.inf
            if t > 0:
                # log((t+tau)^k - t^k), stable for tau << t and tau >> t
                inner = k * math.log(t + tau) + math.log(-math.expm1(-k * math.log1p(tau / t)))
            else:
                inner = k * math.log(tau)
            log_scale = (inner - log_neg_ln_keep) / k
            return data.concentrated_nll(log_scale, k, lsp) - nll_hat - half_level

        tau_k = tau_star_weibull(WeibullParams(math.exp(log_scale_star), k), t, epsilon)
        tol = min(xtol, xtol * tau_k)
        if gap(tau_k) >= 0:
            # level within round-off of the prior's minimum: interval is a point
            roots.extend([tau_k, tau_k])
            used += 1
            continue
        lo = _expand(gap, tau_k, 0.5)
        hi = _expand(gap, tau_k, 2.0)
        if lo is None or hi is None:
            continue
        roots.append(bisect_root(gap, lo, tau_k, tol))
        roots.append(bisect_root(gap, tau_k, hi, tol))
        used += 1
    if not used:
        raise NoBandError("no shape prior produced a bracketed confidence root")
    return ConfidenceBand(
        tau_low=float(min(min(roots), tau_hat)),
        tau_hat=tau_hat,
        tau_high=float(max(max(roots), tau_hat)),
        gamma=gamma,
        df=df,
        delta=delta,
        grid_size=grid_size,
        priors_used=used,
    )


def _profile_min(data, k, lsp):
    return data.concentrated_nll((lsp - math.log(data.n)) / k, k, lsp)


def _expand(f, start, factor, max_steps=200):
    x = start
    for _ in range(max_steps):
        x *= factor
        if x <= 0 or not math.isfinite(x):
            return None
        if f(x) > 0:
            return x
    return None


# -- estimator --------------------------------------------------------------

class WeibullSurvival(BaseEstimator):
    """Weibull survival model of non-blocking durations, sklearn style.

    Parameters
    ----------
    max_iter : int
        Newton iterations allowed in the maximum-likelihood fit.
    gtol : float
        Gradient-norm tolerance (log-parameter coordinates).
    init : tuple of (scale, shape) or None
        Starting point; ``None`` uses a moment-based guess.

    Attributes
    ----------
    scale_, shape_ : float
        Fitted Weibull parameters.
    fit_report_ : FitReport
    """

    def __init__(self, max_iter=200, gtol=1e-8, init=None):
        self.max_iter = max_iter
        self.gtol = gtol
        self.init = init

    def fit(self, X, y=None):
        X = check_durations(X)
        report = fit_mle(X, self.init, max_iter=self.max_iter, gtol=self.gtol)
        self.durations_ = X
        self.fit_report_ = report
        self.params_ = report.params_hat
        self.scale_ = report.params_hat.scale
        self.shape_ = report.params_hat.shape
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        return self

    def cdf(self, t):
        check_is_fitted(self)
        return weibull_cdf(self.params_, t)

    def predict_failure(self, tau, t=0.0):
        """Conditional failure probability ``F_t(tau)``."""
        check_is_fitted(self)
        return cond_failure_weibull(self.params_, t, tau)

    def tau_star(self, t, epsilon) -> TauStar:
        check_is_fitted(self)
        return TauStar(tau_star_weibull(self.params_, t, epsilon))

    def confidence_band(self, t, epsilon, gamma=0.95, delta=None, grid_size=21, df_mode="paper"):
        check_is_fitted(self)
        return confidence_bounds_tau(self.durations_, self.fit_report_, t, epsilon,
                                     gamma, delta, grid_size, df_mode)

    def moment(self, t, order):
        check_is_fitted(self)
        return conditional_moment(self.params_, t, order)

    def remaining_mean(self, t):
        check_is_fitted(self)
        return remaining_mean(self.params_, t)

    def remaining_variance(self, t):
        check_is_fitted(self)
        return remaining_variance(self.params_, t)

    def score(self, X, y=None):
        """Mean log-likelihood per sample."""
        check_is_fitted(self)
        X = check_durations(X)
        return -neg_log_likelihood(self.params_, X) / X.size
