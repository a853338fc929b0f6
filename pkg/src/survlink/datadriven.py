"""Data-driven estimator: an MLP regression of the conditional failure curve.

Training tuples pair each remaining duration ``tau_i = t_i - t`` (over the
samples that survived past ``t``) with its empirical CDF rank. A small MLP
with polynomial input features ``(tau, tau^2, ..., tau^n)`` learns the curve
by mean-squared error. Predictions are clipped to [0, 1] and made monotone
by a running maximum before they are inverted or integrated.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_durations, check_probability
from .exceptions import InsufficientDataError, SchemaVersionError, TrainingError
from .survival import TauStar

__all__ = [
    "HIDDEN_SIZES",
    "LabeledSet",
    "TrainConfig",
    "MlpModel",
    "MLPFailureRegressor",
    "DataDrivenSurvival",
    "SaturationWarning",
    "build_training_set",
    "train_mlp",
    "predict_failure",
    "tau_star_mlp",
    "moments_numeric",
    "remaining_moments_numeric",
    "loss_and_gradients",
]

HIDDEN_SIZES = (10, 6)
MODEL_FORMAT = "survlink-mlp"
MODEL_VERSION = 1


class SaturationWarning(UserWarning):
    """A curve never reached the level needed inside the search range."""


@dataclass
class LabeledSet:
    """Training tuples ``(tau_i, s_i)`` for one observation time ``t``."""

    tau: np.ndarray
    labels: np.ndarray
    t: float
    order: int = 1

    @property
    def size(self) -> int:
        return int(self.tau.size)


@dataclass
class TrainConfig:
    """Mini-batch SGD with momentum and ``1 / (1 + decay * epoch)`` step decay.

    ``refine_iter`` full-batch L-BFGS iterations follow the SGD phase; SGD
    alone stalls about 1e-2 away from the labels near ``tau = 0``, which is
    exactly where small outage targets are read off. Set it to 0 to skip.
    """

    epochs: int = 400
    learning_rate: float = 0.05
    momentum: float = 0.9
    decay: float = 0.01
    batch_size: int = 32
    patience: int = 60
    tol: float = 1e-9
    seed: int = 0
    refine_iter: int = 2000

    def __post_init__(self):
        for name in ("epochs", "batch_size", "patience"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if int(self.refine_iter) < 0:
            raise ValueError("refine_iter must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.decay < 0 or self.tol < 0:
            raise ValueError("decay and tol must be nonnegative")


def build_training_set(samples, t, order=1) -> LabeledSet:
    """Empirical-CDF labels of the samples that survived to ``t``.

    Keeps ``t_i >= t``, sorts them, and labels the ``j``-th smallest
    ``j / S_t``.

    >>> ls = build_training_set([0.1, 0.2, 0.3, 0.4], 0.25)
    >>> ls.tau.round(12).tolist(), ls.labels.tolist()
    ([0.05, 0.15], [0.5, 1.0])
    """
    x = check_durations(samples)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if int(order) != order or order < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    kept = np.sort(x[x >= t])
    if kept.size < 2:
        raise InsufficientDataError(
            f"only {kept.size} sample(s) survive t={t}; need at least 2"
        )
    labels = np.arange(1, kept.size + 1) / kept.size
    return LabeledSet(kept - t, labels, float(t), int(order))


# -- network ----------------------------------------------------------------

def _poly(u, order):
    u = np.asarray(u, dtype=np.float64).reshape(-1, 1)
    return np.power(u, np.arange(1, order + 1))


@dataclass
class MlpModel:
    """Weights of an ``order -> 10 -> 6 -> 1`` regression network.

    The network input is the remaining duration ``tau`` (``input_mode=
    "remaining"``) or the absolute duration ``t + tau`` (``"absolute"``),
    expanded to powers ``1..order`` and standardized with the stored
    ``feature_mean`` / ``feature_scale``.
    """

    weights: list
    biases: list
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    order: int
    observation_time: float = 0.0
    input_mode: str = "remaining"
    meta: dict = field(default_factory=dict)

    def features(self, tau):
        u = np.asarray(tau, dtype=np.float64)
        if self.input_mode == "absolute":
            u = u + self.observation_time
        return (_poly(u, self.order) - self.feature_mean) / self.feature_scale

    def raw_output(self, tau):
        """Network output after the saturating-linear unit, in [-1, 1]."""
        return _forward(self.weights, self.biases, self.features(tau))[0][:, 0]

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in [*self.weights, *self.biases, self.feature_mean, self.feature_scale]:
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "layer_sizes": [self.order, *HIDDEN_SIZES, 1],
            "order": self.order,
            "observation_time": self.observation_time,
            "input_mode": self.input_mode,
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MlpModel:
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise SchemaVersionError(
                f"unsupported model format {d.get('format')!r} v{d.get('version')!r}"
            )
        return cls(
            weights=[np.array(w, dtype=np.float64) for w in d["weights"]],
            biases=[np.array(b, dtype=np.float64) for b in d["biases"]],
            feature_mean=np.array(d["feature_mean"], dtype=np.float64),
            feature_scale=np.array(d["feature_scale"], dtype=np.float64),
            order=int(d["order"]),
            observation_time=float(d["observation_time"]),
            input_mode=d["input_mode"],
            meta=d.get("meta", {}),
        )

    def save(self, path) -> None:
        # json writes floats with repr(), so the round trip is exact
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> MlpModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _forward(weights, biases, X):
    """Returns ``(output, cache)``; the output unit is ``clip(z, -1, 1)``."""
    activations = [X]
    pre = []
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        pre.append(z)
        a = np.clip(z, -1.0, 1.0) if i == last else np.maximum(z, 0.0)
        activations.append(a)
    return a, (activations, pre)


def loss_and_gradients(weights, biases, X, y):
    """Mean-squared error and its gradients by backpropagation."""
    out, (activations, pre) = _forward(weights, biases, X)
    n = X.shape[0]
    resid = out[:, 0] - y
    loss = float(np.mean(resid * resid))
    z_out = pre[-1]
    delta = (2.0 / n) * resid[:, None] * ((z_out > -1.0) & (z_out < 1.0))
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i].T) * (pre[i - 1] > 0)
    return loss, grads_w, grads_b


# first-layer kinks start at these quantiles of the (normalized) tau feature,
# dense near 0 where the curve bends hardest
_KINK_QUANTILES = (0.0005, 0.002, 0.005, 0.01, 0.03, 0.1, 0.25, 0.5, 0.75, 0.95)


def _init_params(order, rng, target_mean, X=None):
    sizes = [order, *HIDDEN_SIZES, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.full(fan_out, 0.1))
    if X is not None:
        weights[0] *= 0.1
        weights[0][0, :] = 1.0
        biases[0] = -np.quantile(X[:, 0], _KINK_QUANTILES[: sizes[1]])
    weights[-1] *= 0.1
    biases[-1][:] = target_mean
    return weights, biases


def _refine(weights, biases, X, y, maxiter):
    """Full-batch L-BFGS on the MSE, starting from the SGD result."""
    shapes = [a.shape for a in (*weights, *biases)]
    sizes = [int(np.prod(sh)) for sh in shapes]
    split = np.cumsum(sizes)[:-1]
    nw = len(weights)

    def unpack(p):
        parts = [a.reshape(sh) for a, sh in zip(np.split(p, split), shapes)]
        return parts[:nw], parts[nw:]

    def fun(p):
        w, b = unpack(p)
        loss, gw, gb = loss_and_gradients(w, b, X, y)
        return loss, np.concatenate([g.ravel() for g in (*gw, *gb)])

    p0 = np.concatenate([a.ravel() for a in (*weights, *biases)])
    res = minimize(fun, p0, jac=True, method="L-BFGS-B",
                   options={"maxiter": int(maxiter), "gtol": 1e-14, "ftol": 1e-16})
    w, b = unpack(res.x)
    return float(res.fun), [a.copy() for a in w], [a.copy() for a in b]


def _fit_network(u, y, order, cfg: TrainConfig):
    """Train on inputs ``u`` (before powers) and targets ``y``."""
    raw = _poly(u, order)
    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    scale[~(scale > 0)] = 1.0
    X = (raw - mean) / scale
    rng = np.random.default_rng(cfg.seed)
    weights, biases = _init_params(order, rng, float(np.mean(y)), X)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    initial, _, _ = loss_and_gradients(weights, biases, X, y)
    best = (initial, [w.copy() for w in weights], [b.copy() for b in biases])
    history = [initial]
    stale = 0
    n = X.shape[0]
    batch = min(int(cfg.batch_size), n)
    epoch = 0
    for epoch in range(1, int(cfg.epochs) + 1):
        lr = cfg.learning_rate / (1.0 + cfg.decay * epoch)
        order_idx = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order_idx[start:start + batch]
            _, gw, gb = loss_and_gradients(weights, biases, X[idx], y[idx])
            for i in range(len(weights)):
                vel_w[i] = cfg.momentum * vel_w[i] - lr * gw[i]
                vel_b[i] = cfg.momentum * vel_b[i] - lr * gb[i]
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]
        loss = float(np.mean((_forward(weights, biases, X)[0][:, 0] - y) ** 2))
        history.append(loss)
        if not math.isfinite(loss):
            raise TrainingError(
                f"training diverged at epoch {epoch} (lr={lr:.3g}); "
                f"best finite loss {best[0]:.6g}, initial {initial:.6g}"
            )
        if loss < best[0] - cfg.tol:
            best = (loss, [w.copy() for w in weights], [b.copy() for b in biases])
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if cfg.refine_iter:
        refined = _refine(best[1], best[2], X, y, cfg.refine_iter)
        if math.isfinite(refined[0]) and refined[0] < best[0]:
            best = refined
        history.append(best[0])
    return best, mean, scale, history, epoch


def train_mlp(labeled: LabeledSet, cfg: TrainConfig | None = None, *, input_mode="remaining") -> MlpModel:
    """Fit the failure-curve network to ``labeled`` by mini-batch SGD.

    Deterministic for a given ``cfg.seed``. The returned weights are the best
    full-batch iterate, so the final training MSE never exceeds the initial
    one.
    """
    cfg = TrainConfig() if cfg is None else cfg
    if input_mode not in ("remaining", "absolute"):
        raise ValueError(f"input_mode must be 'remaining' or 'absolute', got {input_mode!r}")
    u = labeled.tau + (labeled.t if input_mode == "absolute" else 0.0)
    (loss, weights, biases), mean, scale, history, epochs = _fit_network(
        u, labeled.labels, labeled.order, cfg
    )
    return MlpModel(
        weights, biases, mean, scale, labeled.order, labeled.t, input_mode,
        meta={
            "train_mse": loss,
            "initial_mse": history[0],
            "epochs_run": epochs,
            "train_size": labeled.size,
            "max_tau": float(labeled.tau.max()),
        },
    )


# -- prediction, inversion, moments -------------------------------------------

def predict_failure(model: MlpModel, tau, *, monotone=False):
    """Predicted ``F_t(tau)`` clipped to [0, 1].

    With ``monotone=True``, ``tau`` must be ascending and a running maximum
    is applied so the result is a valid CDF on that grid.
    """
    tau = np.asarray(tau, dtype=np.float64)
    out = np.clip(model.raw_output(tau.ravel()), 0.0, 1.0)
    if monotone:
        if np.any(np.diff(tau.ravel()) < 0):
            raise ValueError("monotone rearrangement needs an ascending tau grid")
        out = np.maximum.accumulate(out)
    out = out.reshape(tau.shape)
    return float(out) if out.ndim == 0 else out


def _default_grid(model: MlpModel, grid_step, horizon):
    max_tau = float(model.meta.get("max_tau", 1.0))
    horizon = 2.0 * max_tau if horizon is None else float(horizon)
    step = horizon / 50_000 if grid_step is None else float(grid_step)
    if not (step > 0 and horizon > 0):
        raise ValueError("grid_step and horizon must be positive")
    return np.arange(0, int(math.floor(horizon / step)) + 1) * step


def tau_star_mlp(model: MlpModel, epsilon, *, grid_step=None, horizon=None) -> TauStar:
    """First grid point where the monotone prediction rises above ``epsilon``.

    Returns ``TauStar(0, "extrapolated")`` when the prediction at ``tau=0``
    already exceeds ``epsilon``, and ``TauStar(horizon, "saturated")`` when
    it never does.
    """
    epsilon = check_probability(epsilon, "epsilon")
    grid = _default_grid(model, grid_step, horizon)
    curve = predict_failure(model, grid, monotone=True)
    above = np.flatnonzero(curve > epsilon)
    if above.size == 0:
        return TauStar(float(grid[-1]), "saturated")
    if above[0] == 0:
        warnings.warn(
            f"epsilon={epsilon} is below the smallest predicted failure probability "
            f"({curve[0]:.3g}); returning tau*=0",
            SaturationWarning,
            stacklevel=2,
        )
        return TauStar(0.0, "extrapolated")
    return TauStar(float(grid[above[0]]))


def moments_numeric(failure_curve, order, delta=1e-4, horizon=None):
    """``N * int_0^inf tau^(N-1) (1 - F_t(tau)) dtau`` as an endpoint-corrected sum.

    The sum runs over ``tau = delta * k``; the ``k = 0`` term gets weight 1/2
    (trapezoid rule). ``failure_curve`` must accept an array of ``tau``.
    Without a ``horizon`` the grid extends (doubling) until the survival
    tail drops below 1e-9. A :class:`SaturationWarning` is issued if
    ``F_t(horizon) <= 1 - 1e-3``.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    max_points = 50_000_000
    if horizon is None:
        horizon = 1.0
        while True:
            tail = 1.0 - float(np.asarray(failure_curve(np.array([horizon])))[0])
            if tail < 1e-9 or horizon / delta >= max_points:
                break
            horizon *= 2.0
    k = np.arange(0, int(math.ceil(horizon / delta)) + 1)
    grid = k * delta
    surv = 1.0 - np.clip(np.asarray(failure_curve(grid), dtype=np.float64), 0.0, 1.0)
    if surv[-1] >= 1e-3:
        warnings.warn(
            f"failure curve only reaches {1 - surv[-1]:.4g} at horizon {horizon:g}; "
            "moment is truncated",
            SaturationWarning,
            stacklevel=2,
        )
    weights = np.power(grid, order - 1) * surv
    weights[0] *= 0.5
    return float(order * delta * np.sum(weights))


def remaining_moments_numeric(failure_curve, delta=1e-4, horizon=None):
    """Mean and variance of the remaining duration from a failure curve."""
    m1 = moments_numeric(failure_curve, 1, delta, horizon)
    m2 = moments_numeric(failure_curve, 2, delta, horizon)
    return m1, m2 - m1 * m1


# -- estimators ---------------------------------------------------------------

class MLPFailureRegressor(RegressorMixin, BaseEstimator):
    """The ``order -> 10 -> 6 -> 1`` regressor on its own, sklearn style.

    ``X`` holds nonnegative scalar inputs (a 1-D array or one column); ``y``
    holds targets in [0, 1]. :meth:`predict` clips to [0, 1].
    """

    def __init__(self, order=1, epochs=400, learning_rate=0.05, momentum=0.9,
                 decay=0.01, batch_size=32, patience=60, tol=1e-9, refine_iter=2000,
                 random_state=0):
        self.order = order
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.decay = decay
        self.batch_size = batch_size
        self.patience = patience
        self.tol = tol
        self.refine_iter = refine_iter
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(self.epochs, self.learning_rate, self.momentum, self.decay,
                           self.batch_size, self.patience, self.tol, self.random_state,
                           self.refine_iter)

    def fit(self, X, y):
        u = _check_inputs(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape != u.shape:
            raise ValueError(f"X and y lengths differ: {u.size} vs {y.size}")
        if u.size < 2:
            raise InsufficientDataError("need at least 2 training tuples")
        labeled = LabeledSet(u, y, 0.0, int(self.order))
        self.model_ = train_mlp(labeled, self._train_config())
        self.n_iter_ = self.model_.meta["epochs_run"]
        return self

    def predict(self, X):
        check_is_fitted(self)
        return predict_failure(self.model_, _check_inputs(X))


def _check_inputs(X):
    u = np.asarray(X, dtype=np.float64)
    if u.ndim == 2 and u.shape[1] == 1:
        u = u[:, 0]
    if u.ndim != 1:
        raise ValueError(f"expected 1-D inputs or one column, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("inputs must be finite")
    return u


class DataDrivenSurvival(BaseEstimator):
    """MLP estimate of the conditional failure curve at observation time ``t``.

    Parameters
    ----------
    t : float
        Observation time; only durations ``>= t`` are used for training.
    order : int
        Number of polynomial input features ``tau, ..., tau^order``.
    input_mode : {"remaining", "absolute"}
        Feed the network ``tau = t_i - t`` or the absolute ``t_i``.
    grid_step, horizon : float or None
        Grid used to invert and integrate the learned curve.
    epochs, learning_rate, momentum, decay, batch_size, patience, refine_iter, random_state
        Training settings, see :class:`TrainConfig`.
    """

    def __init__(self, t=0.0, order=1, input_mode="remaining", grid_step=None, horizon=None,
                 epochs=400, learning_rate=0.05, momentum=0.9, decay=0.01, batch_size=32,
                 patience=60, refine_iter=2000, random_state=0):
        self.t = t
        self.order = order
        self.input_mode = input_mode
        self.grid_step = grid_step
        self.horizon = horizon
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.decay = decay
        self.batch_size = batch_size
        self.patience = patience
        self.refine_iter = refine_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        labeled = build_training_set(X, self.t, self.order)
        cfg = TrainConfig(self.epochs, self.learning_rate, self.momentum, self.decay,
                          self.batch_size, self.patience, seed=self.random_state,
                          refine_iter=self.refine_iter)
        self.labeled_ = labeled
        self.model_ = train_mlp(labeled, cfg, input_mode=self.input_mode)
        self.n_iter_ = self.model_.meta["epochs_run"]
        return self

    def predict_failure(self, tau, monotone=False):
        check_is_fitted(self)
        return predict_failure(self.model_, tau, monotone=monotone)

    def failure_curve(self):
        """Vectorized ``tau -> F_t(tau)`` with monotone rearrangement."""
        check_is_fitted(self)
        model = self.model_

        def curve(tau):
            tau = np.asarray(tau, dtype=np.float64)
            order = np.argsort(tau, kind="stable")
            out = np.empty_like(tau)
            out[order] = predict_failure(model, tau[order], monotone=True)
            return out

        return curve

    def tau_star(self, epsilon) -> TauStar:
        check_is_fitted(self)
        return tau_star_mlp(self.model_, epsilon, grid_step=self.grid_step, horizon=self.horizon)

    def _delta(self):
        if self.grid_step is not None:
            return float(self.grid_step)
        return 2.0 * float(self.model_.meta["max_tau"]) / 50_000

    def moment(self, order):
        """Raw moment ``E[tau^N | t]`` of the remaining duration."""
        check_is_fitted(self)
        horizon = self.horizon
        if horizon is None:
            horizon = 2.0 * float(self.model_.meta["max_tau"])
        return moments_numeric(self.failure_curve(), order, self._delta(), horizon)

    def remaining_mean(self):
        return self.moment(1)

    def remaining_variance(self):
        m1 = self.moment(1)
        return self.moment(2) - m1 * m1
