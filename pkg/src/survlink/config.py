"""Experiment configuration: one INI file with a section per stage.

``paper.cfg`` (shipped with the package) holds the reference constants and
doubles as a template. Every value is validated on load; problems raise
:class:`ConfigurationError` naming the section and key.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .channel import FadingConfig
from .datadriven import TrainConfig
from .evaluation import ESTIMATORS, SweepSpec
from .exceptions import ConfigurationError

__all__ = ["DataConfig", "ExperimentConfig", "load_config", "default_config_text"]


@dataclass(frozen=True)
class DataConfig:
    thresholds_db: tuple = (-8.0,)
    train_size: int = 10000
    test_size: int = 30000
    seed: int = 0
    slot_aggregate: bool = False

    @property
    def train_seed(self) -> int:
        return 2 * self.seed + 1

    @property
    def test_seed(self) -> int:
        return 2 * self.seed + 2


@dataclass
class ExperimentConfig:
    fading: FadingConfig
    data: DataConfig
    sweep: SweepSpec
    output_dir: Path = Path("results")
    curve_points: int = 200
    source: str = "<defaults>"
    weibull_max_iter: int = 200
    extra: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, data=replace(self.data, seed=int(seed)))


def default_config_text() -> str:
    return resources.files("survlink").joinpath("paper.cfg").read_text()


class _Section:
    def __init__(self, parser, name):
        self.parser = parser
        self.name = name

    def _raw(self, key):
        if not self.parser.has_option(self.name, key):
            return None
        raw = self.parser.get(self.name, key).strip()
        return raw or None

    def _fail(self, key, msg):
        raise ConfigurationError(f"[{self.name}] {key}: {msg}")

    def get(self, key, kind, default):
        raw = self._raw(key)
        if raw is None:
            return default
        try:
            return kind(raw)
        except ValueError:
            self._fail(key, f"cannot parse {raw!r} as {kind.__name__}")

    def flag(self, key, default):
        if self._raw(key) is None:
            return default
        try:
            return self.parser.getboolean(self.name, key)
        except ValueError:
            self._fail(key, "expected true/false")

    def items(self, key, kind, default):
        raw = self._raw(key)
        if raw is None:
            return tuple(default)
        try:
            return tuple(kind(p.strip()) for p in raw.split(",") if p.strip())
        except ValueError:
            self._fail(key, f"cannot parse list {raw!r}")


def _positive_int(value, where):
    if value < 1:
        raise ConfigurationError(f"{where} must be a positive integer, got {value}")
    return value


def load_config(path=None, *, text=None) -> ExperimentConfig:
    """Parse and validate an experiment file (``paper.cfg`` when both are None)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if text is not None:
        source = "<text>"
    elif path is not None:
        source = os.fspath(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {source}: {exc}") from exc
    else:
        source = "paper.cfg"
        text = default_config_text()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc

    sec = {name: _Section(parser, name) for name in ("fading", "data", "weibull", "mlp", "eval",
                                                     "output")}
    known = set(sec)
    unknown = [s for s in parser.sections() if s not in known]
    if unknown:
        raise ConfigurationError(f"{source}: unknown section(s) {unknown}")

    f = sec["fading"]
    try:
        fading = FadingConfig(
            sample_rate_hz=f.get("sample_rate_hz", float, 4000.0),
            max_doppler_hz=f.get("max_doppler_hz", float, None),
            num_sinusoids=f.get("num_sinusoids", int, 32),
            duration_s=f.get("duration_s", float, 10.0),
            slot_duration_s=f.get("slot_duration_s", float, 1e-3),
            seed=0,
            tx_power_scale=f.get("tx_power_scale", float, 1.0),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"[fading] {exc}") from exc

    d = sec["data"]
    data = DataConfig(
        thresholds_db=d.items("thresholds_db", float, (-8.0,)),
        train_size=_positive_int(d.get("train_size", int, 10000), "[data] train_size"),
        test_size=_positive_int(d.get("test_size", int, 30000), "[data] test_size"),
        seed=d.get("seed", int, 0),
        slot_aggregate=d.flag("slot_aggregate", False),
    )
    if not data.thresholds_db:
        raise ConfigurationError("[data] thresholds_db must list at least one threshold")
    if data.seed < 0:
        raise ConfigurationError("[data] seed must be nonnegative")

    w, m, e = sec["weibull"], sec["mlp"], sec["eval"]
    try:
        train = TrainConfig(
            epochs=m.get("epochs", int, 400),
            learning_rate=m.get("learning_rate", float, 0.05),
            momentum=m.get("momentum", float, 0.9),
            decay=m.get("decay", float, 0.01),
            batch_size=m.get("batch_size", int, 32),
            patience=m.get("patience", int, 60),
            seed=m.get("seed", int, 0),
            refine_iter=m.get("refine_iter", int, 2000),
        )
        spec = SweepSpec(
            sample_sizes=e.items("sample_sizes", int, (100, 1000, 10000)),
            epsilons=e.items("epsilons", float, (1e-3, 1e-2, 0.05, 0.1, 0.2)),
            observation_times=e.items("observation_times", float, (0.01, 0.3, 1.0)),
            thresholds_db=data.thresholds_db,
            seeds=e.items("seeds", int, (0,)),
            estimators=e.items("estimators", str, ESTIMATORS),
            mlp_orders=m.items("orders", int, (1,)),
            mlp_train=train,
            mlp_input_mode=m.get("input_mode", str, "remaining"),
            mlp_grid_step=m.get("grid_step", float, None),
            confidence=e.flag("confidence", True),
            gamma=w.get("gamma", float, 0.95),
            df_mode=w.get("df_mode", str, "paper"),
            delta=w.get("delta", float, None),
            grid_size=w.get("grid_size", int, 21),
        )
    except ValueError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    _check_sweep(spec, data)

    out = sec["output"]
    return ExperimentConfig(
        fading=fading,
        data=data,
        sweep=spec,
        output_dir=Path(out.get("directory", str, "results")),
        curve_points=_positive_int(out.get("curve_points", int, 200), "[output] curve_points"),
        source=source,
        weibull_max_iter=_positive_int(w.get("max_iter", int, 200), "[weibull] max_iter"),
    )


def _check_sweep(spec: SweepSpec, data: DataConfig):
    if spec.df_mode not in ("paper", "profile"):
        raise ConfigurationError(f"[weibull] df_mode must be 'paper' or 'profile', got {spec.df_mode!r}")
    if spec.mlp_input_mode not in ("remaining", "absolute"):
        raise ConfigurationError(f"[mlp] input_mode must be 'remaining' or 'absolute', "
                                 f"got {spec.mlp_input_mode!r}")
    if not 0.0 < spec.gamma < 1.0:
        raise ConfigurationError(f"[weibull] gamma must lie in (0, 1), got {spec.gamma}")
    if spec.grid_size < 1:
        raise ConfigurationError("[weibull] grid_size must be positive")
    if any(n < 1 for n in spec.mlp_orders):
        raise ConfigurationError("[mlp] orders must be positive integers")
    if any(not 0.0 < eps < 1.0 for eps in spec.epsilons):
        raise ConfigurationError("[eval] epsilons must lie in (0, 1)")
    if any(t < 0 for t in spec.observation_times):
        raise ConfigurationError("[eval] observation_times must be nonnegative")
    too_big = [s for s in spec.sample_sizes if not 1 <= s <= data.train_size]
    if too_big:
        raise ConfigurationError(
            f"[eval] sample_sizes {too_big} outside 1..train_size={data.train_size}"
        )
