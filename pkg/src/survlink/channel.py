"""Correlated Rayleigh flat-fading traces and non-blocking duration extraction.

The fading process is a statistical sum-of-sinusoids generator (Clarke
model): each quadrature branch is a sum of ``num_sinusoids`` cosines whose
Doppler shifts come from equally spaced arrival angles with a random offset
and whose phases are i.i.d. uniform. Power is ``|h|^2`` with unit mean.

Traces are produced in fixed-size blocks so hour-long traces never sit in
memory, and :class:`RunLengthCounter` consumes those blocks incrementally.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .exceptions import ConfigurationError, SchemaVersionError

__all__ = [
    "FadingConfig",
    "RssTrace",
    "SampleSet",
    "RunLengthCounter",
    "generate_rss_trace",
    "iter_rss_blocks",
    "extract_durations",
    "collect_sample_sets",
    "db_to_linear",
    "write_sample_set",
    "read_sample_set",
]

_CHUNK = 2048  # samples per sinusoid-bank evaluation
_CHUNKS_PER_BLOCK = 128
SAMPLESET_VERSION = 1
_HEADER_RE = re.compile(
    r"^# survlink durations v(?P<version>\d+)"
    r", sample_rate_hz=(?P<rate>[^,]+), threshold_db=(?P<thr>[^,]+), seed=(?P<seed>\S+)\s*$"
)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)


@dataclass(frozen=True)
class FadingConfig:
    """Parameters of one fading trace.

    ``max_doppler_hz`` defaults to ``0.423 / slot_duration_s``, i.e. a channel
    coherence time about one slot long.
    """

    sample_rate_hz: float = 4000.0
    max_doppler_hz: float | None = None
    num_sinusoids: int = 32
    duration_s: float = 10.0
    slot_duration_s: float = 1e-3
    seed: int = 0
    tx_power_scale: float = 1.0

    def __post_init__(self):
        if self.max_doppler_hz is None:
            if not self.slot_duration_s > 0:
                raise ConfigurationError("slot_duration_s must be positive")
            object.__setattr__(self, "max_doppler_hz", 0.423 / self.slot_duration_s)
        for name in ("sample_rate_hz", "max_doppler_hz", "duration_s",
                     "slot_duration_s", "tx_power_scale"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
        if int(self.num_sinusoids) != self.num_sinusoids or self.num_sinusoids < 8:
            raise ConfigurationError(
                f"num_sinusoids must be an integer >= 8, got {self.num_sinusoids!r}"
            )
        if not self.sample_rate_hz > 2 * self.max_doppler_hz:
            raise ConfigurationError(
                "sample_rate_hz must exceed twice max_doppler_hz "
                f"({self.sample_rate_hz} <= 2 * {self.max_doppler_hz})"
            )
        if not (0 <= int(self.seed) < 2**64) or int(self.seed) != self.seed:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    @property
    def num_samples(self) -> int:
        return int(math.floor(self.duration_s * self.sample_rate_hz))


@dataclass
class RssTrace:
    """Linear received power samples ``P_t`` taken at ``sample_rate_hz``."""

    samples: np.ndarray
    sample_rate_hz: float

    def __len__(self):
        return len(self.samples)


@dataclass
class SampleSet:
    """A bag of non-blocking connectivity durations in seconds."""

    durations: np.ndarray
    sample_rate_hz: float | None = None
    threshold_db: float | None = None
    seed: int | None = None

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=np.float64).ravel()
        if np.any(self.durations <= 0):
            raise ValueError("durations must be strictly positive")

    @property
    def size(self) -> int:
        return int(self.durations.size)

    def __len__(self):
        return self.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.durations, dtype=dtype)

    def subset(self, n: int, seed: int | None = None) -> SampleSet:
        """First ``n`` durations, or a seeded random subset of size ``n``."""
        if n > self.size:
            raise ValueError(f"requested {n} samples from a set of {self.size}")
        if seed is None:
            picked = self.durations[:n]
        else:
            rng = np.random.default_rng(seed)
            picked = self.durations[np.sort(rng.choice(self.size, size=n, replace=False))]
        return SampleSet(picked.copy(), self.sample_rate_hz, self.threshold_db, self.seed)


@dataclass
class _SinusoidBank:
    omegas: np.ndarray  # (2, M) rad/s for the I and Q branches
    phases: np.ndarray  # (2, M)
    amplitude: float

    @classmethod
    def from_config(cls, cfg: FadingConfig) -> _SinusoidBank:
        m = int(cfg.num_sinusoids)
        rng = np.random.default_rng(int(cfg.seed))
        offsets = rng.uniform(-np.pi, np.pi, size=2)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(2, m))
        n = np.arange(1, m + 1)
        angles_i = (2.0 * np.pi * n - np.pi + offsets[0]) / (4 * m)
        angles_q = (2.0 * np.pi * n - np.pi + offsets[1]) / (4 * m)
        wd = 2.0 * np.pi * cfg.max_doppler_hz
        omegas = np.stack([wd * np.cos(angles_i), wd * np.sin(angles_q)])
        return cls(omegas, phases, 1.0 / math.sqrt(m))


def iter_rss_blocks(cfg: FadingConfig, max_samples: int | None = None) -> Iterator[np.ndarray]:
    """Yield consecutive blocks of the power trace described by ``cfg``.

    The concatenation of all blocks equals :func:`generate_rss_trace`. Each
    sinusoid is evaluated as ``cos(w*(n0 + j)/fs + phi)`` with the block-start
    phase computed directly from ``n0`` (no phase accumulation), so drift
    cannot build up over long traces.
    """
    bank = _SinusoidBank.from_config(cfg)
    fs = float(cfg.sample_rate_hz)
    total = cfg.num_samples if max_samples is None else min(cfg.num_samples, int(max_samples))
    j = np.arange(_CHUNK) / fs
    # (branch, 2M, CHUNK): rows are cos(w j/fs) then sin(w j/fs)
    bases = [
        np.concatenate([np.cos(np.outer(w, j)), np.sin(np.outer(w, j))])
        for w in bank.omegas
    ]
    block = _CHUNK * _CHUNKS_PER_BLOCK
    scale = float(cfg.tx_power_scale)
    n0 = 0
    while n0 < total:
        n_chunks = min(_CHUNKS_PER_BLOCK, -(-(total - n0) // _CHUNK))
        starts = (n0 + _CHUNK * np.arange(n_chunks)) / fs
        power = np.zeros(n_chunks * _CHUNK)
        for w, phi, base in zip(bank.omegas, bank.phases, bases):
            theta = np.outer(starts, w) + phi
            coeff = np.concatenate([np.cos(theta), -np.sin(theta)], axis=1)
            h = (coeff @ base).ravel()
            power += h * h
        power *= bank.amplitude**2
        if scale != 1.0:
            power *= scale
        take = min(block, total - n0)
        yield power[:take]
        n0 += take


def generate_rss_trace(cfg: FadingConfig) -> RssTrace:
    """Generate the full power trace; length is ``floor(duration_s * sample_rate_hz)``."""
    blocks = list(iter_rss_blocks(cfg))
    samples = np.concatenate(blocks) if blocks else np.zeros(0)
    return RssTrace(samples, float(cfg.sample_rate_hz))


class RunLengthCounter:
    """Streaming extractor of maximal runs with power at or above a threshold.

    Feed power blocks with :meth:`update`; completed run lengths (in samples,
    or in slots when ``slot_len > 1``) accumulate in :attr:`lengths`. Runs that
    touch the first or last sample are censored unless ``censor_boundaries``
    is false, in which case they are kept truncated.

    With ``slot_len > 1`` the power is first reduced to the minimum over each
    slot of ``slot_len`` consecutive samples, so blocking is declared per slot.
    """

    def __init__(self, threshold_linear: float, slot_len: int = 1, censor_boundaries: bool = True):
        self.threshold = float(threshold_linear)
        self.slot_len = int(slot_len)
        self.censor_boundaries = censor_boundaries
        self._lengths: list[np.ndarray] = []
        self._in_run = True
        self._open_len = 0
        self._open_censored = True
        self._pending = np.zeros(0)
        self.count = 0

    def update(self, power: np.ndarray) -> None:
        power = np.asarray(power, dtype=np.float64)
        if self.slot_len > 1:
            power = np.concatenate([self._pending, power])
            usable = (power.size // self.slot_len) * self.slot_len
            self._pending = power[usable:]
            power = power[:usable].reshape(-1, self.slot_len).min(axis=1)
        if power.size == 0:
            return
        above = (power >= self.threshold).astype(np.int8)
        edges = np.diff(above, prepend=np.int8(self._in_run))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        out = []
        if self._in_run:
            if ends.size:
                first = self._open_len + ends[0]
                if first > 0 and not (self._open_censored and self.censor_boundaries):
                    out.append(np.array([first]))
                ends = ends[1:]
            else:
                self._open_len += power.size
                return
        n_closed = ends.size
        out.append(ends - starts[:n_closed])
        if starts.size > n_closed:
            self._in_run = True
            self._open_len = power.size - starts[n_closed]
            self._open_censored = False
        else:
            self._in_run = False
            self._open_len = 0
        closed = np.concatenate(out)
        if closed.size:
            self._lengths.append(closed)
            self.count += closed.size

    def finish(self) -> np.ndarray:
        """Close the stream; returns all completed run lengths."""
        if self.slot_len > 1 and self._pending.size:
            pending, self._pending = self._pending, np.zeros(0)
            self.slot_len, saved = 1, self.slot_len
            # a trailing partial slot still blocks the link if it dips below
            self.update(np.array([pending.min()]))
            self.slot_len = saved
        if self._in_run and not self.censor_boundaries and self._open_len > 0:
            self._lengths.append(np.array([self._open_len]))
            self.count += 1
        self._in_run = False
        self._open_len = 0
        return self.lengths

    @property
    def lengths(self) -> np.ndarray:
        if not self._lengths:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self._lengths).astype(np.int64)


def _slot_len(sample_rate_hz: float, slot_duration_s: float) -> int:
    n = int(round(sample_rate_hz * slot_duration_s))
    if n < 1:
        raise ConfigurationError("slot_duration_s is shorter than one sample period")
    return n


def extract_durations(
    trace: RssTrace,
    threshold_db: float | None = None,
    *,
    threshold_linear: float | None = None,
    slot_aggregate: bool = False,
    slot_duration_s: float = 1e-3,
    censor_boundaries: bool = True,
) -> SampleSet:
    """Non-blocking durations: maximal runs of ``P_t >= rho0`` in seconds.

    ``rho0`` is ``10**(threshold_db/10)`` relative to unit mean power, or
    ``threshold_linear`` when given. Runs touching either end of the trace are
    censored by default.

    >>> trace = RssTrace(np.array([0.5, 2.0, 2.0, 0.5, 2.0, 0.5]), 1.0)
    >>> extract_durations(trace, 0.0).durations
    array([2., 1.])
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    if (threshold_db is None) == (threshold_linear is None):
        raise TypeError("give exactly one of threshold_db or threshold_linear")
    rho = float(db_to_linear(threshold_db)) if threshold_linear is None else float(threshold_linear)
    fs = float(trace.sample_rate_hz)
    slot = _slot_len(fs, slot_duration_s) if slot_aggregate else 1
    counter = RunLengthCounter(rho, slot_len=slot, censor_boundaries=censor_boundaries)
    counter.update(trace.samples)
    lengths = counter.finish()
    return SampleSet(lengths * slot / fs, fs, threshold_db)


def collect_sample_sets(
    cfg: FadingConfig,
    thresholds_db: Sequence[float],
    n_samples: int | None = None,
    *,
    slot_aggregate: bool = False,
    censor_boundaries: bool = True,
) -> dict[float, SampleSet]:
    """Stream one trace and extract durations for several thresholds at once.

    Generation stops early once every threshold has ``n_samples`` durations
    (the first ``n_samples`` are kept), otherwise at ``cfg.duration_s``.
    """
    fs = float(cfg.sample_rate_hz)
    slot = _slot_len(fs, cfg.slot_duration_s) if slot_aggregate else 1
    counters = {
        float(d): RunLengthCounter(float(db_to_linear(d)), slot, censor_boundaries)
        for d in thresholds_db
    }
    for block in iter_rss_blocks(cfg):
        for counter in counters.values():
            counter.update(block)
        if n_samples is not None and all(c.count >= n_samples for c in counters.values()):
            break
    out = {}
    for d, counter in counters.items():
        lengths = counter.finish()
        if n_samples is not None:
            lengths = lengths[:n_samples]
        out[d] = SampleSet(lengths * slot / fs, fs, d, int(cfg.seed))
    return out


def write_sample_set(path, samples: SampleSet) -> None:
    """Write one duration per line after a versioned header."""
    header = (
        f"# survlink durations v{SAMPLESET_VERSION}, sample_rate_hz={samples.sample_rate_hz}, "
        f"threshold_db={samples.threshold_db}, seed={samples.seed}\n"
    )
    body = "".join(f"{x!r}\n" for x in samples.durations.tolist())
    Path(path).write_text(header + body)


def _maybe(value: str, kind):
    return None if value == "None" else kind(value)


def read_sample_set(path) -> SampleSet:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaVersionError(f"{path}: empty file, missing header")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise SchemaVersionError(f"{path}: missing or malformed durations header")
    if int(m["version"]) != SAMPLESET_VERSION:
        raise SchemaVersionError(f"{path}: unsupported durations version v{m['version']}")
    values = [float(x) for x in lines[1:] if x.strip() and not x.startswith("#")]
    return SampleSet(
        np.array(values, dtype=np.float64),
        _maybe(m["rate"], float),
        _maybe(m["thr"], float),
        _maybe(m["seed"], int),
    )

