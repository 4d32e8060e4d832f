"""Synthetic smart-meter corpora with planted, labeled activity patterns."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .errors import DataError
from .meter import CHARACTERISTICS, DAYS_PER_WEEK, SLOTS_PER_DAY, LoadProfile


@dataclass(frozen=True)
class PatternConfig:
    """A bump of ``amplitude`` kWh per slot over time-of-day slots ``[start, end)``."""

    start: int = 35  # 17:30
    end: int = 38  # 19:00
    amplitude: float = 1.5
    occurrence: float = 0.8
    jitter: int = 1
    positive_fraction: float = 0.5


@dataclass(frozen=True)
class SynthConfig:
    n_households: int = 500
    weeks_per_household: int = 4
    start_date: dt.date = dt.date(2009, 7, 20)
    base_load: float = 0.15
    diurnal_amplitude: float = 0.4
    weekend_morning_shift: int = 3
    noise_sigma: float = 0.25
    event_rate: float = 0.5
    event_amplitude: float = 1.0
    quota: bool = False
    seed: int = 0
    patterns: Mapping[str, PatternConfig] = field(default_factory=lambda: {"cooking": PatternConfig()})

    def __post_init__(self):
        if self.n_households < 1 or self.weeks_per_household < 1:
            raise DataError("need at least one household and one week")
        if self.start_date.weekday() != 0:
            raise DataError("start_date must be a Monday")
        if min(self.noise_sigma, self.base_load, self.diurnal_amplitude, self.event_rate, self.event_amplitude) < 0:
            raise DataError("load, noise and event parameters must be >= 0")
        for name, p in self.patterns.items():
            if name not in CHARACTERISTICS:
                raise DataError(f"unknown characteristic {name!r}")
            if not 0 <= p.start < p.end <= SLOTS_PER_DAY:
                raise DataError(f"{name}: window [{p.start}, {p.end}) outside 0..48")
            if not 0.0 <= p.positive_fraction <= 1.0 or not 0.0 <= p.occurrence <= 1.0:
                raise DataError(f"{name}: fractions must lie in [0, 1]")
            # amplitude 0 is the null control; otherwise the bump must dominate the noise
            if p.amplitude != 0 and not p.amplitude > self.noise_sigma:
                raise DataError(f"{name}: amplitude {p.amplitude} must exceed noise std {self.noise_sigma}")
            if p.jitter < 0:
                raise DataError(f"{name}: jitter must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        d = dict(d)
        if "start_date" in d and isinstance(d["start_date"], str):
            d["start_date"] = dt.date.fromisoformat(d["start_date"])
        if "patterns" in d:
            d["patterns"] = {k: PatternConfig(**v) for k, v in d["patterns"].items()}
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        d["patterns"] = {k: asdict(v) for k, v in self.patterns.items()}
        return d


def diurnal_shape(weekend: bool, morning_shift: int) -> np.ndarray:
    """Unit-height daily shape: morning peak around 07:30, evening peak around 20:00."""
    t = np.arange(SLOTS_PER_DAY)
    morning = 15 + (morning_shift if weekend else 0)
    return 0.6 * np.exp(-0.5 * ((t - morning) / 2.5) ** 2) + 1.0 * np.exp(-0.5 * ((t - 40) / 4.0) ** 2)


@dataclass
class SynthCorpus:
    profiles: list
    manifest: dict
    config: SynthConfig

    def labels(self) -> dict[str, dict[str, bool]]:
        return {p.meter_id: dict(p.labels) for p in self.profiles}

    def manifest_json(self) -> str:
        return json.dumps({"config": self.config.to_dict(), "households": self.manifest}, indent=2, sort_keys=True)


def _assign_labels(config: SynthConfig, rng) -> dict[str, np.ndarray]:
    n = config.n_households
    out = {}
    for name in sorted(config.patterns):
        frac = config.patterns[name].positive_fraction
        if config.quota:
            lab = np.zeros(n, dtype=bool)
            lab[rng.permutation(n)[: int(round(frac * n))]] = True
        else:
            lab = rng.random(n) < frac
        out[name] = lab
    return out


def generate_households(config: SynthConfig) -> SynthCorpus:
    """Generate labeled households and the manifest of planted windows.

    Each household draws from its own child seed stream, so the corpus does
    not depend on generation order.
    """
    root = np.random.SeedSequence(config.seed)
    label_seq, house_seq = root.spawn(2)
    labels = _assign_labels(config, np.random.default_rng(label_seq))
    streams = house_seq.spawn(config.n_households)
    n_days = config.weeks_per_household * DAYS_PER_WEEK
    day0 = config.start_date.toordinal()
    weekday_shape = diurnal_shape(False, config.weekend_morning_shift)
    weekend_shape = diurnal_shape(True, config.weekend_morning_shift)
    width = len(str(config.n_households))

    profiles, manifest = [], {}
    for i in range(config.n_households):
        rng = np.random.default_rng(streams[i])
        meter_id = f"H{i + 1:0{max(width, 4)}d}"
        base = config.base_load * rng.lognormal(0.0, 0.3)
        diurnal = config.diurnal_amplitude * rng.uniform(0.5, 1.5)
        weekday = np.array([(day0 + d - 1) % 7 for d in range(n_days)])
        shape = np.where((weekday >= 5)[:, None], weekend_shape, weekday_shape)
        load = base + diurnal * shape
        entry = {"labels": {}, "windows": {}}
        for name in sorted(config.patterns):
            p = config.patterns[name]
            positive = bool(labels[name][i])
            entry["labels"][name] = positive
            if not positive:
                continue
            entry["windows"][name] = [p.start, p.end]
            occurs = rng.random(n_days) < p.occurrence
            shift = rng.integers(-p.jitter, p.jitter + 1, size=n_days)
            for d in np.flatnonzero(occurs):
                lo = min(max(p.start + shift[d], 0), SLOTS_PER_DAY - (p.end - p.start))
                load[d, lo : lo + (p.end - p.start)] += p.amplitude
        if config.event_rate > 0:
            n_events = rng.poisson(config.event_rate * n_days)
            at = rng.integers(0, n_days * SLOTS_PER_DAY, size=n_events)
            dur = rng.integers(1, 4, size=n_events)
            amp = rng.exponential(config.event_amplitude, size=n_events)
            flat = load.reshape(-1)
            for a, d, e in zip(at, dur, amp):
                flat[a : a + d] += e
        sigma = config.noise_sigma
        noise = rng.lognormal(-0.5 * sigma**2, sigma, size=load.shape) if sigma > 0 else 1.0
        kwh = (load * noise).ravel()
        day = np.repeat(day0 + np.arange(n_days), SLOTS_PER_DAY)
        slot = np.tile(np.arange(SLOTS_PER_DAY), n_days)
        profiles.append(LoadProfile(meter_id, day, slot, kwh, entry["labels"]))
        manifest[meter_id] = entry
    return SynthCorpus(profiles, manifest, config)
