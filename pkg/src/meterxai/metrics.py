"""Explainer evaluation: mirror-blur faithfulness, time-of-day stability, localization.

An *explainer* here is a callable ``explainer(model_fn, week, background, seed)``
returning an :class:`~meterxai.attribution.Attribution`; a *dataset* maps
meter ids to lists of WeekSlice.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, TextIO

import numpy as np

from .attribution import (
    Attribution,
    ModelFn,
    SegmentScheme,
    explain_kernel_shap,
    explain_lime,
    household_background,
    random_attribution,
)
from .errors import DataError
from .meter import DAYS_PER_WEEK, SLOTS_PER_DAY, WeekSlice, time_of_day_mean

CLAMP_FRACTION = 0.01
DEFAULT_TOP_FRACTION = 0.1
DEFAULT_TOP_K_PER_DAY = 3

Explainer = Callable[[ModelFn, np.ndarray, np.ndarray, int], Attribution]


@dataclass
class XaiScore:
    metric: str
    value: float
    n_sampled: int
    seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise DataError(f"{self.metric} score {self.value} outside [0, 1]")


def kernel_shap_explainer(scheme: SegmentScheme, n_coalitions: int = 2048) -> Explainer:
    def explain(model_fn, week, background, seed):
        return explain_kernel_shap(model_fn, week, scheme, background, n_coalitions=n_coalitions, seed=seed)

    return explain


def lime_explainer(scheme: SegmentScheme, n_perturbations: int = 1000, kernel_width: float | None = None) -> Explainer:
    def explain(model_fn, week, background, seed):
        return explain_lime(model_fn, week, scheme, n_perturbations, kernel_width, seed, background)

    return explain


def random_explainer(scheme: SegmentScheme) -> Explainer:
    def explain(model_fn, week, background, seed):
        return random_attribution(scheme, seed)

    return explain


def top_segments(phi, k: int) -> np.ndarray:
    """Indices of the ``k`` largest phi; ties resolved by lower index."""
    return np.argsort(-np.asarray(phi), kind="stable")[:k]


def mirror(x, mu):
    """``2*mu - x`` floored at ``0.01*mu``."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    return np.maximum(2.0 * mu - x, CLAMP_FRACTION * mu)


def blur_segments(week: WeekSlice, attribution: Attribution, top_k: int, profile=None) -> WeekSlice:
    """Mirror the slots of the ``top_k`` highest-phi segments around the household mean.

    ``profile`` is the 48-slot time-of-day mean used as the mirror centre; by
    default it is computed from ``week`` itself.
    """
    scheme = attribution.scheme
    if not 0 <= top_k <= scheme.n_segments:
        raise DataError(f"top_k {top_k} outside 0..{scheme.n_segments}")
    mu = time_of_day_mean([week]) if profile is None else np.asarray(profile, dtype=np.float64)
    if mu.shape != (SLOTS_PER_DAY,):
        raise DataError("profile must have 48 values")
    chosen = np.isin(scheme.mapping, top_segments(attribution.phi, top_k))
    values = week.values.copy()
    mu_week = np.tile(mu, DAYS_PER_WEEK)
    values[chosen] = mirror(values[chosen], mu_week[chosen])
    return week.replace_values(values)


def _sample_households(dataset: Mapping[str, Sequence[WeekSlice]], n: int, rng) -> list[str]:
    ids = [k for k, weeks in dataset.items() if len(weeks) > 0]
    if len(ids) < n:
        raise DataError(f"dataset has {len(ids)} households with weeks, need {n}")
    return [ids[i] for i in sorted(rng.choice(len(ids), size=n, replace=False))]


def faithfulness(
    model_fn: ModelFn,
    explainer: Explainer,
    dataset: Mapping[str, Sequence[WeekSlice]],
    n_households: int = 50,
    top_k: int | None = None,
    seed: int = 0,
    n_segments: int | None = None,
    threshold: float = 0.5,
) -> XaiScore:
    """Fraction of sampled households whose predicted class flips after blurring.

    One random week per sampled household is explained against the
    household's mean profile; its ``top_k`` segments (default: top 10%) are
    mirror-blurred and the week is scored again.
    """
    rng = np.random.default_rng(seed)
    chosen = _sample_households(dataset, n_households, rng)
    sample_seeds = np.random.SeedSequence(seed).generate_state(n_households)
    flips = 0
    used_k = None
    for i, meter in enumerate(chosen):
        weeks = dataset[meter]
        week = weeks[int(rng.integers(len(weeks)))]
        profile = time_of_day_mean(weeks)
        background = np.tile(profile, DAYS_PER_WEEK)
        attr = explainer(model_fn, week.values, background, int(sample_seeds[i]))
        k = top_k if top_k is not None else max(1, math.ceil(DEFAULT_TOP_FRACTION * attr.scheme.n_segments))
        used_k = k
        blurred = blur_segments(week, attr, k, profile)
        before, after = np.asarray(model_fn(np.vstack([week.values, blurred.values])), dtype=np.float64)
        flips += (before >= threshold) != (after >= threshold)
    return XaiScore("faithfulness", flips / n_households, n_households, seed, {"top_k": used_k, "threshold": threshold})


def stability_of(attribution: Attribution, top_k_per_day: int = DEFAULT_TOP_K_PER_DAY) -> float:
    """Share of per-day top-k time-of-day stamps that recur on at least two days."""
    day, stamp = attribution.scheme.day_and_stamp()
    stamps = []
    for d in range(DAYS_PER_WEEK):
        segs = np.flatnonzero(day == d)
        k = min(top_k_per_day, segs.size)
        top = segs[top_segments(attribution.phi[segs], k)]
        stamps.append(stamp[top])
    days_with = {}
    for d, s in enumerate(stamps):
        for t in set(s.tolist()):
            days_with[t] = days_with.get(t, 0) + 1
    all_stamps = np.concatenate(stamps)
    return float(np.mean([days_with[t] >= 2 for t in all_stamps.tolist()]))


def stability(
    model_fn: ModelFn,
    explainer: Explainer,
    dataset: Mapping[str, Sequence[WeekSlice]],
    n_samples: int = 50,
    top_k_per_day: int = DEFAULT_TOP_K_PER_DAY,
    seed: int = 0,
) -> XaiScore:
    """Mean :func:`stability_of` over randomly drawn household-weeks."""
    rng = np.random.default_rng(seed)
    chosen = _sample_households(dataset, n_samples, rng)
    sample_seeds = np.random.SeedSequence(seed).generate_state(n_samples)
    scores = []
    for i, meter in enumerate(chosen):
        weeks = dataset[meter]
        week = weeks[int(rng.integers(len(weeks)))]
        attr = explainer(model_fn, week.values, household_background(weeks), int(sample_seeds[i]))
        scores.append(stability_of(attr, top_k_per_day))
    return XaiScore("stability", float(np.mean(scores)), n_samples, seed, {"top_k_per_day": top_k_per_day})


def localization_score(attribution: Attribution, window: tuple[int, int]) -> float:
    """Share of positive attribution mass inside the time-of-day window ``[start, end)``."""
    start, end = window
    if not 0 <= start < end <= SLOTS_PER_DAY:
        raise DataError(f"window {window} outside 0..48")
    sizes = np.bincount(attribution.scheme.mapping, minlength=attribution.scheme.n_segments)
    slot_mass = (np.clip(attribution.phi, 0.0, None) / sizes)[attribution.scheme.mapping]
    tod = slot_mass.reshape(DAYS_PER_WEEK, SLOTS_PER_DAY).sum(axis=0)
    total = tod.sum()
    if total <= 0.0:
        return 0.0
    return float(min(1.0, tod[start:end].sum() / total))


def write_scores(rows: Sequence[tuple[str, str, XaiScore]], stream: TextIO) -> None:
    """CSV with one row per (method, characteristic, metric)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["method", "characteristic", "metric", "value", "n_sampled", "seed"])
    for method, characteristic, score in rows:
        w.writerow([method, characteristic, score.metric, f"{score.value:.6f}", score.n_sampled, score.seed])
