"""Local attribution of one week's prediction over time segments.

A model function maps a batch of weeks ``(m, 336)`` to scores ``(m,)``.
Segments switched "off" take their values from a background week.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .errors import DataError, NumericError
from .features import feature_matrix
from .forest import ForestModel, predict_proba
from .meter import DAYS_PER_WEEK, SLOTS_PER_DAY, SLOTS_PER_WEEK, WeekSlice, time_of_day_mean

MAX_EXACT_PLAYERS = 12
RIDGE = 1e-6

ModelFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SegmentScheme:
    """Assignment of the 336 week slots to segments."""

    mapping: np.ndarray
    granularity: str = "custom"

    def __post_init__(self):
        m = np.array(self.mapping, dtype=np.intp)
        if m.shape != (SLOTS_PER_WEEK,):
            raise DataError("segment mapping must cover all 336 slots")
        n = int(m.max()) + 1 if m.size else 0
        if m.min() < 0 or np.unique(m).size != n:
            raise DataError("segment indices must be 0..n-1 with every segment non-empty")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    @property
    def n_segments(self) -> int:
        return int(self.mapping.max()) + 1

    @property
    def day_resolved(self) -> bool:
        """True if each segment is a contiguous run of slots inside one day."""
        for j in range(self.n_segments):
            slots = np.flatnonzero(self.mapping == j)
            if slots[0] // SLOTS_PER_DAY != slots[-1] // SLOTS_PER_DAY:
                return False
            if slots.size != slots[-1] - slots[0] + 1:
                return False
        return True

    def segment_slots(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.mapping == j)

    def bounds(self) -> list[tuple[int, int]]:
        """(start, end) per segment: week slots if day-resolved, else time-of-day slots."""
        out = []
        resolved = self.day_resolved
        for j in range(self.n_segments):
            s = self.segment_slots(j)
            if not resolved:
                s = np.unique(s % SLOTS_PER_DAY)
            out.append((int(s[0]), int(s[-1]) + 1))
        return out

    def day_and_stamp(self) -> tuple[np.ndarray, np.ndarray]:
        """Day index and time-of-day start slot for every segment (day-resolved schemes only)."""
        if not self.day_resolved:
            raise DataError("segment scheme has no per-day resolution")
        first = np.array([self.segment_slots(j)[0] for j in range(self.n_segments)])
        return first // SLOTS_PER_DAY, first % SLOTS_PER_DAY

    @classmethod
    def hourly_by_day(cls) -> "SegmentScheme":
        """168 segments: one per hour of each day."""
        return cls(np.arange(SLOTS_PER_WEEK) // 2, "hour")

    @classmethod
    def slots(cls) -> "SegmentScheme":
        return cls(np.arange(SLOTS_PER_WEEK), "slot")

    @classmethod
    def time_of_day(cls, n_per_day: int = 24) -> "SegmentScheme":
        """Segments pooled across the seven days (24 hours or 48 half hours)."""
        if SLOTS_PER_DAY % n_per_day:
            raise DataError("n_per_day must divide 48")
        width = SLOTS_PER_DAY // n_per_day
        return cls((np.arange(SLOTS_PER_WEEK) % SLOTS_PER_DAY) // width, "hour" if width == 2 else "custom")

    @classmethod
    def contiguous(cls, n_segments: int) -> "SegmentScheme":
        """``n_segments`` equal-ish consecutive blocks of the week."""
        if not 1 <= n_segments <= SLOTS_PER_WEEK:
            raise DataError("n_segments outside 1..336")
        return cls((np.arange(SLOTS_PER_WEEK) * n_segments) // SLOTS_PER_WEEK, "custom")


@dataclass(frozen=True, eq=False)
class Attribution:
    scheme: SegmentScheme
    phi: np.ndarray
    base_value: float
    prediction: float
    method: str
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64)
        if phi.shape != (self.scheme.n_segments,):
            raise DataError("phi length does not match the segment count")
        if not np.all(np.isfinite(phi)):
            raise NumericError("non-finite attribution")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    def slot_phi(self) -> np.ndarray:
        """Each segment's phi spread evenly over its slots (336 values)."""
        sizes = np.bincount(self.scheme.mapping, minlength=self.scheme.n_segments)
        return (self.phi / sizes)[self.scheme.mapping]

    def time_of_day_phi(self) -> np.ndarray:
        """Slot phi summed over days (48 values)."""
        return self.slot_phi().reshape(DAYS_PER_WEEK, SLOTS_PER_DAY).sum(axis=0)


def household_background(weeks) -> np.ndarray:
    """The household's mean time-of-day profile, repeated for seven days."""
    return np.tile(time_of_day_mean(weeks), DAYS_PER_WEEK)


def forest_model_fn(model: ForestModel) -> ModelFn:
    def fn(weeks):
        return np.atleast_1d(predict_proba(model, feature_matrix(weeks)))

    return fn


def _week_values(week) -> np.ndarray:
    v = week.values if isinstance(week, WeekSlice) else np.asarray(week, dtype=np.float64)
    if v.shape != (SLOTS_PER_WEEK,):
        raise DataError("week must have 336 values")
    return v


def masked_instances(x, background, scheme: SegmentScheme, coalitions) -> np.ndarray:
    """Rows of ``x`` where a segment is on, ``background`` where it is off."""
    on = np.asarray(coalitions, dtype=bool)[:, scheme.mapping]
    return np.where(on, x[None, :], background[None, :])


def _evaluate(model_fn: ModelFn, instances) -> np.ndarray:
    out = np.asarray(model_fn(instances), dtype=np.float64).reshape(-1)
    if out.size != len(instances):
        raise DataError("model function returned the wrong number of scores")
    if not np.all(np.isfinite(out)):
        raise NumericError("model function returned non-finite output")
    return out


def shapley_kernel_weight(m: int, size) -> np.ndarray:
    size = np.asarray(size)
    return (m - 1) / (np.array([math.comb(m, int(s)) for s in size.ravel()]).reshape(size.shape) * size * (m - size))


def all_coalitions(m: int) -> np.ndarray:
    """Every subset of ``m`` players as boolean rows, ordered by bitmask."""
    codes = np.arange(2**m)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def _constrained_wls(Z, y, w, delta):
    """Weighted LS for phi under sum(phi) == delta (last coefficient eliminated)."""
    m = Z.shape[1]
    if m == 1:
        return np.array([delta])
    Zf = Z.astype(np.float64)
    A = Zf[:, :-1] - Zf[:, -1:]
    b = y - Zf[:, -1] * delta
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    return np.append(coef, delta - coef.sum())


def explain_kernel_shap(
    model_fn: ModelFn,
    week,
    scheme: SegmentScheme,
    background=None,
    n_coalitions: int | None = 2048,
    seed: int = 0,
    full_enumeration: bool | None = None,
) -> Attribution:
    """Shapley-kernel attribution by constrained weighted least squares.

    With ``full_enumeration`` (the default when there are at most 12
    segments and the budget covers all coalitions) every non-trivial
    coalition is evaluated with its exact kernel weight, which reproduces the
    exact Shapley values. Otherwise ``n_coalitions`` coalitions are drawn in
    complementary pairs from the kernel distribution and weighted equally.
    """
    x = _week_values(week)
    b = household_background([x]) if background is None else _week_values(background)
    m = scheme.n_segments
    n_all = 2**m - 2 if m <= 30 else None
    if full_enumeration is None:
        full_enumeration = m <= MAX_EXACT_PLAYERS and (n_coalitions is None or n_coalitions >= n_all)
    if full_enumeration and m > MAX_EXACT_PLAYERS:
        raise DataError(f"full enumeration limited to {MAX_EXACT_PLAYERS} segments")
    if not full_enumeration and (n_coalitions is None or n_coalitions < m + 2):
        raise DataError(f"need at least n_segments + 2 = {m + 2} coalitions")

    fx, fb = _evaluate(model_fn, np.vstack([x, b]))
    delta = fx - fb
    if full_enumeration:
        Z = all_coalitions(m)[1:-1]
        w = shapley_kernel_weight(m, Z.sum(axis=1))
    else:
        rng = np.random.default_rng(seed)
        n_pairs = (n_coalitions + 1) // 2
        sizes = np.arange(1, m)
        p = (m - 1) / (sizes * (m - sizes))
        draw = rng.choice(sizes, size=n_pairs, p=p / p.sum())
        keys = rng.random((n_pairs, m))
        ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
        half = ranks < draw[:, None]
        Z = np.empty((2 * n_pairs, m), dtype=bool)
        Z[0::2] = half
        Z[1::2] = ~half
        Z = Z[:n_coalitions]
        w = np.ones(len(Z))
    y = _evaluate(model_fn, masked_instances(x, b, scheme, Z)) - fb
    if np.all(y == y[0]) and y[0] == 0.0 and delta == 0.0:
        phi = np.zeros(m)
    else:
        phi = _constrained_wls(Z, y, w, delta)
    if not np.all(np.isfinite(phi)):
        raise NumericError("kernel SHAP solve produced non-finite values")
    return Attribution(
        scheme, phi, float(fb), float(fx), "kernel-shap", seed,
        {"n_coalitions": int(len(Z)), "full_enumeration": bool(full_enumeration)},
    )


def explain_lime(
    model_fn: ModelFn,
    week,
    scheme: SegmentScheme,
    n_perturbations: int = 1000,
    kernel_width: float | None = None,
    seed: int = 0,
    background=None,
) -> Attribution:
    """Perturbation surrogate: ridge regression of scores on segment on/off masks.

    Samples switch off a uniformly drawn number of segments; each is
    weighted by ``exp(-d**2 / width**2)`` with ``d`` the Euclidean distance of
    its mask from the all-on mask (the square root of the Hamming count).
    """
    x = _week_values(week)
    b = household_background([x]) if background is None else _week_values(background)
    m = scheme.n_segments
    if n_perturbations < 2 * m:
        raise DataError(f"need at least 2 * n_segments = {2 * m} perturbations")
    width = 0.25 * math.sqrt(m) if kernel_width is None else float(kernel_width)
    rng = np.random.default_rng(seed)
    n_off = rng.integers(1, m + 1, size=n_perturbations - 1)
    keys = rng.random((n_perturbations - 1, m))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    Z = np.vstack([np.ones((1, m), dtype=bool), ranks >= n_off[:, None]])
    y = _evaluate(model_fn, masked_instances(x, b, scheme, Z))
    d2 = (~Z).sum(axis=1).astype(np.float64)
    w = np.exp(-d2 / width**2)

    D = np.hstack([np.ones((len(Z), 1)), Z.astype(np.float64)])
    sw = np.sqrt(w)
    Dw = D * sw[:, None]
    gram = Dw.T @ Dw
    meta = {"n_perturbations": int(n_perturbations), "kernel_width": width, "ridge": RIDGE}
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        meta["ridge_fallback"] = True
    penalty = RIDGE * np.eye(m + 1)
    penalty[0, 0] = 0.0
    try:
        coef = np.linalg.solve(gram + penalty, Dw.T @ (y * sw))
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(gram + penalty, Dw.T @ (y * sw), rcond=None)[0]
        meta["ridge_fallback"] = True
    fb = float(_evaluate(model_fn, b[None, :])[0])
    return Attribution(scheme, coef[1:], fb, float(y[0]), "lime", seed, meta)


def exact_shapley(value_fn: Callable[[frozenset], float], n_players: int) -> np.ndarray:
    """Exact Shapley values by enumerating all ``2**n_players`` coalitions."""
    if n_players > MAX_EXACT_PLAYERS:
        raise DataError(f"exact Shapley limited to {MAX_EXACT_PLAYERS} players")
    if n_players < 1:
        raise DataError("need at least one player")
    n = n_players
    v = np.empty(2**n)
    for code in range(2**n):
        v[code] = value_fn(frozenset(i for i in range(n) if code >> i & 1))
    sizes = np.array([bin(c).count("1") for c in range(2**n)])
    weight = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) if s < n else 0.0
                       for s in range(n + 1)])
    phi = np.zeros(n)
    codes = np.arange(2**n)
    for i in range(n):
        without = codes[(codes >> i & 1) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return phi


def random_attribution(scheme: SegmentScheme, seed: int = 0) -> Attribution:
    """Attribution with i.i.d. normal phi; baseline explainer for metric checks."""
    rng = np.random.default_rng(seed)
    return Attribution(scheme, rng.normal(size=scheme.n_segments), 0.0, 0.0, "random", seed)


def write_attribution(attr: Attribution, csv_stream: TextIO, json_stream: TextIO | None = None) -> None:
    w = csv.writer(csv_stream, lineterminator="\n")
    w.writerow(["segment_index", "start", "end", "phi"])
    for j, ((start, end), phi) in enumerate(zip(attr.scheme.bounds(), attr.phi)):
        w.writerow([j, start, end, repr(float(phi))])
    if json_stream is not None:
        meta = {
            "method": attr.method,
            "seed": attr.seed,
            "base_value": attr.base_value,
            "prediction": attr.prediction,
            "n_segments": attr.scheme.n_segments,
            "granularity": attr.scheme.granularity,
            "day_resolved": attr.scheme.day_resolved,
            **{k: v for k, v in attr.meta.items()},
        }
        json.dump(meta, json_stream, indent=2, sort_keys=True)
        json_stream.write("\n")
