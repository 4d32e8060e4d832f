"""Engineered predictors for one week of half-hourly consumption.

The list below is the frozen canonical order. Each entry carries two tags
used by the property tests:

``scaling``
    ``"linear"`` (scales with the data), ``"quadratic"`` (variance) or
    ``"invariant"`` (ratios, positions, counts, correlations).
``scope``
    ``"day"`` if the feature indexes individual days or day types
    (weekday/weekend), ``"week"`` if it is unchanged by any reordering of
    the seven days.

Any ratio whose denominator is below ``EPS`` is 0.0, and correlation-type
features of a constant series are 0.0.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DataError
from .meter import DAYS_PER_WEEK, SLOTS_PER_DAY, SLOTS_PER_WEEK, WeekSlice

EPS = 1e-9

# (name, first slot, end slot) of the six daily periods
PERIODS = (
    ("night", 0, 12),
    ("morning", 12, 20),
    ("noon", 20, 28),
    ("afternoon", 28, 36),
    ("evening", 36, 44),
    ("late", 44, 48),
)
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
ACF_LAGS = (1, 2, 4, 8)


def _spec_list():
    out = []

    def add(name, scaling, scope="week"):
        out.append((name, scaling, scope))

    # consumption figures
    for stat in ("mean", "max", "min"):
        add(f"week_{stat}", "linear")
    for part in ("weekday", "weekend"):
        for stat in ("mean", "max", "min"):
            add(f"{part}_{stat}", "linear", "day")
    for pname, _, _ in PERIODS:
        for stat in ("mean", "max", "min"):
            add(f"{pname}_{stat}", "linear")
    for d in WEEKDAYS:
        add(f"day_mean_{d}", "linear", "day")
    for part in ("weekday", "weekend"):
        for pname, _, _ in PERIODS:
            add(f"{part}_{pname}_mean", "linear", "day")
    # ratios
    for name in ("r_max_mean", "r_min_mean", "r_min_max"):
        add(name, "invariant")
    add("r_weekday_weekend", "invariant", "day")
    for name in ("r_evening_noon", "r_morning_noon", "r_evening_morning",
                 "r_afternoon_noon", "r_night_day"):
        add(name, "invariant")
    for pname, _, _ in PERIODS:
        add(f"r_{pname}_week", "invariant")
    # temporal
    add("t_first_above_daily_mean", "invariant")
    add("t_peak_slot", "invariant")
    add("t_peak_width", "invariant")
    add("t_count_above_half_max", "invariant")
    for lag in ACF_LAGS:
        add(f"t_acf_lag{lag}", "invariant")
    add("t_frac_above_mean", "invariant")
    add("t_morning_peak_slot", "invariant")
    add("t_evening_peak_slot", "invariant")
    add("t_count_above_twice_mean", "invariant")
    add("t_mean_abs_diff", "linear")
    add("t_max_abs_diff", "linear")
    # statistical
    add("s_var", "quadratic")
    add("s_std", "linear")
    for q in ("q25", "q50", "q75"):
        add(f"s_{q}", "linear")
    add("s_skew", "invariant")
    add("s_kurt", "invariant")
    add("s_cv", "invariant")
    add("s_daily_total_std", "linear")
    add("s_crossday_corr", "invariant")
    add("s_weekday_std", "linear", "day")
    add("s_weekend_std", "linear", "day")
    for pname, _, _ in PERIODS:
        add(f"s_{pname}_std", "linear")
    return out


FEATURE_SPECS = tuple(_spec_list())
FEATURE_NAMES = tuple(name for name, _, _ in FEATURE_SPECS)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 93, N_FEATURES


@dataclass(frozen=True, eq=False)
class FeatureVector:
    meter_id: str
    week_start: dt.date
    values: np.ndarray
    names: tuple = FEATURE_NAMES

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (len(self.names),):
            raise DataError(f"feature vector length {v.shape} != {len(self.names)}")
        if not np.all(np.isfinite(v)):
            raise DataError("feature vector contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def _ratio(num, den):
    den = np.asarray(den, dtype=np.float64)
    ok = np.abs(den) >= EPS
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


def _acf(days, lag, centre, denom):
    a = days[:, :, :-lag] - centre[:, None, None]
    b = days[:, :, lag:] - centre[:, None, None]
    return _ratio(np.sum(a * b, axis=(1, 2)), denom)


def feature_matrix(values) -> np.ndarray:
    """Features for a batch of weeks: ``(m, 336)`` in, ``(m, 93)`` out."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != SLOTS_PER_WEEK:
        raise DataError(f"expected (m, {SLOTS_PER_WEEK}) values, got {x.shape}")
    m = x.shape[0]
    days = x.reshape(m, DAYS_PER_WEEK, SLOTS_PER_DAY)
    wkd = days[:, :5, :].reshape(m, -1)
    wke = days[:, 5:, :].reshape(m, -1)
    cols = []

    week_mean = x.mean(axis=1)
    week_max = x.max(axis=1)
    week_min = x.min(axis=1)
    cols += [week_mean, week_max, week_min]
    wkd_mean, wke_mean = wkd.mean(axis=1), wke.mean(axis=1)
    cols += [wkd_mean, wkd.max(axis=1), wkd.min(axis=1)]
    cols += [wke_mean, wke.max(axis=1), wke.min(axis=1)]

    period = {}
    for pname, lo, hi in PERIODS:
        seg = days[:, :, lo:hi].reshape(m, -1)
        period[pname] = seg
        cols += [seg.mean(axis=1), seg.max(axis=1), seg.min(axis=1)]
    day_means = days.mean(axis=2)
    cols += [day_means[:, d] for d in range(DAYS_PER_WEEK)]
    for sub in (days[:, :5, :], days[:, 5:, :]):
        for _, lo, hi in PERIODS:
            cols.append(sub[:, :, lo:hi].reshape(m, -1).mean(axis=1))

    pmean = {k: v.mean(axis=1) for k, v in period.items()}
    daytime = days[:, :, 12:44].reshape(m, -1).mean(axis=1)
    cols += [
        _ratio(week_max, week_mean),
        _ratio(week_min, week_mean),
        _ratio(week_min, week_max),
        _ratio(wkd_mean, wke_mean),
        _ratio(pmean["evening"], pmean["noon"]),
        _ratio(pmean["morning"], pmean["noon"]),
        _ratio(pmean["evening"], pmean["morning"]),
        _ratio(pmean["afternoon"], pmean["noon"]),
        _ratio(pmean["night"], daytime),
    ]
    cols += [_ratio(pmean[pname], week_mean) for pname, _, _ in PERIODS]

    # temporal
    above_daily = days > day_means[:, :, None]
    cols.append(np.argmax(above_daily, axis=2).mean(axis=1).astype(np.float64))
    profile = days.mean(axis=1)
    peak = np.argmax(profile, axis=1)
    cols.append(peak.astype(np.float64))
    cols.append(_peak_width(profile, peak))
    cols.append(np.sum(x > 0.5 * week_max[:, None], axis=1).astype(np.float64))
    centre = week_mean
    denom = np.sum((x - centre[:, None]) ** 2, axis=1)
    for lag in ACF_LAGS:
        cols.append(_acf(days, lag, centre, denom))
    cols.append(np.mean(x > week_mean[:, None], axis=1))
    cols.append((10 + np.argmax(profile[:, 10:24], axis=1)).astype(np.float64))
    cols.append((32 + np.argmax(profile[:, 32:48], axis=1)).astype(np.float64))
    cols.append(np.sum(x > 2.0 * week_mean[:, None], axis=1).astype(np.float64))
    diffs = np.abs(np.diff(days, axis=2))
    cols.append(diffs.reshape(m, -1).mean(axis=1))
    cols.append(diffs.reshape(m, -1).max(axis=1))

    # statistical
    var = x.var(axis=1)
    std = np.sqrt(var)
    cols += [var, std]
    q = np.quantile(x, [0.25, 0.5, 0.75], axis=1)
    cols += [q[0], q[1], q[2]]
    z = x - week_mean[:, None]
    spread = std >= EPS
    safe = np.where(spread, std, 1.0)
    cols.append(np.where(spread, np.mean(z**3, axis=1) / safe**3, 0.0))
    cols.append(np.where(spread, np.mean(z**4, axis=1) / safe**4 - 3.0, 0.0))
    cols.append(_ratio(std, week_mean))
    cols.append(days.sum(axis=2).std(axis=1))
    cols.append(_crossday_corr(days))
    cols += [wkd.std(axis=1), wke.std(axis=1)]
    cols += [period[pname].std(axis=1) for pname, _, _ in PERIODS]

    out = np.column_stack(cols)
    assert out.shape == (m, N_FEATURES)
    return out


def _peak_width(profile, peak):
    """Contiguous slots around the profile peak at or above half its height."""
    m, n = profile.shape
    rows = np.arange(m)
    half = 0.5 * profile[rows, peak]
    ok = profile >= half[:, None]
    width = np.ones(m)
    for direction in (-1, 1):
        alive = np.ones(m, dtype=bool)
        for off in range(1, n):
            pos = peak + direction * off
            inside = (pos >= 0) & (pos < n)
            alive &= inside
            alive[alive] &= ok[rows[alive], pos[alive]]
            if not alive.any():
                break
            width += alive
    return width


def _crossday_corr(days):
    c = days - days.mean(axis=2, keepdims=True)
    norm = np.sqrt(np.sum(c * c, axis=2))
    gram = np.einsum("mis,mjs->mij", c, c)
    den = norm[:, :, None] * norm[:, None, :]
    corr = _ratio(gram, den)
    iu = np.triu_indices(DAYS_PER_WEEK, k=1)
    return corr[:, iu[0], iu[1]].mean(axis=1)


def extract_features(week: WeekSlice) -> FeatureVector:
    return FeatureVector(week.meter_id, week.week_start, feature_matrix(week.values)[0])


def export_feature_matrix(rows: Iterable[tuple[FeatureVector, object]], stream: TextIO) -> None:
    """Write ``meter_id,week_start,label,<93 names>``; label may be None (empty cell)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["meter_id", "week_start", "label", *FEATURE_NAMES])
    for fv, label in rows:
        lab = "" if label is None else int(bool(label))
        w.writerow([fv.meter_id, fv.week_start.isoformat(), lab, *(repr(float(v)) for v in fv.values)])


def read_feature_matrix(stream: TextIO) -> tuple[list[FeatureVector], list]:
    reader = csv.reader(stream)
    header = next(reader, None)
    expected = ["meter_id", "week_start", "label", *FEATURE_NAMES]
    if header != expected:
        raise DataError("feature matrix header does not match the canonical feature list")
    vectors, labels = [], []
    for row in reader:
        if not row:
            continue
        try:
            vals = [float(v) for v in row[3:]]
            vectors.append(FeatureVector(row[0], dt.date.fromisoformat(row[1]), vals))
        except ValueError as exc:
            raise DataError(f"line {reader.line_num}: {exc}") from None
        labels.append(None if row[2] == "" else row[2] == "1")
    return vectors, labels


def names_by(tag: str, value: str) -> Sequence[str]:
    i = {"scaling": 1, "scope": 2}[tag]
    return [spec[0] for spec in FEATURE_SPECS if spec[i] == value]
