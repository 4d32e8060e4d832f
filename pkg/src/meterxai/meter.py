"""Smart-meter readings: parsing, label files and weekly windowing.

All series use 30-minute slots, 48 per day and 336 per Monday-aligned week.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import DataError

SLOTS_PER_DAY = 48
DAYS_PER_WEEK = 7
SLOTS_PER_WEEK = SLOTS_PER_DAY * DAYS_PER_WEEK
CHARACTERISTICS = ("cooking", "presence", "water_heating")
DEFAULT_COMPLETENESS = 0.9

CANONICAL_HEADER = ["meter_id", "date", "slot", "kwh"]
LABEL_HEADER = ["meter_id", "characteristic", "value"]


@dataclass(frozen=True)
class Reading:
    meter_id: str
    date: dt.date
    slot: int
    kwh: float

    def __post_init__(self):
        if not 0 <= self.slot < SLOTS_PER_DAY:
            raise DataError(f"slot {self.slot} outside 0..47")
        if not math.isfinite(self.kwh) or self.kwh < 0:
            raise DataError(f"kwh must be finite and >= 0, got {self.kwh}")


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """One household's readings, stored column-wise and sorted by (day, slot).

    ``day`` holds proleptic Gregorian ordinals (``date.toordinal()``).
    """

    meter_id: str
    day: np.ndarray
    slot: np.ndarray
    kwh: np.ndarray
    labels: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        day = np.asarray(self.day, dtype=np.int64)
        slot = np.asarray(self.slot, dtype=np.int64)
        kwh = np.asarray(self.kwh, dtype=np.float64)
        if not (day.shape == slot.shape == kwh.shape) or day.ndim != 1:
            raise DataError(f"{self.meter_id}: column lengths differ")
        if slot.size and (slot.min() < 0 or slot.max() >= SLOTS_PER_DAY):
            raise DataError(f"{self.meter_id}: slot outside 0..47")
        if not np.all(np.isfinite(kwh)) or np.any(kwh < 0):
            raise DataError(f"{self.meter_id}: kwh must be finite and >= 0")
        t = day * SLOTS_PER_DAY + slot
        if np.any(np.diff(t) <= 0):
            raise DataError(f"{self.meter_id}: readings not strictly increasing in time")
        bad = set(self.labels) - set(CHARACTERISTICS)
        if bad:
            raise DataError(f"{self.meter_id}: unknown characteristic(s) {sorted(bad)}")
        for name, arr in (("day", day), ("slot", slot), ("kwh", kwh)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "labels", dict(self.labels))

    def __len__(self):
        return int(self.kwh.size)

    @property
    def timeline(self) -> np.ndarray:
        """Absolute slot index ``day * 48 + slot``."""
        return self.day * SLOTS_PER_DAY + self.slot

    @property
    def readings(self) -> list[Reading]:
        return [
            Reading(self.meter_id, dt.date.fromordinal(int(d)), int(s), float(k))
            for d, s, k in zip(self.day, self.slot, self.kwh)
        ]

    def with_labels(self, labels: Mapping[str, bool]) -> "LoadProfile":
        return LoadProfile(self.meter_id, self.day, self.slot, self.kwh, labels)

    def __eq__(self, other):
        if not isinstance(other, LoadProfile):
            return NotImplemented
        return (
            self.meter_id == other.meter_id
            and np.array_equal(self.day, other.day)
            and np.array_equal(self.slot, other.slot)
            and np.array_equal(self.kwh, other.kwh)
            and dict(self.labels) == dict(other.labels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class WeekSlice:
    meter_id: str
    week_start: dt.date
    values: np.ndarray
    completeness: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (SLOTS_PER_WEEK,):
            raise DataError(f"week values must have length {SLOTS_PER_WEEK}, got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DataError("week values must be finite and >= 0")
        if not 0.0 <= self.completeness <= 1.0:
            raise DataError(f"completeness {self.completeness} outside [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def days(self) -> np.ndarray:
        """Values reshaped to (7, 48)."""
        return self.values.reshape(DAYS_PER_WEEK, SLOTS_PER_DAY)

    def replace_values(self, values) -> "WeekSlice":
        return WeekSlice(self.meter_id, self.week_start, values, self.completeness)


def _source_text(source) -> TextIO:
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    return source


def _to_kwh(text: str, lineno: int) -> float:
    try:
        kwh = float(text)
    except ValueError:
        raise DataError(f"line {lineno}: kwh {text!r} is not a number") from None
    if not math.isfinite(kwh):
        raise DataError(f"line {lineno}: kwh must be finite")
    if kwh < 0:
        raise DataError(f"line {lineno}: negative kwh {kwh}")
    return kwh


def _iter_canonical(stream: TextIO):
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CANONICAL_HEADER:
        raise DataError(f"line 1: expected header {','.join(CANONICAL_HEADER)}")
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise DataError(f"line {lineno}: expected 4 fields, got {len(row)}")
        meter, date_s, slot_s, kwh_s = (c.strip() for c in row)
        if not meter:
            raise DataError(f"line {lineno}: empty meter_id")
        try:
            day = dt.date.fromisoformat(date_s).toordinal()
        except ValueError:
            raise DataError(f"line {lineno}: bad date {date_s!r}") from None
        try:
            slot = int(slot_s)
        except ValueError:
            raise DataError(f"line {lineno}: bad slot {slot_s!r}") from None
        if not 0 <= slot < SLOTS_PER_DAY:
            raise DataError(f"line {lineno}: slot {slot} outside 0..47")
        yield lineno, meter, day, slot, _to_kwh(kwh_s, lineno)


def decode_cer_code(code: str, epoch: dt.date) -> tuple[dt.date, int]:
    """Split a 5-digit CER day/time code into (date, 0-based slot).

    The first three digits count days from ``epoch``; the last two are a
    1-based half-hour index.
    """
    if len(code) != 5 or not code.isdigit():
        raise DataError(f"daytime code {code!r} is not 5 digits")
    day_code, slot_code = int(code[:3]), int(code[3:])
    if not 1 <= slot_code <= SLOTS_PER_DAY:
        raise DataError(f"daytime code {code!r}: slot {slot_code} outside 1..48")
    return epoch + dt.timedelta(days=day_code), slot_code - 1


def _iter_cer(stream: TextIO, epoch: dt.date):
    for lineno, line in enumerate(stream, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise DataError(f"line {lineno}: expected 'meter_id daytime_code kwh'")
        meter, code, kwh_s = parts
        try:
            date, slot = decode_cer_code(code, epoch)
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        yield lineno, meter, date.toordinal(), slot, _to_kwh(kwh_s, lineno)


def parse_readings(source, format: str = "canonical", cer_epoch: dt.date | None = None) -> list[LoadProfile]:
    """Parse readings into one sorted, unlabeled profile per meter.

    ``format`` is ``"canonical"`` (CSV ``meter_id,date,slot,kwh``) or
    ``"cer-code"`` (whitespace-separated ``meter_id daytime_code kwh``, which
    requires ``cer_epoch``). Profiles are returned in order of first
    appearance.
    """
    stream = _source_text(source)
    if format == "canonical":
        rows = _iter_canonical(stream)
    elif format in ("cer-code", "cer"):
        if cer_epoch is None:
            raise DataError("cer-code format requires an epoch date")
        rows = _iter_cer(stream, cer_epoch)
    else:
        raise DataError(f"unknown readings format {format!r}")

    cols: dict[str, tuple[list, list, list, list]] = {}
    for lineno, meter, day, slot, kwh in rows:
        c = cols.setdefault(meter, ([], [], [], []))
        c[0].append(day)
        c[1].append(slot)
        c[2].append(kwh)
        c[3].append(lineno)

    profiles = []
    for meter, (days, slots, kwhs, lines) in cols.items():
        day = np.asarray(days, dtype=np.int64)
        slot = np.asarray(slots, dtype=np.int64)
        t = day * SLOTS_PER_DAY + slot
        order = np.argsort(t, kind="stable")
        ts = t[order]
        dup = np.flatnonzero(ts[1:] == ts[:-1])
        if dup.size:
            i, j = order[dup[0]], order[dup[0] + 1]
            when = dt.date.fromordinal(int(day[i])).isoformat()
            raise DataError(
                f"duplicate reading for meter {meter} at {when} slot {int(slot[i])} "
                f"(lines {lines[i]} and {lines[j]})"
            )
        profiles.append(LoadProfile(meter, day[order], slot[order], np.asarray(kwhs)[order]))
    return profiles


def write_readings(profiles: Iterable[LoadProfile], stream: TextIO) -> None:
    """Write profiles as canonical CSV; floats use ``repr`` so re-parsing is exact."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CANONICAL_HEADER)
    for p in profiles:
        for d, s, k in zip(p.day, p.slot, p.kwh):
            w.writerow([p.meter_id, dt.date.fromordinal(int(d)).isoformat(), int(s), repr(float(k))])


def parse_labels(source) -> dict[str, dict[str, bool]]:
    stream = _source_text(source)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != LABEL_HEADER:
        raise DataError(f"line 1: expected header {','.join(LABEL_HEADER)}")
    labels: dict[str, dict[str, bool]] = {}
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 fields, got {len(row)}")
        meter, char, value = (c.strip() for c in row)
        if char not in CHARACTERISTICS:
            raise DataError(f"line {lineno}: unknown characteristic {char!r}")
        if value not in ("0", "1"):
            raise DataError(f"line {lineno}: label value must be 0 or 1, got {value!r}")
        entry = labels.setdefault(meter, {})
        if char in entry:
            raise DataError(f"line {lineno}: duplicate label {char} for meter {meter}")
        entry[char] = value == "1"
    return labels


def write_labels(labels: Mapping[str, Mapping[str, bool]], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(LABEL_HEADER)
    for meter, entry in labels.items():
        for char in CHARACTERISTICS:
            if char in entry:
                w.writerow([meter, char, int(bool(entry[char]))])


def attach_labels(profiles: Iterable[LoadProfile], labels: Mapping[str, Mapping[str, bool]]) -> list[LoadProfile]:
    return [p.with_labels(labels.get(p.meter_id, {})) for p in profiles]


def _monday_on_or_after(ordinal: int) -> int:
    # date.fromordinal(1) is a Monday, so (ordinal - 1) % 7 is the weekday.
    return ordinal + (-(ordinal - 1)) % 7


def segment_weeks(profile: LoadProfile, completeness_threshold: float = DEFAULT_COMPLETENESS) -> list[WeekSlice]:
    """Cut a profile into Monday-aligned weeks.

    A week is kept when it lies entirely inside the observed span and at
    least ``completeness_threshold`` of its slots were observed; the missing
    slots are linearly interpolated along the full timeline.
    """
    if not 0.0 < completeness_threshold <= 1.0:
        raise DataError(f"completeness threshold {completeness_threshold} outside (0, 1]")
    if len(profile) == 0:
        return []
    t = profile.timeline
    first, last = int(t[0]), int(t[-1])
    start_day = _monday_on_or_after(-(-first // SLOTS_PER_DAY))
    weeks = []
    week_start = start_day
    while (week_start + DAYS_PER_WEEK) * SLOTS_PER_DAY - 1 <= last:
        lo = week_start * SLOTS_PER_DAY
        hi = lo + SLOTS_PER_WEEK
        a, b = np.searchsorted(t, [lo, hi])
        n_obs = int(b - a)
        completeness = n_obs / SLOTS_PER_WEEK
        if completeness >= completeness_threshold:
            if n_obs == SLOTS_PER_WEEK:
                values = profile.kwh[a:b].copy()
            else:
                values = np.interp(np.arange(lo, hi), t, profile.kwh)
                values[t[a:b] - lo] = profile.kwh[a:b]
            weeks.append(WeekSlice(profile.meter_id, dt.date.fromordinal(week_start), values, completeness))
        week_start += DAYS_PER_WEEK
    return weeks


def time_of_day_mean(weeks) -> np.ndarray:
    """Mean kWh per time-of-day slot (48 values) over all days of the given weeks.

    Accepts WeekSlice objects or raw 336-value arrays.
    """
    arr = np.asarray([w.values if isinstance(w, WeekSlice) else w for w in weeks], dtype=np.float64)
    if arr.size == 0:
        raise DataError("no weeks to average")
    return arr.reshape(-1, SLOTS_PER_DAY).mean(axis=0)
