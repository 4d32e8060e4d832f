"""Feedback documents: line, bar, polar and attribution charts as SVG, plus plain text.

Rendering is pure string formatting with fixed precision, so identical
specs give byte-identical documents.
"""

from __future__ import annotations

import json
import math
import textwrap
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from xml.sax.saxutils import escape

import numpy as np

from .attribution import Attribution
from .errors import DataError
from .meter import CHARACTERISTICS, SLOTS_PER_DAY

VIZ_TYPES = ("line", "bar", "polar", "shap_diagram", "text")
VIZ_ALIASES = {"shap": "shap_diagram"}
TIP_KINDS = ("CMT", "ET")

WIDTH, HEIGHT = 640, 400
PLOT = (70.0, 40.0, 600.0, 290.0)  # left, top, right, bottom
BLUE = "#1f6fd1"
TRACE = "#3c3c3c"
NEUTRAL = "#9a9a9a"
CAPTION_WIDTH = 90
LINE_HEIGHT = 16

_PHRASES = {
    "cooking": ("cooks with electricity", "does not cook with electricity"),
    "presence": ("is usually occupied during the day", "is usually empty during the day"),
    "water_heating": ("heats water with electricity", "does not heat water with electricity"),
}


@dataclass(frozen=True)
class Highlight:
    start_slot: int
    end_slot: int
    strength: float

    def __post_init__(self):
        if not 0 <= self.start_slot < self.end_slot <= SLOTS_PER_DAY:
            raise DataError(f"highlight [{self.start_slot}, {self.end_slot}) outside 0..48")

    @property
    def length(self) -> int:
        return self.end_slot - self.start_slot


@dataclass(frozen=True)
class FeedbackSpec:
    viz_type: str
    day_profile: tuple
    highlight: Highlight
    characteristic: str
    predicted: bool
    explanation_text: str | None = None
    tip: str | None = None
    phi: tuple | None = None  # 48 time-of-day attributions, needed for shap_diagram

    def __post_init__(self):
        viz = VIZ_ALIASES.get(self.viz_type, self.viz_type)
        if viz not in VIZ_TYPES:
            raise DataError(f"unsupported viz_type {self.viz_type!r}; choose from {VIZ_TYPES}")
        object.__setattr__(self, "viz_type", viz)
        profile = tuple(float(v) for v in self.day_profile)
        if len(profile) != SLOTS_PER_DAY or not all(math.isfinite(v) and v >= 0 for v in profile):
            raise DataError("day_profile must hold 48 finite non-negative kWh values")
        object.__setattr__(self, "day_profile", profile)
        if self.characteristic not in CHARACTERISTICS:
            raise DataError(f"unknown characteristic {self.characteristic!r}")
        if self.tip is not None and self.tip not in TIP_KINDS:
            raise DataError(f"tip must be one of {TIP_KINDS} or None")
        if self.phi is not None:
            phi = tuple(float(v) for v in self.phi)
            if len(phi) != SLOTS_PER_DAY:
                raise DataError("phi must hold 48 time-of-day values")
            object.__setattr__(self, "phi", phi)
        if viz == "shap_diagram" and self.phi is None:
            raise DataError("shap_diagram needs per-slot phi")


@lru_cache(maxsize=1)
def tip_catalog() -> dict:
    return json.loads(resources.files("meterxai").joinpath("data/tips.json").read_text(encoding="utf-8"))


def tip_text(characteristic: str, kind: str) -> str:
    return tip_catalog()[characteristic][kind]


def _pooled(attribution) -> np.ndarray:
    if isinstance(attribution, Attribution):
        return attribution.time_of_day_phi()
    phi = np.asarray(attribution, dtype=np.float64)
    if phi.shape != (SLOTS_PER_DAY,):
        raise DataError("pooled phi must have 48 entries")
    return phi


def select_highlight(attribution, min_len: int = 2, max_len: int = 6) -> Highlight:
    """Contiguous window of ``min_len..max_len`` slots with maximal summed phi.

    Ties go to the shortest window, then the earliest start. If no phi is
    positive the first maximal slot is extended to ``min_len`` slots.
    """
    if not 1 <= min_len <= max_len <= SLOTS_PER_DAY:
        raise DataError(f"need 1 <= min_len <= max_len <= 48, got {min_len}, {max_len}")
    phi = _pooled(attribution)
    if not np.all(np.isfinite(phi)):
        raise DataError("phi must be finite")
    if np.all(phi <= 0):
        start = min(int(np.argmax(phi)), SLOTS_PER_DAY - min_len)
        return Highlight(start, start + min_len, math.fsum(phi[start : start + min_len]))
    best = None
    for length in range(min_len, max_len + 1):
        for start in range(0, SLOTS_PER_DAY - length + 1):
            s = math.fsum(phi[start : start + length])
            if best is None or s > best[0]:
                best = (s, start, length)
    s, start, length = best
    return Highlight(start, start + length, s)


def slot_clock(slot: int) -> str:
    minutes = slot * 30
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def format_kwh(v: float) -> str:
    """Two decimals with trailing zeros dropped: 1.20 -> '1.2'."""
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return s if s not in ("", "-0") else "0"


def window_means(spec: FeedbackSpec) -> tuple[float, float]:
    profile = np.asarray(spec.day_profile)
    h = spec.highlight
    return float(profile[h.start_slot : h.end_slot].mean()), float(profile.mean())


def core_text(spec: FeedbackSpec) -> str:
    yes, no = _PHRASES[spec.characteristic]
    h = spec.highlight
    inside, day = window_means(spec)
    return (
        f"Based on your consumption, your household {yes if spec.predicted else no}. "
        f"The period from {slot_clock(h.start_slot)} to {slot_clock(h.end_slot)} was most relevant for this result. "
        f"In this period you used {format_kwh(inside)} kWh per half hour on average, "
        f"compared with {format_kwh(day)} kWh over the whole day."
    )


def generate_text(spec: FeedbackSpec) -> str:
    """Core sentence set, then the explanation paragraph, then the tip, blank-line separated."""
    parts = [core_text(spec)]
    if spec.explanation_text:
        parts.append(spec.explanation_text)
    if spec.tip is not None:
        parts.append(tip_text(spec.characteristic, spec.tip))
    return "\n\n".join(parts) + "\n"


# SVG ----------------------------------------------------------------------


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _text(x, y, s, size=12, anchor="start", extra="") -> str:
    return (
        f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
        f'fill="#000000" text-anchor="{anchor}"{extra}>{escape(s)}</text>'
    )


def nice_ceiling(v: float) -> float:
    """Smallest 1/2/2.5/5 x 10^k at or above ``v`` (1 for non-positive input)."""
    if not v > 0:
        return 1.0
    exp = math.floor(math.log10(v))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        top = m * 10.0**exp
        if top >= v * (1 - 1e-12):
            return float(f"{top:.12g}")
    return 10.0 ** (exp + 1)


def _x(slot: float) -> float:
    left, _, right, _ = PLOT
    return left + (right - left) * slot / SLOTS_PER_DAY


def _y(v: float, lo: float, hi: float) -> float:
    _, top, _, bottom = PLOT
    return bottom - (bottom - top) * (v - lo) / (hi - lo)


def _time_axis(lines: list) -> None:
    _, _, _, bottom = PLOT
    for slot in range(0, SLOTS_PER_DAY + 1, 6):
        x = _x(slot)
        lines.append(f'<line x1="{_f(x)}" y1="{_f(bottom)}" x2="{_f(x)}" y2="{_f(bottom + 4)}" stroke="#000000"/>')
        lines.append(_text(x, bottom + 17, slot_clock(slot), 11, "middle"))
    lines.append(_text((PLOT[0] + PLOT[2]) / 2, bottom + 34, "Time of day", 12, "middle"))


def _value_axis(lines: list, lo: float, hi: float, label: str, n_ticks: int = 5) -> None:
    left, top, right, bottom = PLOT
    lines.append(f'<line x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(bottom)}" stroke="#000000"/>')
    lines.append(f'<line x1="{_f(left)}" y1="{_f(bottom)}" x2="{_f(right)}" y2="{_f(bottom)}" stroke="#000000"/>')
    for i in range(n_ticks + 1):
        v = lo + (hi - lo) * i / n_ticks
        y = _y(v, lo, hi)
        lines.append(f'<line x1="{_f(left - 4)}" y1="{_f(y)}" x2="{_f(left)}" y2="{_f(y)}" stroke="#000000"/>')
        lines.append(_text(left - 7, y + 4, f"{v:.3g}", 11, "end"))
    mid = (top + bottom) / 2
    lines.append(_text(18, mid, label, 12, "middle", f' transform="rotate(-90 18 {_f(mid)})"'))


def _highlight_band(lines: list, h: Highlight) -> None:
    _, top, _, bottom = PLOT
    x0, x1 = _x(h.start_slot), _x(h.end_slot)
    lines.append(
        f'<rect class="highlight" x="{_f(x0)}" y="{_f(top)}" width="{_f(x1 - x0)}" height="{_f(bottom - top)}" '
        f'fill="{BLUE}" fill-opacity="0.25" stroke="{BLUE}"/>'
    )


def _caption_lines(spec: FeedbackSpec) -> list[str]:
    paragraphs = []
    if spec.explanation_text:
        paragraphs.append(spec.explanation_text)
    if spec.tip is not None:
        paragraphs.append(tip_text(spec.characteristic, spec.tip))
    out = []
    for p in paragraphs:
        out.extend(textwrap.wrap(p, CAPTION_WIDTH))
    return out


def _title(spec: FeedbackSpec) -> str:
    yes, no = _PHRASES[spec.characteristic]
    h = spec.highlight
    return f"Your household {yes if spec.predicted else no} (relevant: {slot_clock(h.start_slot)}-{slot_clock(h.end_slot)})"


def _body_line(spec: FeedbackSpec, lines: list) -> None:
    profile = spec.day_profile
    hi = nice_ceiling(max(profile))
    _highlight_band(lines, spec.highlight)
    _value_axis(lines, 0.0, hi, "Consumption (kWh)")
    _time_axis(lines)
    pts = " ".join(f"{_f(_x(k + 0.5))},{_f(_y(v, 0.0, hi))}" for k, v in enumerate(profile))
    lines.append(f'<polyline points="{pts}" fill="none" stroke="{TRACE}" stroke-width="2"/>')


def _body_bar(spec: FeedbackSpec, lines: list) -> None:
    profile = spec.day_profile
    hi = nice_ceiling(max(profile))
    h = spec.highlight
    _value_axis(lines, 0.0, hi, "Consumption (kWh)")
    _time_axis(lines)
    width = _x(1) - _x(0)
    for k, v in enumerate(profile):
        y = _y(v, 0.0, hi)
        fill = BLUE if h.start_slot <= k < h.end_slot else TRACE
        cls = ' class="highlight"' if fill == BLUE else ""
        lines.append(
            f'<rect{cls} x="{_f(_x(k) + 1)}" y="{_f(y)}" width="{_f(width - 2)}" height="{_f(PLOT[3] - y)}" fill="{fill}"/>'
        )


def _polar_point(cx, cy, r, angle_deg):
    a = math.radians(angle_deg)
    return cx + r * math.sin(a), cy - r * math.cos(a)


def _body_polar(spec: FeedbackSpec, lines: list) -> None:
    """Slot k is a wedge centred k*7.5 degrees clockwise from 12 o'clock."""
    profile = spec.day_profile
    hi = nice_ceiling(max(profile))
    h = spec.highlight
    cx, cy, radius = WIDTH / 2, 170.0, 125.0
    step = 360.0 / SLOTS_PER_DAY
    for frac in (0.5, 1.0):
        lines.append(
            f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(radius * frac)}" fill="none" stroke="{NEUTRAL}" stroke-dasharray="3,3"/>'
        )
        lines.append(_text(cx + 3, cy - radius * frac - 3, f"{hi * frac:.3g} kWh", 10))
    for k, v in enumerate(profile):
        r = radius * v / hi
        if r <= 0:
            continue
        x0, y0 = _polar_point(cx, cy, r, (k - 0.5) * step)
        x1, y1 = _polar_point(cx, cy, r, (k + 0.5) * step)
        inside = h.start_slot <= k < h.end_slot
        fill = BLUE if inside else TRACE
        cls = ' class="highlight"' if inside else ""
        lines.append(
            f'<path{cls} d="M {_f(cx)} {_f(cy)} L {_f(x0)} {_f(y0)} A {_f(r)} {_f(r)} 0 0 1 {_f(x1)} {_f(y1)} Z" '
            f'fill="{fill}" stroke="#ffffff" stroke-width="0.5"/>'
        )
    for hour in (0, 6, 12, 18):
        x, y = _polar_point(cx, cy, radius + 14, hour * 15.0)
        lines.append(_text(x, y + 4, f"{hour:02d}:00", 11, "middle"))
    lines.append(_text(cx, cy + radius + 40, "Consumption per half hour (kWh), clockwise from midnight", 12, "middle"))


def _body_shap(spec: FeedbackSpec, lines: list) -> None:
    """One signed bar per time-of-day slot about a zero baseline; highlighted slots in blue."""
    phi = spec.phi
    bound = nice_ceiling(max(abs(v) for v in phi))
    h = spec.highlight
    _value_axis(lines, -bound, bound, "Contribution to prediction", n_ticks=4)
    _time_axis(lines)
    zero = _y(0.0, -bound, bound)
    lines.append(f'<line x1="{_f(PLOT[0])}" y1="{_f(zero)}" x2="{_f(PLOT[2])}" y2="{_f(zero)}" stroke="#000000"/>')
    width = _x(1) - _x(0)
    for k, v in enumerate(phi):
        y = _y(v, -bound, bound)
        inside = h.start_slot <= k < h.end_slot
        fill = BLUE if inside else NEUTRAL
        cls = ' class="highlight"' if inside else ""
        lines.append(
            f'<rect{cls} x="{_f(_x(k) + 1)}" y="{_f(min(y, zero))}" width="{_f(width - 2)}" '
            f'height="{_f(abs(zero - y))}" fill="{fill}"/>'
        )
    inside, _ = window_means(spec)
    lines.append(_text(PLOT[2], PLOT[1] - 6, f"Mean consumption in highlighted period: {format_kwh(inside)} kWh", 11, "end"))


_BODIES = {"line": _body_line, "bar": _body_bar, "polar": _body_polar, "shap_diagram": _body_shap}


def render_svg(spec: FeedbackSpec) -> str:
    if spec.viz_type not in _BODIES:
        raise DataError(f"viz_type {spec.viz_type!r} has no graphic form")
    caption = _caption_lines(spec)
    height = HEIGHT + LINE_HEIGHT * len(caption)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#ffffff"/>',
        _text(WIDTH / 2, 22, _title(spec), 14, "middle"),
    ]
    _BODIES[spec.viz_type](spec, lines)
    for i, line in enumerate(caption):
        lines.append(_text(PLOT[0], HEIGHT - 20 + LINE_HEIGHT * (i + 1), line, 12))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render(spec: FeedbackSpec) -> str:
    """SVG document for the graphic forms, plain text for ``text``."""
    if spec.viz_type == "text":
        return generate_text(spec)
    return render_svg(spec)


def feedback_spec(
    viz_type: str,
    week_values,
    attribution: Attribution,
    characteristic: str,
    predicted: bool,
    explanation: bool = False,
    tip: str | None = None,
    min_len: int = 2,
    max_len: int = 6,
) -> FeedbackSpec:
    """Spec for a week: profile is its time-of-day mean, highlight from pooled phi."""
    days = np.asarray(week_values, dtype=np.float64).reshape(-1, SLOTS_PER_DAY)
    pooled = attribution.time_of_day_phi()
    h = select_highlight(pooled, min_len, max_len)
    spec = FeedbackSpec(viz_type, tuple(days.mean(axis=0)), h, characteristic, predicted, None, tip, tuple(pooled))
    if explanation:
        text = core_text(spec)
        spec = FeedbackSpec(viz_type, spec.day_profile, h, characteristic, predicted, text, tip, spec.phi)
    return spec
