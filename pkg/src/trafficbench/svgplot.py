"""Self-contained SVG charts with no external renderer.

Plots are presentation output: a line chart for detector and rate
traces, and a timeline chart for signal phase bands. Everything is
plain string assembly with fixed-precision coordinates, so the same
data always yields the same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from .errors import ConfigurationError

__all__ = ["Series", "line_chart", "timeline_chart"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")
STATE_COLORS = {"G": "#2ca02c", "y": "#f0c419", "r": "#d62728"}

_MARGIN_L = 64
_MARGIN_R = 16
_MARGIN_T = 34
_MARGIN_B = 46


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ConfigurationError(
                f"series {self.label!r}: {len(self.x)} x values vs "
                f"{len(self.y)} y values")
        if len(self.x) == 0:
            raise ConfigurationError(f"series {self.label!r} is empty")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(1, n - 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= n - 1 + 1e-9:
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9:
        ticks.append(0.0 if abs(t) < 1e-12 else t)
        t += step
    return ticks


def _tick_label(v: float) -> str:
    if v == int(v) and abs(v) < 1e7:
        return str(int(v))
    return f"{v:g}"


def _frame(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" '
        f'font-size="13">{escape(title)}</text>',
    ]


def line_chart(title: str, series: Sequence[Series], *, x_label: str = "",
               y_label: str = "", width: int = 720, height: int = 360,
               step: bool = False, y_ref: Optional[float] = None) -> str:
    """Polyline chart of one or more series sharing the axes.

    With ``step`` each value holds until the next x, which is how
    piecewise-constant signals such as metering rates actually behave.
    ``y_ref`` draws a dashed horizontal reference (a setpoint).
    """
    if not series:
        raise ConfigurationError("line chart needs at least one series")
    x_lo = min(min(s.x) for s in series)
    x_hi = max(max(s.x) for s in series)
    y_all = [v for s in series for v in s.y]
    if y_ref is not None:
        y_all.append(y_ref)
    y_lo, y_hi = min(y_all), max(y_all)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def px(v):
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v):
        return _MARGIN_T + (y_hi - v) / (y_hi - y_lo) * plot_h

    out = _frame(width, height, title)
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444"/>')
    for t in _ticks(x_lo, x_hi):
        if not x_lo - 1e-9 <= t <= x_hi + 1e-9:
            continue
        x = px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{_MARGIN_T + plot_h}" '
                   f'x2="{_fmt(x)}" y2="{_MARGIN_T + plot_h + 4}" '
                   f'stroke="#444"/>')
        out.append(f'<text x="{_fmt(x)}" y="{_MARGIN_T + plot_h + 16}" '
                   f'text-anchor="middle">{_tick_label(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        if not y_lo - 1e-9 <= t <= y_hi + 1e-9:
            continue
        y = py(t)
        out.append(f'<line x1="{_MARGIN_L - 4}" y1="{_fmt(y)}" '
                   f'x2="{_MARGIN_L}" y2="{_fmt(y)}" stroke="#444"/>')
        out.append(f'<text x="{_MARGIN_L - 7}" y="{_fmt(y + 3.5)}" '
                   f'text-anchor="end">{_tick_label(t)}</text>')
    if x_label:
        out.append(f'<text x="{_MARGIN_L + plot_w / 2:.0f}" '
                   f'y="{height - 10}" text-anchor="middle">'
                   f'{escape(x_label)}</text>')
    if y_label:
        cy = _MARGIN_T + plot_h / 2
        out.append(f'<text x="14" y="{cy:.0f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {cy:.0f})">'
                   f'{escape(y_label)}</text>')
    if y_ref is not None and y_lo <= y_ref <= y_hi:
        y = py(y_ref)
        out.append(f'<line x1="{_MARGIN_L}" y1="{_fmt(y)}" '
                   f'x2="{_MARGIN_L + plot_w}" y2="{_fmt(y)}" '
                   f'stroke="#444" stroke-dasharray="5 4"/>')

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = []
        prev_y = None
        for xv, yv in zip(s.x, s.y):
            if step and prev_y is not None:
                pts.append(f"{_fmt(px(xv))},{_fmt(py(prev_y))}")
            pts.append(f"{_fmt(px(xv))},{_fmt(py(yv))}")
            prev_y = yv
        out.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.3"/>')
        ly = _MARGIN_T + 14 + 14 * i
        lx = _MARGIN_L + plot_w - 130
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 23}" y="{ly}">{escape(s.label)}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def timeline_chart(title: str, rows: Sequence[tuple], *, t0: float,
                   t1: float, x_label: str = "time (s)", width: int = 720,
                   row_height: int = 16) -> str:
    """Horizontal state bands, one row per labelled channel.

    ``rows`` holds (label, segments) with segments as (start, end,
    state) and state one of the signal letters G, y, r. Built for phase
    timing views: each intersection phase is a row, its green, yellow
    and red intervals are colored bands.
    """
    if not rows:
        raise ConfigurationError("timeline chart needs at least one row")
    if t1 <= t0:
        raise ConfigurationError(f"empty time window [{t0}, {t1}]")
    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = len(rows) * row_height
    height = plot_h + _MARGIN_T + _MARGIN_B

    def px(v):
        return _MARGIN_L + (v - t0) / (t1 - t0) * plot_w

    out = _frame(width, height, title)
    for i, (label, segments) in enumerate(rows):
        y = _MARGIN_T + i * row_height
        out.append(f'<text x="{_MARGIN_L - 7}" y="{_fmt(y + row_height / 2 + 3.5)}" '
                   f'text-anchor="end">{escape(str(label))}</text>')
        for start, end, state in segments:
            s = max(float(start), t0)
            e = min(float(end), t1)
            if e <= s:
                continue
            color = STATE_COLORS.get(state)
            if color is None:
                raise ConfigurationError(
                    f"unknown signal state {state!r}; expected one of "
                    f"{sorted(STATE_COLORS)}")
            out.append(f'<rect x="{_fmt(px(s))}" y="{_fmt(y + 2)}" '
                       f'width="{_fmt(px(e) - px(s))}" '
                       f'height="{row_height - 4}" fill="{color}"/>')
    out.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444"/>')
    for t in _ticks(t0, t1):
        if not t0 - 1e-9 <= t <= t1 + 1e-9:
            continue
        x = px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{_MARGIN_T + plot_h}" '
                   f'x2="{_fmt(x)}" y2="{_MARGIN_T + plot_h + 4}" '
                   f'stroke="#444"/>')
        out.append(f'<text x="{_fmt(x)}" y="{_MARGIN_T + plot_h + 16}" '
                   f'text-anchor="middle">{_tick_label(t)}</text>')
    if x_label:
        out.append(f'<text x="{_MARGIN_L + plot_w / 2:.0f}" '
                   f'y="{height - 10}" text-anchor="middle">'
                   f'{escape(x_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
