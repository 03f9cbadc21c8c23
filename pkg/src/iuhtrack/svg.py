"""Minimal dependency-free SVG charts: line/band panels and scatter panels.

Output is deterministic text (fixed float formatting, no timestamps) so
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

PANEL_W, PANEL_H = 300, 240
MARGIN = dict(left=55, right=15, top=30, bottom=45)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


@dataclass
class Series:
    """One plotted layer.

    Attributes:
        x, y: data coordinates.
        label: legend text.
        kind: "line", "points" or "band" (band uses ``y`` as lower and
            ``y2`` as upper edge).
    """

    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    kind: str = "line"
    y2: Optional[Sequence[float]] = None
    color: Optional[str] = None


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    log_x: bool = False


class _Axes:
    def __init__(self, panel: Panel, ox: float, oy: float):
        self.ox, self.oy = ox, oy
        self.log_x = panel.log_x
        xs = [self._tx(v) for s in panel.series for v in s.x if _finite(v)]
        ys = [v for s in panel.series for v in list(s.y) + list(s.y2 or []) if _finite(v)]
        self.x0, self.x1 = _span(xs)
        self.y0, self.y1 = _span(ys)
        self.w = PANEL_W - MARGIN["left"] - MARGIN["right"]
        self.h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]

    def _tx(self, v: float) -> float:
        return math.log10(v) if self.log_x else v

    def px(self, v: float) -> float:
        return self.ox + MARGIN["left"] + (self._tx(v) - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, v: float) -> float:
        return self.oy + MARGIN["top"] + (1 - (v - self.y0) / (self.y1 - self.y0)) * self.h


def _finite(v) -> bool:
    return v is not None and math.isfinite(v)


def _span(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if hi == lo:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _panel_svg(panel: Panel, ox: float, oy: float) -> list[str]:
    ax = _Axes(panel, ox, oy)
    left, top = ox + MARGIN["left"], oy + MARGIN["top"]
    out = [
        f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{ax.w}" height="{ax.h}" '
        'fill="none" stroke="#444"/>',
        f'<text x="{_fmt(ox + PANEL_W / 2)}" y="{_fmt(oy + 18)}" text-anchor="middle" '
        f'font-size="13">{escape(panel.title)}</text>',
        f'<text x="{_fmt(left + ax.w / 2)}" y="{_fmt(oy + PANEL_H - 8)}" text-anchor="middle" '
        f'font-size="11">{escape(panel.xlabel)}</text>',
        f'<text x="{_fmt(ox + 12)}" y="{_fmt(top + ax.h / 2)}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 {_fmt(ox + 12)} {_fmt(top + ax.h / 2)})">'
        f"{escape(panel.ylabel)}</text>",
    ]
    for i in range(5):
        fy = ax.y0 + (ax.y1 - ax.y0) * i / 4
        fx = ax.x0 + (ax.x1 - ax.x0) * i / 4
        ypix = ax.py(fy)
        xpix = left + ax.w * i / 4
        xval = 10**fx if ax.log_x else fx
        out.append(f'<text x="{_fmt(left - 4)}" y="{_fmt(ypix + 4)}" text-anchor="end" '
                   f'font-size="9">{_tick_label(fy)}</text>')
        out.append(f'<text x="{_fmt(xpix)}" y="{_fmt(top + ax.h + 14)}" text-anchor="middle" '
                   f'font-size="9">{_tick_label(xval)}</text>')
    for j, s in enumerate(panel.series):
        color = s.color or COLORS[j % len(COLORS)]
        pts = [(x, y) for x, y in zip(s.x, s.y) if _finite(x) and _finite(y)]
        if s.kind == "band":
            upper = [(x, y) for x, y in zip(s.x, s.y2) if _finite(x) and _finite(y)]
            poly = [(ax.px(x), ax.py(y)) for x, y in pts] + \
                   [(ax.px(x), ax.py(y)) for x, y in reversed(upper)]
            coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in poly)
            out.append(f'<polygon points="{coords}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        elif s.kind == "line":
            coords = " ".join(f"{_fmt(ax.px(x))},{_fmt(ax.py(y))}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        else:
            for x, y in pts:
                out.append(f'<circle cx="{_fmt(ax.px(x))}" cy="{_fmt(ax.py(y))}" r="3" '
                           f'fill="{color}" fill-opacity="0.8"/>')
    labelled = [(j, s) for j, s in enumerate(panel.series) if s.label]
    for n, (j, s) in enumerate(labelled):
        color = s.color or COLORS[j % len(COLORS)]
        y = top + 12 + 13 * n
        out.append(f'<rect x="{_fmt(left + 6)}" y="{_fmt(y - 8)}" width="10" height="8" '
                   f'fill="{color}"/>')
        out.append(f'<text x="{_fmt(left + 20)}" y="{_fmt(y)}" font-size="9">'
                   f"{escape(s.label)}</text>")
    return out


def render(panels: Sequence[Panel], title: str = "", provenance: Optional[dict] = None) -> str:
    """Lay panels out in one row and return the SVG document."""
    width = PANEL_W * len(panels)
    height = PANEL_H + (24 if title else 0)
    dy = 24 if title else 0
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    if provenance:
        meta = " ".join(f"{k}={v}" for k, v in provenance.items())
        lines.append(f"<!-- {escape(meta)} -->")
    lines.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
                 f'viewBox="0 0 {width} {height}" font-family="sans-serif">')
    lines.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    if title:
        lines.append(f'<text x="{width / 2:.1f}" y="17" text-anchor="middle" font-size="14">'
                     f"{escape(title)}</text>")
    for i, panel in enumerate(panels):
        lines.extend(_panel_svg(panel, i * PANEL_W, dy))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
