"""Self-contained SVG line charts of per-frame capacity series."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=64, right=160, top=40, bottom=48)


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


@dataclass
class ChartSpec:
    inputs: list[str]
    series: str
    reference: float | None = None
    output: str = "chart.svg"
    title: str = ""
    metadata: list[dict] = field(default_factory=list)


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def render_svg(series: list[Series], title: str = "", ylabel: str = "bps/Hz",
               reference: float | None = None, metadata: list[dict] | None = None) -> str:
    xs = [v for s in series for v in s.x]
    ys = [v for s in series for v in s.y]
    if reference is not None:
        ys.append(reference)
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = min(ys), max(ys)
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">']
    out.append(f"<metadata>{escape(json.dumps(metadata or [], sort_keys=True))}</metadata>")
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="#444"/>')
    for t in _nice_ticks(y0, y1):
        if y0 <= t <= y1:
            out.append(f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{py(t):.2f}" '
                       f'y2="{py(t):.2f}" stroke="#e5e5e5"/>')
            out.append(f'<text x="{MARGIN["left"] - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    for t in _nice_ticks(x0, x1):
        if x0 <= t <= x1:
            out.append(f'<text x="{px(t):.2f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">frame</text>')
    out.append(f'<text transform="translate(16 {MARGIN["top"] + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    if reference is not None:
        out.append(f'<line class="reference" x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" '
                   f'y1="{py(reference):.2f}" y2="{py(reference):.2f}" stroke="black" '
                   f'stroke-dasharray="6 4"/>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.x, s.y))
        out.append(f'<polyline class="series" data-label="{escape(s.label)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 16 + 18 * i
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(s.label)}</text>')
    if reference is not None:
        ly = MARGIN["top"] + 16 + 18 * len(series)
        lx = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 4}" y2="{ly - 4}" stroke="black" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">target {reference:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
