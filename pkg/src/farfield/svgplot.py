"""Minimal hand-emitted SVG log-log plots (no plotting dependency).

Only what the decay diagnostics need: points joined by polylines on a
log-log canvas with decade ticks.  Output is deterministic text.
"""

from __future__ import annotations

import math
from pathlib import Path

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _ticks(lo: float, hi: float):
    first = math.floor(lo)
    last = math.ceil(hi)
    return [t for t in range(first, last + 1) if lo - 1e-9 <= t <= hi + 1e-9]


def svg_loglog(path, series: dict, title: str = "", xlabel: str = "r", ylabel: str = "value"):
    """Write a log-log plot; ``series`` maps label -> (xs, ys) with positive data."""
    pts = []
    for label, (xs, ys) in series.items():
        for x, y in zip(xs, ys):
            if x > 0 and y > 0:
                pts.append((math.log10(x), math.log10(y)))
    if not pts:
        raise ValueError("nothing positive to plot")
    lx = [p[0] for p in pts]
    ly = [p[1] for p in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(v):
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(v):
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" height="{_H - _MT - _MB}" '
        f'fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        px = sx(t)
        out.append(f'<line x1="{px:.1f}" y1="{_H - _MB}" x2="{px:.1f}" y2="{_H - _MB + 6}" stroke="black"/>')
        out.append(
            f'<text x="{px:.1f}" y="{_H - _MB + 20}" text-anchor="middle" font-size="12">1e{t}</text>'
        )
    for t in _ticks(y0, y1):
        py = sy(t)
        out.append(f'<line x1="{_ML - 6}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" stroke="black"/>')
        out.append(
            f'<text x="{_ML - 10}" y="{py + 4:.1f}" text-anchor="end" font-size="12">1e{t}</text>'
        )
    out.append(
        f'<text x="{_W / 2:.1f}" y="{_H - 12}" text-anchor="middle" font-size="13">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{_H / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {_H / 2:.1f})">{ylabel}</text>'
    )
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        coords = [
            (sx(math.log10(x)), sy(math.log10(y)))
            for x, y in zip(xs, ys)
            if x > 0 and y > 0
        ]
        if not coords:
            continue
        path_d = " ".join(f"{px:.2f},{py:.2f}" for px, py in coords)
        out.append(
            f'<polyline points="{path_d}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        for px, py in coords:
            out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}"/>')
        ly_pos = _MT + 16 + 16 * k
        out.append(
            f'<line x1="{_W - _MR - 150}" y1="{ly_pos}" x2="{_W - _MR - 120}" y2="{ly_pos}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{_W - _MR - 114}" y="{ly_pos + 4}" font-size="12">{label}</text>'
        )
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
