"""Minimal SVG line plots: polylines, axes, ticks and a legend."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def line_plot(series: list[Series], *, title: str = "", xlabel: str = "", ylabel: str = "",
              logy: bool = False, hline: float | None = None, width: int = 640, height: int = 420,
              comment: str = "") -> str:
    """Render series as an SVG document string."""
    ml, mr, mt, mb = 70, 20, 40, 55
    pw, ph = width - ml - mr, height - mt - mb

    def ty(v):
        return np.log10(v) if logy else v

    xs = np.concatenate([np.asarray(s.x, float) for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(s.y, float) for s in series]) if series else np.array([0.0, 1.0])
    ok = np.isfinite(ys) & ((ys > 0) if logy else True)
    yv = ty(ys[ok]) if ok.any() else np.array([0.0, 1.0])
    if hline is not None:
        yv = np.append(yv, ty(hline))
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = float(yv.min()), float(yv.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">']
    if comment:
        out.append(f"<!-- {escape(comment).replace('--', '- -')} -->")
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.1f}" y1="{mt + ph}" x2="{px(t):.1f}" y2="{mt + ph + 5}" stroke="#333"/>')
        out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:g}" if logy else f"{t:g}"
        out.append(f'<line x1="{ml - 5}" y1="{py(t):.1f}" x2="{ml}" y2="{py(t):.1f}" stroke="#333"/>')
        out.append(f'<text x="{ml - 8}" y="{py(t) + 4:.1f}" text-anchor="end">{lab}</text>')
    if hline is not None:
        out.append(f'<line x1="{ml}" y1="{py(ty(hline)):.1f}" x2="{ml + pw}" y2="{py(ty(hline)):.1f}" '
                   'stroke="#888" stroke-dasharray="5,4"/>')
    for i, s in enumerate(series):
        x = np.asarray(s.x, float)
        y = np.asarray(s.y, float)
        keep = np.isfinite(y) & ((y > 0) if logy else True)
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[keep], ty(y[keep])))
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{pts}"/>')
        ly = mt + 16 + 16 * i
        out.append(f'<line x1="{ml + pw - 150}" y1="{ly - 4}" x2="{ml + pw - 130}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw - 125}" y="{ly}">{escape(s.label)}</text>')
    out.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
