"""Minimal SVG line plots (polylines on a framed axis)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 20, "top": 36, "bottom": 50}


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def line_plot(
    series: dict[str, tuple[Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
) -> str:
    """Render named (x, y) series as an SVG document string.

    With ``logy`` the y axis shows log10 of the values; non-positive points
    are dropped from that series.
    """
    prepared = []
    for name, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logy:
            keep &= y > 0
            y = np.where(keep, np.log10(np.where(y > 0, y, 1.0)), 0.0)
        prepared.append((name, x[keep], y[keep]))
    xs = np.concatenate([p[1] for p in prepared]) if prepared else np.zeros(0)
    ys = np.concatenate([p[2] for p in prepared]) if prepared else np.zeros(0)
    if xs.size == 0:
        xs = ys = np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        pad = 0.5 if y0 == 0 else 0.1 * abs(y0)
        y0, y1 = y0 - pad, y1 + pad

    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def px(v):
        return L + (v - x0) / (x1 - x0) * (R - L)

    def py(v):
        return B - (v - y0) / (y1 - y0) * (B - T)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{px(v):.2f}" y1="{B}" x2="{px(v):.2f}" y2="{B + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{B + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(y0, y1):
        label = f"1e{v:.1f}" if logy else _fmt(v)
        out.append(f'<line x1="{L - 5}" y1="{py(v):.2f}" x2="{L}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{label}</text>')
    for k, (name, x, y) in enumerate(prepared):
        color = COLORS[k % len(COLORS)]
        if x.size:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(
            f'<text x="{R - 8}" y="{T + 16 + 16 * k}" text-anchor="end" fill="{color}">{escape(name)}</text>'
        )
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{(L + R) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        yl = escape(("log10 " if logy else "") + ylabel)
        out.append(
            f'<text x="16" y="{(T + B) / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(T + B) / 2:.1f})">{yl}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
