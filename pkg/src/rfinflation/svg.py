"""Minimal deterministic SVG figures: horizontal bars, lines and heatmaps.

Figures are inspection aids; the CSV written next to each one is the
authoritative output.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(x: float) -> str:
    return f"{x:.2f}"


def _tick(x: float) -> str:
    return f"{x:.4g}"


def _open(width=WIDTH, height=HEIGHT, title="") -> list[str]:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    return out


class _Axes:
    """Linear data-to-pixel mapping for the plotting area."""

    def __init__(self, xlim, ylim, width=WIDTH, height=HEIGHT):
        self.x0, self.x1 = MARGIN["left"], width - MARGIN["right"]
        self.y0, self.y1 = height - MARGIN["bottom"], MARGIN["top"]
        self.xlim = _widen(*xlim)
        self.ylim = _widen(*ylim)

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * (self.x1 - self.x0)

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + (y - lo) / (hi - lo) * (self.y1 - self.y0)

    def frame(self, xlabel="", ylabel="", xticks=True, yticks=True) -> list[str]:
        out = [f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>',
               f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>']
        if xticks:
            for v in np.linspace(*self.xlim, 5):
                x = self.px(v)
                out.append(f'<line x1="{_num(x)}" y1="{self.y0}" x2="{_num(x)}" '
                           f'y2="{self.y0 + 4}" stroke="black"/>')
                out.append(f'<text x="{_num(x)}" y="{self.y0 + 16}" text-anchor="middle">'
                           f'{_tick(v)}</text>')
        if yticks:
            for v in np.linspace(*self.ylim, 5):
                y = self.py(v)
                out.append(f'<line x1="{self.x0 - 4}" y1="{_num(y)}" x2="{self.x0}" '
                           f'y2="{_num(y)}" stroke="black"/>')
                out.append(f'<text x="{self.x0 - 6}" y="{_num(y + 4)}" text-anchor="end">'
                           f'{_tick(v)}</text>')
        if xlabel:
            out.append(f'<text x="{(self.x0 + self.x1) / 2:.1f}" y="{self.y0 + 36}" '
                       f'text-anchor="middle">{escape(xlabel)}</text>')
        if ylabel:
            cy = (self.y0 + self.y1) / 2
            out.append(f'<text x="16" y="{cy:.1f}" text-anchor="middle" '
                       f'transform="rotate(-90 16 {cy:.1f})">{escape(ylabel)}</text>')
        return out


def _widen(lo, hi):
    lo, hi = float(lo), float(hi)
    if hi - lo <= 0:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def bar_chart(labels, values, title="", xlabel="") -> str:
    """Horizontal bars, first label on top."""
    values = np.asarray(values, dtype=float)
    n = len(labels)
    height = max(HEIGHT, MARGIN["top"] + MARGIN["bottom"] + 18 * n)
    ax = _Axes((0.0, max(values.max(initial=0.0), 1e-12)), (0, n), height=height)
    ax.x0 = 150
    out = _open(height=height, title=title) + ax.frame(xlabel=xlabel, yticks=False)
    band = (ax.y0 - ax.y1) / max(n, 1)
    for i, (label, v) in enumerate(zip(labels, values)):
        top = ax.y1 + i * band + 0.15 * band
        out.append(f'<rect x="{ax.x0}" y="{_num(top)}" width="{_num(ax.px(v) - ax.x0)}" '
                   f'height="{_num(0.7 * band)}" fill="{PALETTE[0]}"/>')
        out.append(f'<text x="{ax.x0 - 6}" y="{_num(top + 0.35 * band + 4)}" '
                   f'text-anchor="end">{escape(str(label))}</text>')
    return "\n".join(out + ["</svg>"]) + "\n"


def line_chart(x, series: dict, title="", xlabel="", ylabel="") -> str:
    """One polyline per entry of ``series`` (name -> y values on ``x``)."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    ax = _Axes((x.min(), x.max()), (finite.min(), finite.max()))
    out = _open(title=title) + ax.frame(xlabel, ylabel)
    for k, (name, y) in enumerate(ys.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_num(ax.px(a))},{_num(ax.py(b))}"
                       for a, b in zip(x, y) if np.isfinite(b))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if len(ys) > 1:
            ly = MARGIN["top"] + 14 * k
            out.append(f'<text x="{ax.x1 - 4}" y="{ly + 4}" text-anchor="end" '
                       f'fill="{color}">{escape(name)}</text>')
    return "\n".join(out + ["</svg>"]) + "\n"


def _color(t: float) -> str:
    # white -> dark blue
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 - t * (255 - 8)))
    g = int(round(255 - t * (255 - 48)))
    b = int(round(255 - t * (255 - 107)))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(xgrid, ygrid, z, title="", xlabel="", ylabel="") -> str:
    """Cells ``z[i, j]`` at (xgrid[i], ygrid[j]); cell edges are grid midpoints."""
    xg, yg = np.asarray(xgrid, dtype=float), np.asarray(ygrid, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != (xg.size, yg.size):
        raise ValueError(f"z has shape {z.shape}, grids give {(xg.size, yg.size)}")
    xe, ye = _edges(xg), _edges(yg)
    ax = _Axes((xe[0], xe[-1]), (ye[0], ye[-1]))
    lo, hi = float(z.min()), float(z.max())
    span = hi - lo if hi > lo else 1.0
    out = _open(title=title)
    for i in range(xg.size):
        for j in range(yg.size):
            x0, x1 = ax.px(xe[i]), ax.px(xe[i + 1])
            y0, y1 = ax.py(ye[j + 1]), ax.py(ye[j])
            out.append(f'<rect x="{_num(x0)}" y="{_num(y0)}" width="{_num(x1 - x0)}" '
                       f'height="{_num(y1 - y0)}" fill="{_color((z[i, j] - lo) / span)}"/>')
    out += ax.frame(xlabel, ylabel)
    out.append(f'<text x="{WIDTH - MARGIN["right"]}" y="{HEIGHT - 8}" text-anchor="end">'
               f'range {_tick(lo)} to {_tick(hi)}</text>')
    return "\n".join(out + ["</svg>"]) + "\n"


def _edges(g: np.ndarray) -> np.ndarray:
    if g.size == 1:
        return np.array([g[0] - 0.5, g[0] + 0.5])
    mid = (g[1:] + g[:-1]) / 2
    return np.concatenate([[2 * g[0] - mid[0]], mid, [2 * g[-1] - mid[-1]]])


def save(text: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
