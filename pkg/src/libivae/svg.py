"""Plain SVG heatmaps and scatter plots with fixed axes (no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, MARGIN = 480, 480, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
# viridis anchors, interpolated linearly
_RAMP = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)


def _color(t: float) -> str:
    t = float(np.clip(t, 0.0, 1.0)) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    c = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def _open(title: str, stamp: str) -> list[str]:
    return ['<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f"<!-- {escape(stamp)} -->",
            f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>']


def heatmap(path, xs, ys, values, title: str, stamp: str, xlabel: str = "", ylabel: str = "") -> int:
    """``values[i, j]`` drawn at row ``ys``-index i (bottom to top) and column j; one rect per cell."""
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo if hi > lo else 1.0
    w = (WIDTH - 2 * MARGIN) / nx
    h = (HEIGHT - 2 * MARGIN) / ny
    out = _open(title, stamp)
    for i in range(ny):
        for j in range(nx):
            x = MARGIN + j * w
            y = HEIGHT - MARGIN - (i + 1) * h
            out.append(f'<rect class="cell" x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
                       f'fill="{_color((values[i, j] - lo) / span)}"><title>{values[i, j]:.6g}</title></rect>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 20}" text-anchor="middle" font-size="12">{escape(xlabel)} '
               f'[{float(xs[0]):.4g}, {float(xs[-1]):.4g}]</text>')
    out.append(f'<text x="16" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 16 {HEIGHT / 2})" '
               f'text-anchor="middle">{escape(ylabel)} [{float(ys[0]):.4g}, {float(ys[-1]):.4g}]</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return nx * ny


def scatter(path, groups: dict, title: str, stamp: str) -> int:
    """One circle per point of every group; the first two columns are plotted."""
    pts = [np.asarray(v, dtype=float)[:, :2] for v in groups.values()]
    allp = np.concatenate(pts) if pts else np.zeros((1, 2))
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    out = _open(title, stamp)
    n = 0
    for g, (name, p) in enumerate(zip(groups, pts)):
        color = PALETTE[g % len(PALETTE)]
        out.append(f'<g class="group" data-name="{escape(str(name))}" fill="{color}" fill-opacity="0.5">')
        for x, y in p:
            px = MARGIN + (x - lo[0]) / span[0] * (WIDTH - 2 * MARGIN)
            py = HEIGHT - MARGIN - (y - lo[1]) / span[1] * (HEIGHT - 2 * MARGIN)
            out.append(f'<circle class="pt" cx="{px:.2f}" cy="{py:.2f}" r="1.5"/>')
            n += 1
        out.append("</g>")
        out.append(f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 14 * g}" font-size="11" fill="{color}" '
                   f'text-anchor="end">{escape(str(name))}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return n
