"""Minimal self-contained SVG writer for log-log convergence plots.

One polyline per (method, rank) series with min/max whiskers per point, decade
ticks on both axes, and dashed order-1/2/4 guide lines anchored at the lower
right. No plotting library involved; output is deterministic for fixed input.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 760, 540
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 170, 40, 55

_PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


class _Axes:
    def __init__(self, xs, ys):
        self.x0, self.x1 = math.floor(min(xs)), math.ceil(max(xs))
        self.y0, self.y1 = math.floor(min(ys)), math.ceil(max(ys))
        if self.x1 == self.x0:
            self.x1 += 1
        if self.y1 == self.y0:
            self.y1 += 1

    def px(self, lx: float) -> float:
        w = WIDTH - MARGIN_L - MARGIN_R
        return MARGIN_L + (lx - self.x0) / (self.x1 - self.x0) * w

    def py(self, ly: float) -> float:
        h = HEIGHT - MARGIN_T - MARGIN_B
        return MARGIN_T + (self.y1 - ly) / (self.y1 - self.y0) * h


def render_convergence_svg(summary, title: str, path: str) -> None:
    """summary: SweepSummary with .points keyed by (method, rank)."""
    series = {k: [p for p in v if p.mean > 0 and math.isfinite(p.mean)] for k, v in summary.points.items()}
    series = {k: v for k, v in series.items() if v}
    if not series:
        raise ValueError("nothing to plot")
    xs = [math.log10(p.h) for pts in series.values() for p in pts]
    ys = []
    for pts in series.values():
        for p in pts:
            ys.append(math.log10(p.mean))
            if p.min > 0:
                ys.append(math.log10(p.min))
            ys.append(math.log10(p.max))
    ax = _Axes(xs, ys)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{_esc(title)}</text>',
    ]

    # frame and decade ticks
    left, right = ax.px(ax.x0), ax.px(ax.x1)
    top, bottom = ax.py(ax.y1), ax.py(ax.y0)
    parts.append(
        f'<rect x="{left:.1f}" y="{top:.1f}" width="{right - left:.1f}" '
        f'height="{bottom - top:.1f}" fill="none" stroke="black"/>'
    )
    for d in range(ax.x0, ax.x1 + 1):
        x = ax.px(d)
        parts.append(f'<line x1="{x:.1f}" y1="{bottom:.1f}" x2="{x:.1f}" y2="{bottom + 5:.1f}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{bottom + 20:.1f}" text-anchor="middle">1e{d}</text>')
    for d in range(ax.y0, ax.y1 + 1):
        y = ax.py(d)
        parts.append(f'<line x1="{left - 5:.1f}" y1="{y:.1f}" x2="{left:.1f}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8:.1f}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    parts.append(
        f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">step size h</text>'
    )
    parts.append(
        f'<text x="18" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(top + bottom) / 2:.1f})">error (Frobenius)</text>'
    )

    # order guide lines through the lower-right data corner
    x_hi = max(xs)
    y_lo = min(math.log10(p.mean) for pts in series.values() for p in pts)
    for order in (1, 2, 4):
        pts = []
        for lx in (ax.x0, x_hi):
            ly = y_lo + order * (lx - x_hi)
            pts.append((lx, ly))
        seg = [(lx, ly) for lx, ly in pts if ly >= ax.y0 - 2]
        d = " ".join(f"{ax.px(lx):.1f},{ax.py(ly):.1f}" for lx, ly in seg)
        parts.append(f'<polyline points="{d}" fill="none" stroke="#bbbbbb" stroke-dasharray="5,4"/>')
        parts.append(
            f'<text x="{ax.px(x_hi) - 4:.1f}" y="{ax.py(y_lo + 0.12) - 4 - 14 * (order - 1):.1f}" '
            f'text-anchor="end" fill="#999999">h^{order}</text>'
        )

    # data series
    for idx, (key, pts) in enumerate(sorted(series.items())):
        method, rank = key
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{ax.px(math.log10(p.h)):.1f},{ax.py(math.log10(p.mean)):.1f}" for p in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for p in pts:
            x = ax.px(math.log10(p.h))
            y = ax.py(math.log10(p.mean))
            if p.min > 0 and p.max > p.min:
                parts.append(
                    f'<line x1="{x:.1f}" y1="{ax.py(math.log10(p.max)):.1f}" '
                    f'x2="{x:.1f}" y2="{ax.py(math.log10(p.min)):.1f}" stroke="{color}" stroke-width="0.8"/>'
                )
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')
        ly = MARGIN_T + 16 + 18 * idx
        lx = WIDTH - MARGIN_R + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}">{_esc(f"{method} r={rank}")}</text>')

    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
