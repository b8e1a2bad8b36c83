"""Minimal SVG line plots (no plotting dependency).

Fixed-precision coordinates and no timestamps, so regenerating a report
from the same inputs produces byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 72, 36, 46
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    xs: list[float]
    ys: list[float]
    color: str
    axis: str = "left"  # "left" or "right"
    dash: str | None = None


def _finite_pairs(series: Series):
    return [(x, y) for x, y in zip(series.xs, series.ys) if math.isfinite(x) and math.isfinite(y)]


def _axis_range(values):
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(
    series: list[Series],
    title: str,
    xlabel: str,
    ylabel: str,
    ylabel_right: str | None = None,
    width: int = 720,
    height: int = 440,
    notes: list[str] | None = None,
) -> str:
    plot_w = width - MARGIN_L - MARGIN_R
    plot_h = height - MARGIN_T - MARGIN_B
    pts = {id(s): _finite_pairs(s) for s in series}
    all_x = [x for s in series for x, _ in pts[id(s)]]
    x_lo, x_hi = _axis_range(all_x)
    left_y = [y for s in series if s.axis == "left" for _, y in pts[id(s)]]
    right_y = [y for s in series if s.axis == "right" for _, y in pts[id(s)]]
    yl_lo, yl_hi = _axis_range(left_y)
    yr_lo, yr_hi = _axis_range(right_y)

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y, lo, hi):
        return MARGIN_T + plot_h - (y - lo) / (hi - lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        px = sx(tx)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{MARGIN_T + plot_h}" x2="{_fmt(px)}" '
            f'y2="{MARGIN_T + plot_h + 4}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{_fmt(px)}" y="{MARGIN_T + plot_h + 16}" text-anchor="middle">{tx:.4g}</text>'
        )
    for ty in _ticks(yl_lo, yl_hi):
        py = sy(ty, yl_lo, yl_hi)
        out.append(
            f'<line x1="{MARGIN_L - 4}" y1="{_fmt(py)}" x2="{MARGIN_L}" y2="{_fmt(py)}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{MARGIN_L - 7}" y="{_fmt(py + 3)}" text-anchor="end">{ty:.4g}</text>'
        )
    if right_y:
        for ty in _ticks(yr_lo, yr_hi):
            py = sy(ty, yr_lo, yr_hi)
            out.append(
                f'<line x1="{MARGIN_L + plot_w}" y1="{_fmt(py)}" x2="{MARGIN_L + plot_w + 4}" '
                f'y2="{_fmt(py)}" stroke="#444"/>'
            )
            out.append(
                f'<text x="{MARGIN_L + plot_w + 7}" y="{_fmt(py + 3)}" text-anchor="start">{ty:.4g}</text>'
            )
    out.append(
        f'<text x="{MARGIN_L + plot_w / 2:.0f}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>'
    )
    out.append(
        f'<text x="14" y="{MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {MARGIN_T + plot_h / 2:.0f})">{_esc(ylabel)}</text>'
    )
    if ylabel_right and right_y:
        rx = width - 14
        out.append(
            f'<text x="{rx}" y="{MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(90 {rx} {MARGIN_T + plot_h / 2:.0f})">{_esc(ylabel_right)}</text>'
        )
    for s in series:
        pairs = pts[id(s)]
        if not pairs:
            continue
        lo, hi = (yl_lo, yl_hi) if s.axis == "left" else (yr_lo, yr_hi)
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y, lo, hi))}" for x, y in pairs)
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(
            f'<polyline points="{coords}" fill="none" stroke="{s.color}" stroke-width="1.5"{dash}/>'
        )
    for i, s in enumerate(series):
        ly = MARGIN_T + 14 + 14 * i
        lx = MARGIN_L + 10
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{s.color}" stroke-width="1.5"{dash}/>'
        )
        out.append(f'<text x="{lx + 28}" y="{ly}">{_esc(s.label)}</text>')
    for i, note in enumerate(notes or []):
        out.append(
            f'<text x="{MARGIN_L + 10}" y="{MARGIN_T + plot_h - 8 - 14 * i}" fill="#666">{_esc(note)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roc_chart(curves: list[tuple[str, list[float], list[float]]], title: str, size: int = 440) -> str:
    """Square ROC plot with the chance diagonal."""
    series = [
        Series(label=label, xs=list(fpr), ys=list(tpr), color=PALETTE[i % len(PALETTE)])
        for i, (label, fpr, tpr) in enumerate(curves)
    ]
    series.append(
        Series(label="chance", xs=[0.0, 1.0], ys=[0.0, 1.0], color="#999", dash="4 3")
    )
    return line_chart(
        series,
        title=title,
        xlabel="false positive rate",
        ylabel="true positive rate",
        width=size + MARGIN_L + MARGIN_R,
        height=size + MARGIN_T + MARGIN_B,
    )
