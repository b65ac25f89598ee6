"""Tiny deterministic SVG line charts.

Charts are conveniences; the CSVs are the ground truth. Everything here is
plain string assembly with fixed formatting so that identical inputs produce
byte-identical files (no timestamps, no library version strings).
"""

from __future__ import annotations

WIDTH = 640
HEIGHT = 420
MARGIN_LEFT = 70
MARGIN_RIGHT = 150
MARGIN_TOP = 40
MARGIN_BOTTOM = 50

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def line_chart_svg(
    title: str,
    x_label: str,
    y_label: str,
    series: dict[str, list[tuple[float, float]]],
) -> str:
    """Render named (x, y) polylines with axes, ticks, and a legend."""
    points = [p for pts in series.values() for p in pts]
    if not points:
        xs_lo, xs_hi, ys_lo, ys_hi = 0.0, 1.0, 0.0, 1.0
    else:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        xs_lo, xs_hi = min(xs), max(xs)
        ys_lo, ys_hi = min(ys), max(ys)
        if xs_hi == xs_lo:
            xs_hi = xs_lo + 1.0
        if ys_hi == ys_lo:
            ys_hi = ys_lo + 1.0
        pad = 0.05 * (ys_hi - ys_lo)
        ys_lo -= pad
        ys_hi += pad

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(x: float) -> float:
        return MARGIN_LEFT + (x - xs_lo) / (xs_hi - xs_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN_TOP + plot_h - (y - ys_lo) / (ys_hi - ys_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
    ]
    # axes
    x0, y0 = MARGIN_LEFT, MARGIN_TOP + plot_h
    out.append(
        f'<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{x0}" y1="{y0}" x2="{MARGIN_LEFT + plot_w}" y2="{y0}" stroke="black"/>'
    )
    for tx in _ticks(xs_lo, xs_hi):
        px = sx(tx)
        out.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(
            f'<text x="{_fmt(px)}" y="{y0 + 20}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _ticks(ys_lo, ys_hi):
        py = sy(ty)
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(
            f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{_fmt(ty)}</text>'
        )
    out.append(
        f'<text x="{MARGIN_LEFT + plot_w // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    out.append(
        f'<text x="18" y="{MARGIN_TOP + plot_h // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {MARGIN_TOP + plot_h // 2})">{y_label}</text>'
    )

    for idx, (name, pts) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        if pts:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
            out.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
            for x, y in pts:
                out.append(
                    f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" fill="{color}"/>'
                )
        ly = MARGIN_TOP + 14 + idx * 18
        lx = MARGIN_LEFT + plot_w + 12
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{lx + 24}" y="{ly}" font-family="sans-serif" font-size="11">{name}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
