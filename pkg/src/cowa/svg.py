"""Minimal dependency-free SVG line charts (one polyline per series)."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH = 800
HEIGHT = 600
MARGIN = 70
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_line_chart(series, title: str, x_label: str, y_label: str) -> str:
    """Render labeled (xs, ys) series to an SVG document string.

    ``series`` is a list of (label, xs, ys) with xs/ys equal-length
    sequences. Axes are linear with the data's bounding box plus the origin
    of the y axis.
    """
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(0.0, min(ys_all)), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2 * MARGIN)

    def py(y: float) -> float:
        return HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2 * MARGIN)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="30" text-anchor="middle" font-size="18">'
        f"{escape(title)}</text>",
    ]
    # axes
    x0, y0 = px(x_lo), py(y_lo)
    parts.append(
        f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{px(x_hi):.1f}" y2="{y0:.1f}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x0:.1f}" y2="{py(y_hi):.1f}" stroke="black"/>'
    )
    for t in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{px(t):.1f}" y1="{y0:.1f}" x2="{px(t):.1f}" y2="{y0 + 6:.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(t):.1f}" y="{y0 + 22:.1f}" text-anchor="middle" font-size="12">{t:.3g}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{x0 - 6:.1f}" y1="{py(t):.1f}" x2="{x0:.1f}" y2="{py(t):.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x0 - 10:.1f}" y="{py(t) + 4:.1f}" text-anchor="end" font-size="12">{t:.3g}</text>'
        )
    parts.append(
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 20}" text-anchor="middle" font-size="14">'
        f"{escape(x_label)}</text>"
    )
    parts.append(
        f'<text x="20" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 20 {HEIGHT / 2:.1f})">{escape(y_label)}</text>'
    )
    # series + legend
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN + 18 * i
        parts.append(
            f'<text x="{WIDTH - MARGIN + 8}" y="{ly}" font-size="12" fill="{color}" '
            f'text-anchor="start">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
