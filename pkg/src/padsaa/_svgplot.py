"""Minimal static SVG line plots (axes, up to two y-axes, legend).

Keeps the experiment harness free of plotting dependencies; the CSVs are
always the primary output.
"""

from __future__ import annotations


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = span / (n - 1)
    return [lo + i * step for i in range(n)]


def write_line_plot(path: str, x, series: dict, xlabel: str, ylabel: str,
                    title: str = "", second_axis: set | None = None,
                    y2label: str = "") -> None:
    """Write a two-series line chart; names in ``second_axis`` are scaled to
    a right-hand axis (e.g. a fraction in [0, 1])."""
    width, height = 640, 420
    ml, mr, mt, mb = 70, 70, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    second_axis = second_axis or set()
    x = list(x)
    xmin, xmax = min(x), max(x)
    left = [v for name, ys in series.items() if name not in second_axis for v in ys]
    right = [v for name, ys in series.items() if name in second_axis for v in ys]
    lmin, lmax = (min(left), max(left)) if left else (0.0, 1.0)
    pad = 0.06 * (lmax - lmin or 1.0)
    lmin, lmax = lmin - pad, lmax + pad
    rmin, rmax = (0.0, 1.05) if right else (0.0, 1.0)

    def sx(v):
        return ml + pw * (v - xmin) / (xmax - xmin or 1.0)

    def sy(v, axis2=False):
        lo, hi = (rmin, rmax) if axis2 else (lmin, lmax)
        return mt + ph * (1.0 - (v - lo) / (hi - lo or 1.0))

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt+ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt+ph}" x2="{ml+pw}" y2="{mt+ph}" stroke="black"/>',
        f'<text x="{ml+pw/2}" y="{height-12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="18" y="{mt+ph/2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt+ph/2})">{ylabel}</text>',
    ]
    if right:
        parts.append(
            f'<line x1="{ml+pw}" y1="{mt}" x2="{ml+pw}" y2="{mt+ph}" stroke="black"/>')
        parts.append(
            f'<text x="{width-16}" y="{mt+ph/2}" text-anchor="middle" '
            f'transform="rotate(90 {width-16} {mt+ph/2})">{y2label}</text>')
        for tv in _ticks(rmin, rmax):
            yy = sy(tv, True)
            parts.append(f'<text x="{ml+pw+8}" y="{yy+4}" font-size="10">{tv:.2g}</text>')
    for tv in _ticks(xmin, xmax):
        xx = sx(tv)
        parts.append(f'<line x1="{xx}" y1="{mt+ph}" x2="{xx}" y2="{mt+ph+4}" stroke="black"/>')
        parts.append(
            f'<text x="{xx}" y="{mt+ph+18}" text-anchor="middle" font-size="10">{tv:.3g}</text>')
    for tv in _ticks(lmin, lmax):
        yy = sy(tv)
        parts.append(f'<line x1="{ml-4}" y1="{yy}" x2="{ml}" y2="{yy}" stroke="black"/>')
        parts.append(
            f'<text x="{ml-8}" y="{yy+4}" text-anchor="end" font-size="10">{tv:.4g}</text>')
    for idx, (name, ys) in enumerate(series.items()):
        axis2 = name in second_axis
        pts = " ".join(f"{sx(xv):.1f},{sy(yv, axis2):.1f}"
                       for xv, yv in zip(x, ys) if yv == yv)
        color = colors[idx % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        ly = mt + 16 + 16 * idx
        parts.append(f'<line x1="{ml+12}" y1="{ly-4}" x2="{ml+36}" y2="{ly-4}" '
                     f'stroke="{color}" stroke-width="1.8"/>')
        parts.append(f'<text x="{ml+42}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
