"""Self-contained SVG line charts from result CSVs.

The CSV stays the source of truth; charts are a convenience. Each series
becomes one ``<polyline>`` and one legend entry. Data coordinates map to
pixels through a per-axis affine transform whose data range is recorded on
the plot group (``data-xmin`` and friends) so a chart can be read back.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from ..errors import DataError

WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass(frozen=True)
class ChartSpec:
    """Which columns to draw.

    Args:
        x: x-axis column.
        y: one y column, or several (one series each).
        group: optional column splitting rows into series (with a single ``y``).
        title: chart title; defaults to ``"<y> vs <x>"``.
    """

    x: str
    y: tuple | str
    group: str | None = None
    title: str | None = None


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: CSV has no data rows")
    return rows


def _series(rows, spec):
    ys = (spec.y,) if isinstance(spec.y, str) else tuple(spec.y)
    for col in (spec.x, *ys, *((spec.group,) if spec.group else ())):
        if col not in rows[0]:
            raise DataError(f"column {col!r} not in CSV header {list(rows[0])}")
    out = {}

    def point(r, y):
        # undefined cells (e.g. an empty layer) are left out of the line
        x, v = float(r[spec.x]), float(r[y])
        return (x, v) if math.isfinite(x) and math.isfinite(v) else None

    if spec.group:
        if len(ys) != 1:
            raise DataError("group needs exactly one y column")
        for r in rows:
            pt = point(r, ys[0])
            if pt is not None:
                out.setdefault(f"{spec.group}={r[spec.group]}", []).append(pt)
    else:
        for y in ys:
            pts = [pt for pt in (point(r, y) for r in rows) if pt is not None]
            if pts:
                out[y] = pts
    return out


def _span(lo, hi):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DataError("non-finite values cannot be charted")
    if hi == lo:
        return lo - 0.5, hi + 0.5
    return lo, hi


def to_pixels(x, y, xr, yr):
    """Affine data-to-pixel map of the plot area."""
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    px = LEFT + (x - xr[0]) / (xr[1] - xr[0]) * pw
    py = TOP + ph - (y - yr[0]) / (yr[1] - yr[0]) * ph
    return px, py


def from_pixels(px, py, xr, yr):
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    return (xr[0] + (px - LEFT) / pw * (xr[1] - xr[0]),
            yr[0] + (TOP + ph - py) / ph * (yr[1] - yr[0]))


def render_svg(series, x_label, y_label, title):
    if not series:
        raise DataError("nothing to plot")
    pts = [p for s in series.values() for p in s]
    xr = _span(min(p[0] for p in pts), max(p[0] for p in pts))
    yr = _span(min(p[1] for p in pts), max(p[1] for p in pts))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
             f'{escape(title)}</text>']
    x0, y0 = to_pixels(xr[0], yr[0], xr, yr)
    x1, y1 = to_pixels(xr[1], yr[1], xr, yr)
    parts.append(f'<g class="axes" stroke="black"><line x1="{x0:.2f}" y1="{y0:.2f}" '
                 f'x2="{x1:.2f}" y2="{y0:.2f}"/><line x1="{x0:.2f}" y1="{y0:.2f}" '
                 f'x2="{x0:.2f}" y2="{y1:.2f}"/></g>')
    for i in range(5):
        xv = xr[0] + i * (xr[1] - xr[0]) / 4
        yv = yr[0] + i * (yr[1] - yr[0]) / 4
        px, _ = to_pixels(xv, yr[0], xr, yr)
        _, py = to_pixels(xr[0], yv, xr, yr)
        parts.append(f'<text x="{px:.2f}" y="{y0 + 16:.2f}" text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<text x="{x0 - 6:.2f}" y="{py + 4:.2f}" text-anchor="end">{yv:.4g}</text>')
    parts.append(f'<text class="xlabel" x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 18}" '
                 f'text-anchor="middle">{escape(x_label)}</text>')
    parts.append(f'<text class="ylabel" x="16" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">{escape(y_label)}</text>')
    parts.append(f'<g class="plot" data-xmin="{xr[0]!r}" data-xmax="{xr[1]!r}" '
                 f'data-ymin="{yr[0]!r}" data-ymax="{yr[1]!r}">')
    for i, (name, s) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        coords = " ".join("{:.6f},{:.6f}".format(*to_pixels(x, y, xr, yr)) for x, y in s)
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" '
                     f'points="{coords}"/>')
    parts.append("</g>")
    for i, name in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        ly = TOP + 10 + 18 * i
        lx = WIDTH - RIGHT + 14
        parts.append(f'<g class="legend"><line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" '
                     f'stroke="{colour}" stroke-width="2"/><text x="{lx + 26}" y="{ly + 4}">'
                     f'{escape(name)}</text></g>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(csv_path, spec, out_path=None):
    """Draw ``spec`` from ``csv_path`` into ``out_path`` (default: same stem, ``.svg``).

    Raises:
        DataError: empty CSV or missing columns.
    """
    rows = read_csv(csv_path)
    series = _series(rows, spec)
    y_label = spec.y if isinstance(spec.y, str) else ", ".join(spec.y)
    title = spec.title or f"{y_label} vs {spec.x}"
    svg = render_svg(series, spec.x, y_label, title)
    out_path = out_path or str(csv_path).rsplit(".", 1)[0] + ".svg"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return out_path
