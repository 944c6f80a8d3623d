"""CSV and SVG output for aggregated stage curves."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

from .aggregate import AggregatedSeries

CSV_HEADER = ["stage", "mean_fid", "ci_lo", "ci_hi", "variant"]
COLORS = ["#1f3a93", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#16a085", "#2c3e50", "#b7950b"]


def write_series_csv(series: list[AggregatedSeries], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for agg in series:
            for stage, m, lo, hi in zip(agg.stages, agg.mean, agg.ci_lo, agg.ci_hi):
                writer.writerow([stage, repr(m), repr(lo), repr(hi), agg.variant])
    return path


def render_svg(series: list[AggregatedSeries], width: int = 640, height: int = 400, title: str = "") -> str:
    left, right, top, bottom = 70, 160, 30, 50
    pw, ph = width - left - right, height - top - bottom
    xs = [s for agg in series for s in agg.stages]
    ys = [v for agg in series for v in agg.ci_lo + agg.ci_hi]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        f'<line class="axis" x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="13">training stage (G steps)</text>',
        f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {top + ph / 2:.1f})">FID</text>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{xv:g}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" font-size="11">{yv:.3g}</text>')
    for i, agg in enumerate(series):
        color = COLORS[i % len(COLORS)]
        upper = " L ".join(f"{sx(s):.2f} {sy(v):.2f}" for s, v in zip(agg.stages, agg.ci_hi))
        lower = " L ".join(f"{sx(s):.2f} {sy(v):.2f}" for s, v in reversed(list(zip(agg.stages, agg.ci_lo))))
        name = escape(agg.variant or f"series {i}")
        out.append(f'<path class="ci-band" data-variant="{name}" d="M {upper} L {lower} Z" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " L ".join(f"{sx(s):.2f} {sy(v):.2f}" for s, v in zip(agg.stages, agg.mean))
        out.append(f'<path class="mean-line" data-variant="{name}" d="M {line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 16 + 18 * i
        out.append(f'<rect class="legend-swatch" x="{left + pw + 12}" y="{ly - 9}" width="14" height="10" fill="{color}"/>')
        out.append(f'<text class="legend" x="{left + pw + 32}" y="{ly}" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_series(series: AggregatedSeries | list[AggregatedSeries], out: str | Path, title: str = "") -> tuple[Path, Path]:
    """Write ``<out>.csv`` and ``<out>.svg``; ``out`` may carry either suffix."""
    if isinstance(series, AggregatedSeries):
        series = [series]
    if not series or not any(agg.stages for agg in series):
        raise ValueError("nothing to emit: aggregation is empty")
    base = Path(out)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path = write_series_csv(series, base.with_suffix(".csv"))
    svg_path = base.with_suffix(".svg")
    svg_path.write_text(render_svg(series, title=title))
    return csv_path, svg_path
