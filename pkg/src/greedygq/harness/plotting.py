"""Dependency-free SVG line plots of percentile bands (log-scaled y axis)."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from ..errors import SchemaError
from .files import write_atomic

BAND_COLUMNS = ("samples_consumed", "p05", "p50", "p95")

DEFAULT_STYLE = {
    "width": 640,
    "height": 400,
    "margin": 56,
    "colors": ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"],
    "title": "",
    "ylabel": "",
}


def read_band_csv(text: str) -> dict[str, list[float]]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in BAND_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"band CSV lacks columns {missing}")
    cols = {c: [] for c in BAND_COLUMNS}
    for rec in reader:
        for c in BAND_COLUMNS:
            cols[c].append(float(rec[c]))
    if not cols["samples_consumed"]:
        raise SchemaError("band CSV has no data rows")
    return cols


def _num(x: float) -> str:
    return f"{x:.2f}"


def render_svg(series: list[tuple[str, dict[str, list[float]]]], style: dict | None = None) -> str:
    """SVG text for labelled band series; the y axis is log10."""
    st = {**DEFAULT_STYLE, **(style or {})}
    W, H, m = st["width"], st["height"], st["margin"]
    xs = [x for _, c in series for x in c["samples_consumed"]]
    ys = [y for _, c in series for k in ("p05", "p50", "p95") for y in c[k] if y > 0]
    if not ys:
        raise SchemaError("no positive values to draw on a log axis")
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    ly0 = math.floor(math.log10(min(ys)))
    ly1 = math.ceil(math.log10(max(ys)))
    if ly1 == ly0:
        ly1 = ly0 + 1
    floor_y = 10.0**ly0

    def px(x):
        return m + (x - x0) / (x1 - x0) * (W - 2 * m)

    def py(y):
        ly = math.log10(max(y, floor_y))
        return H - m - (ly - ly0) / (ly1 - ly0) * (H - 2 * m)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="#444"/>',
    ]
    for k in range(ly0, ly1 + 1):
        y = py(10.0**k)
        out.append(f'<line x1="{m}" y1="{_num(y)}" x2="{W - m}" y2="{_num(y)}" stroke="#ddd"/>')
        out.append(f'<text x="{m - 6}" y="{_num(y + 4)}" font-size="11" text-anchor="end">1e{k}</text>')
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        out.append(f'<text x="{_num(px(xv))}" y="{H - m + 16}" font-size="11" text-anchor="middle">{xv:g}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" font-size="12" text-anchor="middle">samples</text>')
    if st["ylabel"]:
        out.append(f'<text x="14" y="{H / 2}" font-size="12" transform="rotate(-90 14 {H / 2})" '
                   f'text-anchor="middle">{st["ylabel"]}</text>')
    if st["title"]:
        out.append(f'<text x="{W / 2}" y="{m / 2}" font-size="14" text-anchor="middle">{st["title"]}</text>')
    for i, (label, c) in enumerate(series):
        color = st["colors"][i % len(st["colors"])]
        x = c["samples_consumed"]
        upper = [f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, c["p95"])]
        lower = [f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, c["p05"])]
        out.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" '
                   f'fill-opacity="0.18" stroke="none"/>')
        for key, width, dash in (("p05", 0.8, ' stroke-dasharray="4 3"'), ("p95", 0.8, ' stroke-dasharray="4 3"'),
                                 ("p50", 1.8, "")):
            pts = " L".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, c[key]))
            out.append(f'<path d="M{pts}" fill="none" stroke="{color}" stroke-width="{width}"{dash}>'
                       f"<title>{label} {key}</title></path>")
        ly = m + 16 + 16 * i
        out.append(f'<line x1="{W - m - 110}" y1="{ly}" x2="{W - m - 90}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - m - 84}" y="{ly + 4}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot(csv_in, svg_out, style: dict | None = None, labels: list[str] | None = None) -> Path:
    """Render one or more band CSV files into a single SVG file."""
    paths = [csv_in] if isinstance(csv_in, (str, Path)) else list(csv_in)
    labels = labels or [Path(p).stem for p in paths]
    series = [(lab, read_band_csv(Path(p).read_text())) for lab, p in zip(labels, paths)]
    svg_out = Path(svg_out)
    write_atomic(svg_out, render_svg(series, style))
    return svg_out
