"""Result tables and their on-disk forms: CSV, JSON sidecars and plain SVG plots."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row {row!r} does not match columns {self.columns}")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_to_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


# -- SVG ---------------------------------------------------------------------

_W, _H = 640, 400
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 70, 20, 40, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _frame(title: str, xlabel: str, ylabel: str, x_range, y_range) -> list[str]:
    x0, x1 = x_range
    y0, y1 = y_range
    pw, ph = _W - _PAD_L - _PAD_R, _H - _PAD_T - _PAD_B
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<rect x="{_PAD_L}" y="{_PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{_PAD_L + pw / 2}" y="{_H - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{_PAD_T + ph / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {_PAD_T + ph / 2})">{escape(ylabel)}</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        px = _PAD_L + frac * pw
        py = _PAD_T + ph - frac * ph
        parts.append(f'<text x="{px:.1f}" y="{_PAD_T + ph + 16}" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{_fmt(x0 + frac * (x1 - x0))}</text>')
        parts.append(f'<text x="{_PAD_L - 6}" y="{py + 3:.1f}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{_fmt(y0 + frac * (y1 - y0))}</text>')
    return parts


def _span(lo: float, hi: float) -> tuple[float, float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return 0.0, 1.0
    if hi == lo:
        return lo - 0.5, hi + 0.5
    return lo, hi


def line_plot_svg(
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    title: str,
    xlabel: str,
    ylabel: str,
    log_y: bool = False,
) -> str:
    def ty(v):
        return math.log10(v) if log_y else v

    ys = [ty(v) for s in series.values() for v in s if (v > 0 or not log_y) and math.isfinite(v)]
    x_range = _span(min(x), max(x))
    y_range = _span(min(ys, default=0.0), max(ys, default=1.0))
    pw, ph = _W - _PAD_L - _PAD_R, _H - _PAD_T - _PAD_B
    parts = _frame(title, xlabel, ("log10 " if log_y else "") + ylabel, x_range, y_range)
    for n, (name, values) in enumerate(series.items()):
        pts = []
        for xv, yv in zip(x, values):
            if not math.isfinite(yv) or (log_y and yv <= 0):
                continue
            px = _PAD_L + (xv - x_range[0]) / (x_range[1] - x_range[0]) * pw
            py = _PAD_T + ph - (ty(yv) - y_range[0]) / (y_range[1] - y_range[0]) * ph
            pts.append(f"{px:.2f},{py:.2f}")
        color = _COLORS[n % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{_PAD_L + 10}" y="{_PAD_T + 16 + 14 * n}" fill="{color}" font-family="sans-serif" '
                     f'font-size="11">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(edges: Sequence[float], counts: Sequence[int], title: str, xlabel: str) -> str:
    x_range = _span(edges[0], edges[-1])
    y_range = (0.0, float(max(max(counts), 1)))
    pw, ph = _W - _PAD_L - _PAD_R, _H - _PAD_T - _PAD_B
    parts = _frame(title, xlabel, "count", x_range, y_range)
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        px = _PAD_L + (lo - x_range[0]) / (x_range[1] - x_range[0]) * pw
        bw = (hi - lo) / (x_range[1] - x_range[0]) * pw
        bh = c / y_range[1] * ph
        parts.append(f'<rect x="{px:.2f}" y="{_PAD_T + ph - bh:.2f}" width="{max(bw, 0.5):.2f}" height="{bh:.2f}" '
                     f'fill="{_COLORS[0]}" stroke="white" stroke-width="0.3"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
