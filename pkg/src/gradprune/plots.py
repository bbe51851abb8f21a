"""Self-contained SVG charts for run artifacts (no plotting dependency).

Three charts mirror the metrics a pruning run produces: training/val
loss per epoch, final sparsity per layer, and the cumulative
pruned-weight count over iterations.
"""

from __future__ import annotations

import csv
import os
from xml.sax.saxutils import escape

from .errors import ParameterError
from .training import read_metrics_csv

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 50


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _fmt(v):
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.3g}"


class _Frame:
    """Maps data coordinates onto the plot rectangle."""

    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        if y_hi <= y_lo:
            y_hi = y_lo + 1.0
        if x_hi <= x_lo:
            x_hi = x_lo + 1.0
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = x_lo, x_hi, y_lo, y_hi

    def x(self, v):
        return _ML + (v - self.x_lo) / (self.x_hi - self.x_lo) * (_W - _ML - _MR)

    def y(self, v):
        return _H - _MB - (v - self.y_lo) / (self.y_hi - self.y_lo) * (_H - _MT - _MB)


def _chart_header(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]


def _axes(frame, x_label, y_label):
    parts = [
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
    ]
    for v in _ticks(frame.x_lo, frame.x_hi):
        px = frame.x(v)
        parts.append(f'<line x1="{px:.1f}" y1="{_H - _MB}" x2="{px:.1f}" y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{_H - _MB + 18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{_fmt(v)}</text>'
        )
    for v in _ticks(frame.y_lo, frame.y_hi):
        py = frame.y(v)
        parts.append(f'<line x1="{_ML - 5}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML - 8}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{_fmt(v)}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {(_MT + _H - _MB) / 2})">'
        f"{escape(y_label)}</text>"
    )
    return parts


def line_chart(series, title, x_label, y_label):
    """series: list of (label, xs, ys).  Returns SVG text."""
    if not series or all(len(xs) == 0 for _, xs, _ in series):
        raise ParameterError("line_chart needs at least one non-empty series")
    all_x = [v for _, xs, _ in series for v in xs]
    all_y = [v for _, _, ys in series for v in ys]
    frame = _Frame(min(all_x), max(all_x), min(0.0, min(all_y)), max(all_y))
    parts = _chart_header(title)
    parts.extend(_axes(frame, x_label, y_label))
    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{frame.x(x):.1f},{frame.y(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{_W - _MR - 6}" y="{_MT + 14 + 14 * i}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif" fill="{color}">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def bar_chart(labels, values, title, y_label):
    if not labels:
        raise ParameterError("bar_chart needs at least one bar")
    frame = _Frame(0.0, float(len(labels)), 0.0, max(max(values), 1e-9))
    parts = _chart_header(title)
    parts.extend(_axes(frame, "", y_label))
    width = (_W - _ML - _MR) / len(labels)
    for i, (label, value) in enumerate(zip(labels, values)):
        x0 = _ML + i * width + width * 0.15
        y0 = frame.y(value)
        parts.append(
            f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{width * 0.7:.1f}" '
            f'height="{_H - _MB - y0:.1f}" fill="{_PALETTE[0]}"/>'
        )
        parts.append(
            f'<text x="{x0 + width * 0.35:.1f}" y="{_H - _MB + 18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{escape(str(label))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _epoch_series(rows, column):
    xs, ys = [], []
    for row in rows:
        if row.get(column) is None:
            continue
        xs.append(row["iteration"])
        ys.append(row[column])
    return xs, ys


def emit_curves(metrics_paths, out_dir):
    """Write loss / per-layer-sparsity / pruned-count SVGs for the runs.

    The loss chart overlays all given metrics files; the sparsity panel
    is skipped for fully dense runs; the pruned-count curve is read from
    a schedule.csv sitting next to each metrics file.
    """
    if not metrics_paths:
        raise ParameterError("emit_curves needs at least one metrics file")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    loss_series = []
    sparsity_rows = []
    for path in metrics_paths:
        rows, layers = read_metrics_csv(path)
        if not rows:
            raise ParameterError(f"metrics file {path} has no rows")
        label = os.path.basename(os.path.dirname(os.path.abspath(path))) or "run"
        loss_series.append((f"{label} train", *_epoch_series(rows, "train_loss")))
        val_xs, val_ys = _epoch_series(rows, "val_loss")
        if val_xs:
            loss_series.append((f"{label} val", val_xs, val_ys))
        final = rows[-1]
        if final["sparsity_overall"] > 0:
            sparsity_rows.append((label, layers, final))

    loss_path = os.path.join(out_dir, "loss.svg")
    with open(loss_path, "w") as fh:
        fh.write(line_chart(loss_series, "Training and validation loss", "iteration", "loss"))
    written.append(loss_path)

    if sparsity_rows:
        label, layers, final = sparsity_rows[0]
        values = [final[f"sparsity_{name}"] for name in layers]
        path = os.path.join(out_dir, "sparsity_layers.svg")
        with open(path, "w") as fh:
            fh.write(bar_chart(layers, values, f"Final sparsity per layer ({label})", "sparsity"))
        written.append(path)

    for path in metrics_paths:
        schedule = os.path.join(os.path.dirname(os.path.abspath(path)), "schedule.csv")
        if not os.path.exists(schedule):
            continue
        xs, ys = [], []
        with open(schedule, newline="") as fh:
            for row in csv.DictReader(fh):
                xs.append(int(row["iteration"]))
                ys.append(int(row["pruned_count"]))
        if not xs or max(ys) == 0:
            continue
        label = os.path.basename(os.path.dirname(os.path.abspath(path))) or "run"
        out_path = os.path.join(out_dir, "pruned_count.svg")
        with open(out_path, "w") as fh:
            fh.write(
                line_chart([(label, xs, ys)], "Weights pruned over training",
                           "iteration", "pruned count")
            )
        written.append(out_path)
        break
    return written
