"""CSV tables, SVG curves and run manifests.

CSV schema (LF line endings)::

    epsilon,top1_error,top5_error,mean_l2,success_rate,attack
    0.0200,87.62,49.58,0.3200,87.62,fgsm

epsilon is a fraction with 4 decimals; top1_error, top5_error and
success_rate are percentages with 2 decimals; mean_l2 has 4 decimals.

SVG geometry: the canvas is WIDTH x HEIGHT user units (viewBox
``0 0 WIDTH HEIGHT``); the plot box spans x in [LEFT, WIDTH - RIGHT] and
y in [TOP, HEIGHT - BOTTOM]. A value v (percent, 0..100) maps to
``y = TOP + (1 - v / 100) * plot_height``; epsilon e maps to
``x = LEFT + (e - e_min) / (e_max - e_min) * plot_width``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .checkpoint import atomic_write_bytes
from .metrics import SweepRecord

CSV_HEADER = ["epsilon", "top1_error", "top5_error", "mean_l2", "success_rate", "attack"]

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 60
PALETTE = ["#1f77b4", "#2ca02c", "#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

METRICS = {
    "top1_error": ("top-1 error (%)", lambda r: 100.0 * r.top1_error),
    "top5_error": ("top-5 error (%)", lambda r: 100.0 * r.top5_error),
    "top1_accuracy": ("top-1 accuracy (%)", lambda r: 100.0 * (1.0 - r.top1_error)),
    "top5_accuracy": ("top-5 accuracy (%)", lambda r: 100.0 * (1.0 - r.top5_error)),
    "success_rate": ("attack success (%)", lambda r: 100.0 * r.success_rate),
}


def format_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([f"{r.epsilon:.4f}", f"{100 * r.top1_error:.2f}", f"{100 * r.top5_error:.2f}",
                    f"{r.mean_l2:.4f}", f"{100 * r.success_rate:.2f}", r.attack])
    return buf.getvalue()


def write_csv(records, path):
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    atomic_write_bytes(path, format_csv(records).encode("utf-8"))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [SweepRecord(float(r["epsilon"]), float(r["top1_error"]) / 100, float(r["top5_error"]) / 100,
                        float(r["mean_l2"]), float(r["success_rate"]) / 100, r["attack"]) for r in rows]


def _fmt(v):
    return f"{v:.2f}"


def plot_box():
    return LEFT, TOP, WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM


def y_coord(value_percent):
    _, top, _, h = plot_box()
    return top + (1.0 - value_percent / 100.0) * h


def x_coord(eps, eps_min, eps_max):
    left, _, w, _ = plot_box()
    if eps_max == eps_min:
        return left + w / 2
    return left + (eps - eps_min) / (eps_max - eps_min) * w


def format_svg(curves, metrics=("top1_error",), title=None, manifest=None):
    """One polyline per (curve, metric) pair."""
    if not curves:
        raise ValueError("no curves to plot")
    for name, recs in curves.items():
        if not recs:
            raise ValueError(f"curve {name!r} is empty")
    for m in metrics:
        if m not in METRICS:
            raise ValueError(f"unknown metric {m!r}; choose from {sorted(METRICS)}")
    eps = [r.epsilon for recs in curves.values() for r in recs]
    e0, e1 = min(eps), max(eps)
    left, top, w, h = plot_box()
    ylabel = METRICS[metrics[0]][0] if len(metrics) == 1 else "percent"
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">']
    if manifest:
        out.append(f"<!-- manifest: {escape(str(manifest))} -->")
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>')
    for v in range(0, 101, 20):
        y = y_coord(v)
        out.append(f'<line x1="{left - 4}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">{v}</text>')
    ticks = sorted(set(eps)) if len(set(eps)) <= 11 else [e0 + i * (e1 - e0) / 5 for i in range(6)]
    for e in ticks:
        x = x_coord(e, e0, e1)
        out.append(f'<line x1="{_fmt(x)}" y1="{top + h}" x2="{_fmt(x)}" y2="{top + h + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{top + h + 17}" text-anchor="middle" font-size="10">'
                   f'{100 * e:g}</text>')
    out.append(f'<text x="{left + w / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">'
               f'epsilon (% of pixel range)</text>')
    out.append(f'<text x="18" y="{top + h / 2:.2f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 18 {top + h / 2:.2f})">{escape(ylabel)}</text>')
    series = 0
    for name, recs in curves.items():
        for m in metrics:
            color = PALETTE[series % len(PALETTE)]
            value = METRICS[m][1]
            pts = " ".join(f"{_fmt(x_coord(r.epsilon, e0, e1))},{_fmt(y_coord(value(r)))}" for r in recs)
            label = name if len(metrics) == 1 else f"{name} {m.replace('_', ' ')}"
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}">'
                       f'<title>{escape(label)}</title></polyline>')
            ly = top + 10 + 18 * series
            lx = left + w + 12
            out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
            series += 1
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(curves, path, metrics=("top1_error",), title=None, manifest=None):
    atomic_write_bytes(path, format_svg(curves, metrics, title, manifest).encode("utf-8"))


@dataclass
class RunManifest:
    command: list
    seed: int
    dataset_fingerprint: str
    config: dict
    tool_version: str
    outputs: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def write(self, path):
        atomic_write_bytes(path, self.to_json().encode("utf-8"))

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))
