"""Render per-turn score curves as SVG and summary tables as CSV.

The SVG writer is deliberately dependency-free: fixed 1-10 score axis, one
polyline per curve, and an optional dashed vertical rule where a task
switches sub-tasks mid-dialogue.
"""

from __future__ import annotations

import csv
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .mteval import BenchSummary, TurnCurve
from .rounding import format_signed

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH, _HEIGHT = 720, 440
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 60, 24, 40, 52
_Y_MIN, _Y_MAX = 1.0, 10.0


def _x_pos(turn: int, t_min: int, t_max: int) -> float:
    span = max(t_max - t_min, 1)
    return _MARGIN_L + (turn - t_min) / span * (_WIDTH - _MARGIN_L - _MARGIN_R)


def _y_pos(value: float) -> float:
    frac = (value - _Y_MIN) / (_Y_MAX - _Y_MIN)
    return _HEIGHT - _MARGIN_B - frac * (_HEIGHT - _MARGIN_T - _MARGIN_B)


def render_curves_svg(
    curves: Sequence[TurnCurve],
    *,
    boundary: int | None = None,
    title: str = "Per-turn scores",
) -> str:
    if not curves:
        raise ValueError("no curves to render")
    turns = sorted({t for curve in curves for t in curve.means})
    t_min, t_max = turns[0], turns[-1]
    if boundary is None:
        boundaries = {c.boundary for c in curves if c.boundary is not None}
        boundary = boundaries.pop() if len(boundaries) == 1 else None

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{_escape(title)}</text>',
    ]

    # axes and gridlines
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    y0, y1 = _HEIGHT - _MARGIN_B, _MARGIN_T
    for score in range(int(_Y_MIN), int(_Y_MAX) + 1):
        y = _y_pos(score)
        parts.append(f'<line x1="{x0}" y1="{y:.1f}" x2="{x1}" y2="{y:.1f}" stroke="#eeeeee"/>')
        parts.append(f'<text x="{x0 - 8}" y="{y + 4:.1f}" text-anchor="end" fill="#444444">{score}</text>')
    for turn in turns:
        x = _x_pos(turn, t_min, t_max)
        parts.append(f'<text x="{x:.1f}" y="{y0 + 18}" text-anchor="middle" fill="#444444">{turn}</text>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#333333"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333333"/>')
    parts.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" fill="#444444">turn</text>'
    )

    if boundary is not None and t_min <= boundary <= t_max:
        x = _x_pos(boundary, t_min, t_max)
        parts.append(
            f'<line x1="{x:.1f}" y1="{y1}" x2="{x:.1f}" y2="{y0}" '
            f'stroke="#888888" stroke-dasharray="6,4"/>'
        )

    for i, curve in enumerate(curves):
        color = _COLORS[i % len(_COLORS)]
        points = " ".join(
            f"{_x_pos(t, t_min, t_max):.1f},{_y_pos(float(curve.means[t])):.1f}" for t in curve.ordered_turns()
        )
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>')
        for t in curve.ordered_turns():
            parts.append(
                f'<circle cx="{_x_pos(t, t_min, t_max):.1f}" cy="{_y_pos(float(curve.means[t])):.1f}" '
                f'r="3" fill="{color}"/>'
            )
        label = f"{curve.task} {curve.condition}".strip()
        ly = _MARGIN_T + 16 * i
        parts.append(f'<line x1="{x1 - 150}" y1="{ly}" x2="{x1 - 126}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{x1 - 120}" y="{ly + 4}" fill="#222222">{_escape(label)}</text>')

    parts.append("</svg>")
    return "\n".join(parts)


def write_curves_svg(curves: Sequence[TurnCurve], path: str | Path, **kwargs) -> Path:
    path = Path(path)
    path.write_text(render_curves_svg(curves, **kwargs) + "\n", "utf-8")
    return path


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_bench_summary_csv(
    summary: BenchSummary,
    task_means: dict[str, dict[str, float | Decimal]],
    path: str | Path,
) -> Path:
    """ST/MT per-task means plus overall averages and the signed MT-ST delta."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "st", "mt"])
        for task, means in task_means.items():
            writer.writerow([task, f"{float(means['st']):.2f}", f"{float(means['mt']):.2f}"])
        writer.writerow(["avg", f"{summary.st_avg:.2f}", f"{summary.mt_avg:.2f}"])
        writer.writerow(["delta", "", format_signed(summary.delta)])
    return path
