"""Deterministic SVG rendering of partition snapshots and success-rate curves.

SVG is assembled as plain strings with fixed float formatting, so identical
inputs always produce identical bytes and tests can assert on the markup.
"""

from __future__ import annotations

import numpy as np

_SVG_HEADER = '<?xml version="1.0" encoding="UTF-8"?>\n'

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _f(v: float) -> str:
    return f"{v:.2f}"


def _rect(x, y, w, h, style: str) -> str:
    return (f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
            f'{style}/>')


def _sign(lo: float, hi: float) -> int:
    """+1 / -1 when the interval is sign-definite (and not a point at 0), else 0."""
    if lo >= 0.0 and hi > 0.0:
        return 1
    if hi <= 0.0 and lo < 0.0:
        return -1
    return 0


def _arrow(cx: float, cy: float, horizontal: bool, positive: bool,
           color: str, length: float = 22.0) -> str:
    """Line with a triangular head; vertical arrows point up for positive velocity."""
    half = length / 2.0
    if horizontal:
        x0, x1 = cx - half, cx + half
        if not positive:
            x0, x1 = x1, x0
        head = (f'{_f(x1)},{_f(cy)} {_f(x1 + (-6 if positive else 6))},{_f(cy - 4)} '
                f'{_f(x1 + (-6 if positive else 6))},{_f(cy + 4)}')
        line = f'<line x1="{_f(x0)}" y1="{_f(cy)}" x2="{_f(x1)}" y2="{_f(cy)}" stroke="{color}" stroke-width="2"/>'
    else:
        # SVG y grows downward; a positive (upward) velocity points to smaller y
        y0, y1 = cy + half, cy - half
        if not positive:
            y0, y1 = y1, y0
        head = (f'{_f(cx)},{_f(y1)} {_f(cx - 4)},{_f(y1 + (6 if positive else -6))} '
                f'{_f(cx + 4)},{_f(y1 + (6 if positive else -6))}')
        line = f'<line x1="{_f(cx)}" y1="{_f(y0)}" x2="{_f(cx)}" y2="{_f(y1)}" stroke="{color}" stroke-width="2"/>'
    return line + f'<polygon points="{head}" fill="{color}"/>'


def render_partition(snapshot: dict, size: int = 520) -> str:
    """Render a partition snapshot over the maze geometry.

    Assumes the 4-D maze state layout (x, y, v_x, v_y): green outlines show
    each region's position box; arrows appear for regions whose velocity
    interval is sign-definite. Regions sharing a position box get vertically
    offset arrows so velocity-only splits stay distinguishable.
    """
    margin = 30.0
    side = size - 2 * margin

    def px(x):
        return margin + x * side

    def py(y):
        return margin + (1.0 - y) * side

    parts = [_SVG_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             _rect(0, 0, size, size, 'fill="white"'),
             _rect(margin, margin, side, side, 'fill="none" stroke="black" stroke-width="1.5"')]

    maze = snapshot.get("maze") or {}
    for wall in maze.get("walls", []):
        parts.append(_rect(px(wall["x0"]), py(wall["y1"]),
                           (wall["x1"] - wall["x0"]) * side,
                           (wall["y1"] - wall["y0"]) * side,
                           'fill="#555555"'))
    if "exit" in maze:
        e = maze["exit"]
        parts.append(_rect(px(e["x0"]), py(e["y1"]), (e["x1"] - e["x0"]) * side,
                           (e["y1"] - e["y0"]) * side,
                           'fill="#d62728" fill-opacity="0.8"'))

    regions = snapshot.get("regions", [])
    groups: dict[tuple, int] = {}
    for r in regions:
        key = tuple(round(v, 9) for v in (*r["lo"][:2], *r["hi"][:2]))
        groups[key] = groups.get(key, 0) + 1
    seen: dict[tuple, int] = {}
    for r in sorted(regions, key=lambda r: r["id"]):
        lo, hi = r["lo"], r["hi"]
        parts.append(_rect(px(lo[0]), py(hi[1]), (hi[0] - lo[0]) * side,
                           (hi[1] - lo[1]) * side,
                           'fill="none" stroke="#2ca02c" stroke-width="2"'))
        if len(lo) < 4:
            continue
        key = tuple(round(v, 9) for v in (*lo[:2], *hi[:2]))
        idx = seen.get(key, 0)
        seen[key] = idx + 1
        offset = (idx - (groups[key] - 1) / 2.0) * 14.0
        cx = px((lo[0] + hi[0]) / 2.0)
        cy = py((lo[1] + hi[1]) / 2.0) + offset
        sx = _sign(lo[2], hi[2])
        sy = _sign(lo[3], hi[3])
        if sx != 0:
            parts.append(_arrow(cx, cy, horizontal=True, positive=sx > 0, color="#1b7837"))
        if sy != 0:
            parts.append(_arrow(cx, cy, horizontal=False, positive=sy > 0, color="#1b7837"))

    parts.append("</svg>")
    return "".join(parts) + "\n"


def _coarsest_grid(runs: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return min((steps for steps, _ in runs), key=len)


def render_curves(series: dict[str, list[tuple[np.ndarray, np.ndarray]]],
                  width: int = 640, height: int = 420) -> str:
    """Per-agent mean success rate vs steps with a min-max band across seeds.

    Runs with differing step grids are resampled onto the coarsest grid (the
    one with the fewest points) by linear interpolation.
    """
    if not series or all(not runs for runs in series.values()):
        raise ValueError("no metrics series to plot")
    all_runs = [run for runs in series.values() for run in runs]
    grid = _coarsest_grid(all_runs)
    x_max = float(grid[-1]) if len(grid) and grid[-1] > 0 else 1.0

    ml, mr, mt, mb = 56.0, 16.0, 18.0, 48.0
    pw, ph = width - ml - mr, height - mt - mb

    def px(step):
        return ml + (step / x_max) * pw

    def py(rate):
        return mt + (1.0 - rate) * ph

    parts = [_SVG_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             _rect(0, 0, width, height, 'fill="white"'),
             f'<line x1="{_f(ml)}" y1="{_f(mt)}" x2="{_f(ml)}" y2="{_f(mt + ph)}" stroke="black"/>',
             f'<line x1="{_f(ml)}" y1="{_f(mt + ph)}" x2="{_f(ml + pw)}" y2="{_f(mt + ph)}" stroke="black"/>']

    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(frac)
        parts.append(f'<line x1="{_f(ml - 4)}" y1="{_f(y)}" x2="{_f(ml)}" y2="{_f(y)}" stroke="black"/>')
        parts.append(f'<text x="{_f(ml - 8)}" y="{_f(y + 4)}" font-size="11" '
                     f'text-anchor="end" font-family="sans-serif">{frac:g}</text>')
    for i in range(5):
        step = x_max * i / 4.0
        x = px(step)
        parts.append(f'<line x1="{_f(x)}" y1="{_f(mt + ph)}" x2="{_f(x)}" y2="{_f(mt + ph + 4)}" stroke="black"/>')
        parts.append(f'<text x="{_f(x)}" y="{_f(mt + ph + 18)}" font-size="11" '
                     f'text-anchor="middle" font-family="sans-serif">{int(round(step))}</text>')
    # the step axis counts low-level environment steps, not high-level decisions
    parts.append(f'<text x="{_f(ml + pw / 2)}" y="{_f(height - 10)}" font-size="12" '
                 f'text-anchor="middle" font-family="sans-serif">environment steps (low-level)</text>')
    parts.append(f'<text x="14" y="{_f(mt + ph / 2)}" font-size="12" text-anchor="middle" '
                 f'font-family="sans-serif" transform="rotate(-90 14 {_f(mt + ph / 2)})">success rate</text>')

    for i, agent in enumerate(sorted(series)):
        runs = series[agent]
        if not runs:
            continue
        color = PALETTE[i % len(PALETTE)]
        values = np.stack([np.interp(grid, steps, vals) for steps, vals in runs])
        mean = values.mean(axis=0)
        if len(runs) > 1:
            lo, hi = values.min(axis=0), values.max(axis=0)
            band = " ".join(f"{_f(px(s))},{_f(py(v))}" for s, v in zip(grid, lo))
            band += " " + " ".join(f"{_f(px(s))},{_f(py(v))}"
                                   for s, v in zip(grid[::-1], hi[::-1]))
            parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2"/>')
        line = " ".join(f"{_f(px(s))},{_f(py(v))}" for s, v in zip(grid, mean))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = mt + 16 + i * 18
        parts.append(f'<line x1="{_f(ml + 10)}" y1="{_f(ly - 4)}" x2="{_f(ml + 34)}" '
                     f'y2="{_f(ly - 4)}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_f(ml + 40)}" y="{_f(ly)}" font-size="12" '
                     f'font-family="sans-serif">{agent}</text>')

    parts.append("</svg>")
    return "".join(parts) + "\n"
