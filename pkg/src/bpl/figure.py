"""Static SVG scatter: data, truth, MLE and posterior draws."""
from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .model import PointSet, StepFn, Truth

W, H, PAD = 640, 400, 40


def _step_path(f: StepFn, sx, sy) -> str:
    pts = []
    for lo, hi, v in zip(f.breaks[:-1], f.breaks[1:], f.values):
        pts.append(f"{sx(lo):.2f},{sy(v):.2f}")
        pts.append(f"{sx(hi):.2f},{sy(v):.2f}")
    return " ".join(pts)


def svg_figure(
    ps: PointSet,
    truth: Optional[Truth] = None,
    fit: Optional[StepFn] = None,
    draws: Sequence[StepFn] = (),
    max_draws: int = 50,
    title: str = "",
) -> str:
    """Observations (blue), truth (black), MLE (red), posterior draws (gray)."""
    truth = ps.truth if truth is None else truth
    grid = np.linspace(0.0, ps.T, 401)
    tv = np.asarray(truth.eval(grid), dtype=float)
    ys = [tv]
    if len(ps):
        ys.append(ps.ys)
    if fit is not None:
        ys.append(fit.values)
    draws = list(draws)[:max_draws]
    ys.extend(d.values for d in draws)
    lo = min(float(np.min(y)) for y in ys)
    hi = max(float(np.max(y)) for y in ys)
    if hi == lo:
        hi = lo + 1.0

    def sx(x):
        return PAD + (W - 2 * PAD) * x / ps.T

    def sy(y):
        return H - PAD - (H - 2 * PAD) * (y - lo) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#444"/>',
    ]
    if title:
        out.append(f'<text x="{W / 2}" y="{PAD / 2 + 5}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for x, y in zip(ps.xs, ps.ys):
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.2" fill="#1f5fbf"/>')
    for d in draws:
        out.append(f'<polyline points="{_step_path(d, sx, sy)}" fill="none" stroke="#999" stroke-width="0.6"/>')
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(grid, tv))
    out.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    if fit is not None:
        out.append(f'<polyline points="{_step_path(fit, sx, sy)}" fill="none" stroke="#d62728" stroke-width="1.2"/>')
    out.append(f'<text x="{PAD}" y="{H - 10}" font-size="11">0</text>')
    out.append(f'<text x="{W - PAD}" y="{H - 10}" font-size="11" text-anchor="end">{ps.T:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
