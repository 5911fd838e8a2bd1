"""Dependency-free SVG line charts of log channels."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 400
MARGIN = (60, 20, 30, 40)  # left, right, top, bottom
DEFAULT_CHANNELS = ("e", "e_n", "e_p", "theta_deg", "F", "F_c", "tau_ratio")
MAX_POINTS = 2000


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def svg_line_chart(t, y, title: str = "", ylabel: str = "") -> str:
    """Polyline chart in a fixed 800x400 viewBox; NaN samples break the line."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) > MAX_POINTS:
        idx = np.linspace(0, len(t) - 1, MAX_POINTS).astype(int)
        t, y = t[idx], y[idx]
    ok = np.isfinite(y)
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    t0, t1 = (float(t.min()), float(t.max())) if len(t) else (0.0, 1.0)
    if t1 <= t0:
        t1 = t0 + 1.0
    y0, y1 = (float(y[ok].min()), float(y[ok].max())) if ok.any() else (0.0, 1.0)
    if y1 <= y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def px(tv):
        return left + (tv - t0) / (t1 - t0) * pw

    def py(yv):
        return top + (1.0 - (yv - y0) / (y1 - y0)) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
             f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
             f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for yv in _ticks(y0, y1):
        yy = py(yv)
        parts.append(f'<line x1="{left}" y1="{yy:.2f}" x2="{left + pw}" y2="{yy:.2f}" stroke="#ddd"/>')
        parts.append(f'<text x="{left - 5}" y="{yy + 4:.2f}" text-anchor="end">{yv:g}</text>')
    for tv in _ticks(t0, t1, 8):
        xx = px(tv)
        parts.append(f'<text x="{xx:.2f}" y="{HEIGHT - bottom + 15}" text-anchor="middle">{tv:g}</text>')
    segment: list[str] = []
    for tv, yv, good in zip(t, y, ok):
        if good:
            segment.append(f"{px(tv):.2f},{py(yv):.2f}")
        elif segment:
            parts.append(_polyline(segment))
            segment = []
    if segment:
        parts.append(_polyline(segment))
    parts.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 5}" text-anchor="middle">t [s]</text>')
    parts.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {top + ph / 2})">{escape(ylabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _polyline(points: list[str]) -> str:
    return f'<polyline fill="none" stroke="#1f5fbf" stroke-width="1.2" points="{" ".join(points)}"/>'


def write_plots(out_dir, log, channels=DEFAULT_CHANNELS) -> list[Path]:
    """Write ``plot_<channel>.svg`` for each channel; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = log["t"]
    paths = []
    for ch in channels:
        p = out_dir / f"plot_{ch}.svg"
        p.write_text(svg_line_chart(t, log[ch], title=f"{log.meta.get('scenario', '')} {ch}".strip(), ylabel=ch))
        paths.append(p)
    return paths
