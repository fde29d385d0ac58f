"""Minimal deterministic SVG line plots with the plotted data embedded.

Output is a pure function of the input table: fixed canvas, fixed number
formatting, no timestamps, so files are bit-stable across runs.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v):
    return format(float(v), ".6g")


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log x (the observed order when x is a step count)."""
    x, y = np.asarray(x, float), np.abs(np.asarray(y, float))
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _scale(vals, log):
    v = np.asarray(vals, float)
    if log:
        v = np.log10(v[v > 0]) if np.any(v > 0) else np.array([0.0])
    lo, hi = (float(np.min(v)), float(np.max(v))) if len(v) else (0.0, 1.0)
    if hi - lo < 1e-300:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def render_svg(spec, rows):
    """SVG text for one plot spec over table rows (list of dicts)."""
    xk, yks = spec["x"], list(spec["y"])
    logx, logy = spec.get("logx", False), spec.get("logy", False)
    x = np.array([r[xk] for r in rows], float)
    ys = {k: np.array([np.nan if r.get(k) is None else r[k] for r in rows], float) for k in yks}
    allx = x
    ally = np.concatenate([v[np.isfinite(v)] for v in ys.values()])
    x0, x1 = _scale(allx, logx)
    y0, y1 = _scale(ally if len(ally) else np.array([0.0, 1.0]), logy)

    def px(v):
        v = math.log10(v) if logx else v
        return LEFT + (v - x0) / (x1 - x0) * (W - LEFT - RIGHT)

    def py(v):
        v = math.log10(v) if logy else v
        return H - BOTTOM - (v - y0) / (y1 - y0) * (H - TOP - BOTTOM)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f"<title>{escape(spec.get('title', ''))}</title>",
           f"<desc>{escape(json.dumps(rows, sort_keys=True, default=float))}</desc>",
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" '
           f'fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="14">{escape(spec.get("title", ""))}</text>',
           f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">'
           f'{escape(("log10 " if logx else "") + xk)}</text>',
           f'<text x="14" y="{H / 2}" font-size="12" transform="rotate(-90 14 {H / 2})" '
           f'text-anchor="middle">{escape(("log10 " if logy else "") + ", ".join(yks))}</text>']
    for lab, val, pos in ((_fmt(x0), "start", LEFT), (_fmt(x1), "end", W - RIGHT)):
        out.append(f'<text x="{pos}" y="{H - BOTTOM + 16}" font-size="10" text-anchor="{val}">{lab}</text>')
    out.append(f'<text x="{LEFT - 4}" y="{H - BOTTOM}" font-size="10" text-anchor="end">{_fmt(y0)}</text>')
    out.append(f'<text x="{LEFT - 4}" y="{TOP + 10}" font-size="10" text-anchor="end">{_fmt(y1)}</text>')
    for i, k in enumerate(yks):
        ok = np.isfinite(ys[k]) & ((ys[k] > 0) if logy else True) & ((x > 0) if logx else True)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], ys[k][ok]))
        dash = ' stroke-dasharray="6 4"' if k == spec.get("overlay") else ""
        out.append(f'<polyline fill="none" stroke="{COLORS[i % len(COLORS)]}" stroke-width="1.5"{dash} '
                   f'points="{pts}"/>')
        out.append(f'<text x="{W - RIGHT - 6}" y="{TOP + 16 + 14 * i}" font-size="11" text-anchor="end" '
                   f'fill="{COLORS[i % len(COLORS)]}">{escape(k)}</text>')
    if spec.get("slope"):
        s = loglog_slope(x, ys[yks[0]])
        out.append(f'<text x="{LEFT + 8}" y="{TOP + 16}" font-size="12">slope {_fmt(s)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(report, out_dir):
    """Write one SVG per plot spec of ``report``; returns the list of written paths.

    ``report`` needs ``tables`` (name -> rows), ``plots`` (list of specs with
    ``table``, ``x``, ``y`` and optional ``logx``/``logy``/``slope``/``overlay``)
    and a ``warnings`` list, which receives an entry for every empty table.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in report.plots:
        rows = report.tables.get(spec["table"], [])
        if not rows:
            report.warnings.append(f"plot {spec['name']}: table {spec['table']!r} is empty, no file written")
            continue
        path = out / f"{report.scenario}-{spec['name']}.svg"
        path.write_text(render_svg(spec, rows))
        written.append(str(path))
    return written
