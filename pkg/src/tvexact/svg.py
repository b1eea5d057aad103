"""Minimal SVG plots: stem plots of 1D measures, bubble plots of 2D ones, step signals."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .measure import DiscreteMeasure

W, H, PAD = 640, 360, 40
COLORS = ("#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd")


def _frame(body: list[str], title: str = "") -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#999"/>']
    if title:
        head.append(f'<text x="{W / 2}" y="{PAD / 2 + 5}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _legend(labels, kinds="line"):
    out = []
    for i, lab in enumerate(labels):
        y = PAD + 14 + 16 * i
        col = COLORS[i % len(COLORS)]
        out.append(f'<line x1="{W - PAD - 110}" y1="{y - 4}" x2="{W - PAD - 95}" y2="{y - 4}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{W - PAD - 90}" y="{y}" font-size="11">{escape(lab)}</text>')
    return out


def _sx(x):
    return PAD + (W - 2 * PAD) * x


def _sy(y, lo, hi):
    return H - PAD - (H - 2 * PAD) * (y - lo) / (hi - lo)


def measure_plot(series: list[tuple[str, DiscreteMeasure]], title: str = "") -> str:
    """Stem plot for 1D measures on [0, 1], bubble plot for 2D measures on [0, 1]^2."""
    series = [(lab, mu) for lab, mu in series if mu is not None]
    dim = next((mu.positions.shape[1] for _, mu in series if len(mu)), 1)
    body = []
    wmax = max([float(np.max(np.abs(mu.weights))) for _, mu in series if len(mu)] + [1e-12])
    if dim == 1:
        lo, hi = -1.1 * wmax, 1.1 * wmax
        y0 = _sy(0.0, lo, hi)
        body.append(f'<line x1="{PAD}" y1="{y0:.2f}" x2="{W - PAD}" y2="{y0:.2f}" stroke="#ccc"/>')
        for i, (_, mu) in enumerate(series):
            col = COLORS[i % len(COLORS)]
            dx = 2.0 * i  # small offset keeps coincident stems visible
            for x, w in zip(mu.positions[:, 0], mu.weights):
                px, py = _sx(x) + dx, _sy(w, lo, hi)
                body.append(f'<line x1="{px:.2f}" y1="{y0:.2f}" x2="{px:.2f}" y2="{py:.2f}" stroke="{col}"/>')
                body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{col}"/>')
    else:
        for i, (_, mu) in enumerate(series):
            col = COLORS[i % len(COLORS)]
            for (x, y), w in zip(mu.positions[:, :2], mu.weights):
                r = 3 + 12 * abs(w) / wmax
                fill = col if w > 0 else "none"
                body.append(f'<circle cx="{_sx(x):.2f}" cy="{_sy(y, 0, 1):.2f}" r="{r:.2f}" '
                            f'stroke="{col}" fill="{fill}" fill-opacity="0.4"/>')
    return _frame(body + _legend([lab for lab, _ in series]), title)


def step_plot(s, curves: list[tuple[str, np.ndarray]], title: str = "") -> str:
    s = np.asarray(s, dtype=float)
    vals = np.concatenate([np.asarray(v, dtype=float) for _, v in curves])
    lo, hi = float(vals.min()), float(vals.max())
    span = max(hi - lo, 1e-12)
    lo, hi = lo - 0.1 * span, hi + 0.1 * span
    body = []
    for i, (_, v) in enumerate(curves):
        pts = " ".join(f"{_sx(a):.2f},{_sy(b, lo, hi):.2f}" for a, b in zip(s, v))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{COLORS[i % len(COLORS)]}" stroke-width="1.5"/>')
    return _frame(body + _legend([lab for lab, _ in curves]), title)
