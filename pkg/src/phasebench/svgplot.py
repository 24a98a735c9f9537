"""Minimal SVG line charts for referenced detector curves."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
COLOURS = {"IxI": "#c0392b", "QxI": "#2563c9"}


def _polyline(x, y, sx, sy, colour):
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
    return f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>'


def curves_svg(curves, title: str = "", y_range=(0.0, 5.0)) -> str:
    """Overlay of referenced curves; ``curves`` maps a label to (theta_deg, volts)."""
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    y0, y1 = y_range

    def sx(th):
        return left + pw * th / 360.0

    def sy(v):
        return top + ph * (1.0 - (v - y0) / (y1 - y0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="#333"/>',
    ]
    for th in range(0, 361, 45):
        out.append(f'<line x1="{sx(th):.1f}" y1="{top}" x2="{sx(th):.1f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{sx(th):.1f}" y="{top + ph + 15}" text-anchor="middle">{th}</text>')
    for v in np.linspace(y0, y1, 6):
        out.append(f'<line x1="{left}" y1="{sy(v):.1f}" x2="{left + pw}" y2="{sy(v):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">theta_M (deg)</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" transform="rotate(-90 16 {top + ph / 2})" '
               f'text-anchor="middle">V_d (V)</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="{top - 8}" text-anchor="middle">{escape(title)}</text>')
    for i, (label, (theta, volts)) in enumerate(curves.items()):
        order = np.argsort(theta, kind="stable")
        colour = COLOURS.get(label, "#444")
        out.append(_polyline(np.asarray(theta)[order], np.asarray(volts)[order], sx, sy, colour))
        ly = top + 14 + 14 * i
        out.append(f'<line x1="{left + pw - 70}" y1="{ly - 4}" x2="{left + pw - 50}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 45}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
