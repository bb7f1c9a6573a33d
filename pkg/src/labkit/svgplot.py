"""Self-contained SVG rendering for heatmaps and line plots.

Pure string generation, no drawing library: output must be deterministic
for byte-identical reruns. Coordinates are emitted with a fixed 2-decimal
format so the files stay diff-friendly.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .colormap import COLORMAP, GAP_COLOR, color_for

PLOT_W = 480.0
PLOT_H = 360.0
MARGIN_L = 70.0
MARGIN_R = 30.0
MARGIN_T = 40.0
MARGIN_B = 50.0
CBAR_W = 18.0
CBAR_GAP = 14.0
CBAR_STEPS = 64


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}"


def _finite(values) -> list[float]:
    return [v for v in values if v is not None and math.isfinite(v)]


def _text(x: float, y: float, s: str, anchor: str = "middle",
          size: float = 12.0, rotate: float | None = None) -> str:
    transform = ""
    if rotate is not None:
        transform = f' transform="rotate({_fmt(rotate)} {_fmt(x)} {_fmt(y)})"'
    return (f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{_fmt(size)}" '
            f'font-family="sans-serif" text-anchor="{anchor}"{transform}>'
            f'{escape(s)}</text>')


def _axes_box(x0: float, y0: float, w: float, h: float) -> str:
    return (f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="none" stroke="black" stroke-width="1"/>')


def _svg(width: float, height: float, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
            f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>',
                      *body, "</svg>"]) + "\n"


def heatmap_svg(matrix, x_range: tuple[float, float], y_range: tuple[float, float],
                x_label: str, y_label: str, title: str,
                value_label: str = "counts/s") -> str:
    """Colormapped cell grid with axes and a colorbar.

    ``matrix`` is rows of equal length, row 0 drawn at the bottom (it is
    the first scanned, lowest-coordinate line). None/NaN cells use the gap
    color.
    """
    ny = len(matrix)
    nx = len(matrix[0]) if ny else 0
    finite = _finite(v for row in matrix for v in row)
    vmin = min(finite) if finite else 0.0
    vmax = max(finite) if finite else 1.0

    x0, y0 = MARGIN_L, MARGIN_T
    w, h = PLOT_W, PLOT_H
    body = [_text(x0 + w / 2.0, MARGIN_T - 16.0, title, size=14.0)]

    cell_w = w / nx if nx else w
    cell_h = h / ny if ny else h
    for i, row in enumerate(matrix):
        # row i at the bottom edge + i cells up
        cy = y0 + h - (i + 1) * cell_h
        for j, v in enumerate(row):
            if v is None or not math.isfinite(v):
                fill = GAP_COLOR
            else:
                fill = color_for(v, vmin, vmax)
            body.append(
                f'<rect class="cell" x="{_fmt(x0 + j * cell_w)}" y="{_fmt(cy)}" '
                f'width="{_fmt(cell_w)}" height="{_fmt(cell_h)}" fill="{fill}"/>')

    body.append(_axes_box(x0, y0, w, h))
    body.append(_text(x0, y0 + h + 18.0, _tick_label(x_range[0]), anchor="start"))
    body.append(_text(x0 + w, y0 + h + 18.0, _tick_label(x_range[1]), anchor="end"))
    body.append(_text(x0 + w / 2.0, y0 + h + 36.0, x_label))
    body.append(_text(x0 - 8.0, y0 + h, _tick_label(y_range[0]), anchor="end"))
    body.append(_text(x0 - 8.0, y0 + 10.0, _tick_label(y_range[1]), anchor="end"))
    body.append(_text(x0 - 48.0, y0 + h / 2.0, y_label, rotate=-90.0))

    cx = x0 + w + CBAR_GAP
    seg_h = h / CBAR_STEPS
    for k in range(CBAR_STEPS):
        t = k / (CBAR_STEPS - 1)
        fill = COLORMAP[round(t * 255)]
        body.append(
            f'<rect class="cbar" x="{_fmt(cx)}" '
            f'y="{_fmt(y0 + h - (k + 1) * seg_h)}" width="{_fmt(CBAR_W)}" '
            f'height="{_fmt(seg_h + 0.5)}" fill="{fill}"/>')
    body.append(_axes_box(cx, y0, CBAR_W, h))
    body.append(_text(cx + CBAR_W + 4.0, y0 + h, _tick_label(vmin), anchor="start",
                      size=10.0))
    body.append(_text(cx + CBAR_W + 4.0, y0 + 10.0, _tick_label(vmax), anchor="start",
                      size=10.0))
    body.append(_text(cx + CBAR_W / 2.0, y0 - 8.0, value_label, size=10.0))

    width = MARGIN_L + w + CBAR_GAP + CBAR_W + MARGIN_R + 40.0
    return _svg(width, MARGIN_T + h + MARGIN_B, body)


def line_svg(x, y, x_label: str, y_label: str, title: str,
             overlay: tuple | None = None) -> str:
    """Polyline plot; a single point renders as a circle marker.

    ``overlay``, when given, is a second (x, y) series drawn as its own
    polyline with class "fit" (used for fit curves over data).
    """
    x = list(x)
    y = list(y)
    xs_all = _finite(x) + (_finite(overlay[0]) if overlay else [])
    ys_all = _finite(y) + (_finite(overlay[1]) if overlay else [])
    xmin, xmax = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    ymin, ymax = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax == ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5

    x0, y0 = MARGIN_L, MARGIN_T
    w, h = PLOT_W, PLOT_H

    def sx(v: float) -> float:
        return x0 + (v - xmin) / (xmax - xmin) * w

    def sy(v: float) -> float:
        return y0 + h - (v - ymin) / (ymax - ymin) * h

    body = [_text(x0 + w / 2.0, MARGIN_T - 16.0, title, size=14.0)]

    def series(xv, yv, cls: str, color: str) -> str:
        pts = [(sx(a), sy(b)) for a, b in zip(xv, yv)
               if a is not None and b is not None
               and math.isfinite(a) and math.isfinite(b)]
        if len(pts) == 1:
            (px, py) = pts[0]
            return (f'<circle class="{cls}" cx="{_fmt(px)}" cy="{_fmt(py)}" '
                    f'r="3" fill="{color}"/>')
        joined = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
        return (f'<polyline class="{cls}" points="{joined}" fill="none" '
                f'stroke="{color}" stroke-width="1.5"/>')

    body.append(series(x, y, "data", "#1f6fb4"))
    if overlay is not None:
        body.append(series(overlay[0], overlay[1], "fit", "#d03020"))

    body.append(_axes_box(x0, y0, w, h))
    body.append(_text(x0, y0 + h + 18.0, _tick_label(xmin), anchor="start"))
    body.append(_text(x0 + w, y0 + h + 18.0, _tick_label(xmax), anchor="end"))
    body.append(_text(x0 + w / 2.0, y0 + h + 36.0, x_label))
    body.append(_text(x0 - 8.0, y0 + h, _tick_label(ymin), anchor="end"))
    body.append(_text(x0 - 8.0, y0 + 10.0, _tick_label(ymax), anchor="end"))
    body.append(_text(x0 - 52.0, y0 + h / 2.0, y_label, rotate=-90.0))

    return _svg(MARGIN_L + w + MARGIN_R, MARGIN_T + h + MARGIN_B, body)
