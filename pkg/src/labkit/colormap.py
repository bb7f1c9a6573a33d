"""Frozen 256-step sequential colormap for heatmaps.

Eleven anchor colors along the familiar dark-violet-to-yellow ramp,
linearly interpolated to 256 sRGB entries at import time. The table is a
stable artifact: renderers (SVG here, the web client's canvas) must agree
on it byte for byte, so it is never computed from a plotting library at
runtime.
"""

from __future__ import annotations

_ANCHORS = (
    (0.267004, 0.004874, 0.329415),
    (0.282623, 0.140926, 0.457517),
    (0.253935, 0.265254, 0.529983),
    (0.206756, 0.371758, 0.553117),
    (0.163625, 0.471133, 0.558148),
    (0.127568, 0.566949, 0.550556),
    (0.134692, 0.658636, 0.517649),
    (0.266941, 0.748751, 0.440573),
    (0.477504, 0.821444, 0.318195),
    (0.741388, 0.873449, 0.149561),
    (0.993248, 0.906157, 0.143936),
)

#: Color used for pixels that carry no data yet (partial scans).
GAP_COLOR = "#c8c8c8"


def _build() -> tuple[str, ...]:
    steps = 256
    table = []
    last = len(_ANCHORS) - 1
    for k in range(steps):
        t = k / (steps - 1) * last
        i = min(int(t), last - 1)
        frac = t - i
        rgb = tuple(_ANCHORS[i][c] + frac * (_ANCHORS[i + 1][c] - _ANCHORS[i][c])
                    for c in range(3))
        table.append("#%02x%02x%02x" % tuple(round(255 * v) for v in rgb))
    return tuple(table)


#: 256 hex colors, index 0 = lowest value, 255 = highest.
COLORMAP: tuple[str, ...] = _build()


def color_for(value: float, vmin: float, vmax: float) -> str:
    """Map value into the table; values outside [vmin, vmax] clamp."""
    if vmax <= vmin:
        return COLORMAP[0]
    t = (value - vmin) / (vmax - vmin)
    t = min(max(t, 0.0), 1.0)
    return COLORMAP[round(t * 255)]
