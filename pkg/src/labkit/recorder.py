"""Data recorder: tab-separated .dat files with metadata headers, plus SVG
plots rendered next to the data.

File layout: <data_dir>/<YYYY>/<MM>/<YYYYMMDD-HHMMSS>_<tag>.dat, names
strictly sortable by time; same-second clashes get -1, -2 suffixes.
Numbers are written with repr (shortest round-trip form), so loading a
file reproduces the saved arrays bit for bit.
"""

from __future__ import annotations

import math
import os
import re
from typing import Iterable

from . import __version__
from .confocal import ScanImage, scan_axes
from .errors import IoError, SchemaError
from .fitting import FitResult, evaluate_model
from .module import Module, module_kind
from .svgplot import heatmap_svg, line_svg
from .util import grid

_TAG_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def _format_number(v) -> str:
    if v is None:  # NaN flattened by a wire crossing
        return "nan"
    return repr(float(v))


def _escape_header(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def write_dat(path: str, metadata: dict, columns: dict[str, Iterable]) -> None:
    cols = {str(k): list(v) for k, v in columns.items()}
    lengths = {len(v) for v in cols.values()}
    if len(lengths) > 1:
        raise SchemaError("columns must all have the same length")
    n = lengths.pop() if lengths else 0
    lines = []
    for key in sorted(metadata):
        lines.append(f"# {key}: {_escape_header(str(metadata[key]))}")
    if cols:
        names = list(cols)
        lines.append("# columns: " + "\t".join(names))
        series = [cols[name] for name in names]
        for i in range(n):
            lines.append("\t".join(_format_number(s[i]) for s in series))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_data(path: str) -> tuple[dict[str, str], dict[str, list[float]]]:
    """Parse a .dat file back into (metadata, columns)."""
    metadata: dict[str, str] = {}
    names: list[str] = []
    columns: dict[str, list[float]] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for line in raw.splitlines():
        if not line.strip():
            continue
        if line.startswith("# columns: "):
            names = line[len("# columns: "):].split("\t")
            columns = {name: [] for name in names}
        elif line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            metadata[key] = (value.replace("\\n", "\n").replace("\\r", "\r")
                             .replace("\\\\", "\\"))
        else:
            parts = line.split("\t")
            if len(parts) != len(names):
                raise IoError(f"malformed data row in {path!r}: {line!r}")
            for name, part in zip(names, parts):
                columns[name].append(float(part))
    return metadata, columns


@module_kind("recorder")
class DataRecorder(Module):
    """Saving runs on this module's own loop, so concurrent callers from
    several logic modules are serialized into one writer."""

    LAYER = "logic"

    def on_activate(self):
        self._data_dir = self.ctx.option("data_dir") or self.ctx.data_dir
        self._clock = self.ctx.recorder_clock

    def _base_path(self, tag: str, stamp) -> str:
        if not _TAG_RE.match(tag):
            raise SchemaError(
                f"tag {tag!r} must match [A-Za-z0-9_-]+")
        shard = os.path.join(self._data_dir, f"{stamp:%Y}", f"{stamp:%m}")
        try:
            os.makedirs(shard, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot create {shard}: {exc}") from exc
        return os.path.join(shard, f"{stamp:%Y%m%d-%H%M%S}_{tag}")

    def _claim(self, base: str, extensions: tuple[str, ...]) -> str:
        """First of base, base-1, base-2, ... free for every extension."""
        candidate = base
        suffix = 0
        while any(os.path.exists(candidate + ext) for ext in extensions):
            suffix += 1
            candidate = f"{base}-{suffix}"
        return candidate

    def _standard_metadata(self, stamp) -> dict:
        return {
            "timestamp": stamp.strftime("%Y-%m-%dT%H:%M:%S.")
            + f"{stamp.microsecond // 1000:03d}Z",
            "version": __version__,
            "seed": self.ctx.seed,
        }

    def save_data(self, tag: str, metadata: dict, columns: dict) -> str:
        """Write named columns with metadata; returns the file path."""
        stamp = self._clock.now()
        base = self._claim(self._base_path(tag, stamp), (".dat",))
        merged = {**self._standard_metadata(stamp), **(metadata or {})}
        write_dat(base + ".dat", merged, columns or {})
        self.ctx.debug(f"saved {base}.dat")
        return base + ".dat"

    def save_image(self, tag: str, image: ScanImage) -> tuple[str, str]:
        """Write a scan image as matrix .dat plus SVG heatmap; returns
        (data path, svg path)."""
        if image.rows_complete < 1:
            raise SchemaError("image has no completed rows")
        stamp = self._clock.now()
        s = image.settings
        xs, ys = scan_axes(s)
        slow_axis = "y" if s.plane == "xy" else "z"
        metadata = {
            **self._standard_metadata(stamp),
            "kind": "scan_image",
            "plane": s.plane,
            "center_x": repr(s.center.x),
            "center_y": repr(s.center.y),
            "center_z": repr(s.center.z),
            "extent_w": repr(s.extent[0]),
            "extent_h": repr(s.extent[1]),
            "nx": s.resolution[0],
            "ny": s.resolution[1],
            "dwell_s": repr(s.dwell_s),
            "rows_complete": image.rows_complete,
            "x_min": repr(xs[0]), "x_max": repr(xs[-1]),
            f"{slow_axis}_min": repr(ys[0]), f"{slow_axis}_max": repr(ys[-1]),
            "unit": "counts/s",
        }
        nx = s.resolution[0]
        width = len(str(nx - 1))
        columns = {f"c{j:0{width}d}": [row[j] for row in image.data]
                   for j in range(nx)}
        base = self._claim(self._base_path(tag, stamp), (".dat", ".svg"))
        write_dat(base + ".dat", metadata, columns)
        svg = heatmap_svg(
            [list(row) for row in image.data],
            x_range=(xs[0], xs[-1]), y_range=(ys[0], ys[-1]),
            x_label="x (um)",
            y_label=f"{slow_axis} (um)",
            title=f"{tag} ({s.plane} scan)",
        )
        self._write_text(base + ".svg", svg)
        self.ctx.debug(f"saved {base}.dat and {base}.svg")
        return base + ".dat", base + ".svg"

    def save_plot(self, tag: str, x: list, y: list, x_label: str = "x",
                  y_label: str = "y", fit: FitResult | None = None) -> str:
        """Write a line plot SVG (with optional fit overlay); returns the
        svg path."""
        overlay = None
        if fit is not None:
            finite = [v for v in x if v is not None and math.isfinite(v)]
            if finite:
                fx = grid(min(finite), max(finite), max(len(finite) * 4, 64))
                fy = [float(v) for v in evaluate_model(fit.model, fit.params, fx)]
                overlay = (fx, fy)
        stamp = self._clock.now()
        base = self._claim(self._base_path(tag, stamp), (".svg",))
        svg = line_svg(x, y, x_label=x_label, y_label=y_label, title=tag,
                       overlay=overlay)
        self._write_text(base + ".svg", svg)
        self.ctx.debug(f"saved {base}.svg")
        return base + ".svg"

    def load_data(self, path: str) -> tuple[dict, dict]:
        return load_data(path)

    def _write_text(self, path: str, text: str) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
