"""Confocal measurement logic: raster scans, image history, cursor, and
the close-range position optimizer.

Scans run as a chain of per-row jobs on the module's own loop, so stop and
cursor operations dispatched from other threads interleave between rows.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import nan

from . import wire
from .errors import (BusyError, DegenerateData, NoConvergence, OutOfRange,
                     SchemaError)
from .fitting import (FitResult, W_OVER_SIGMA, fit_gauss1d, fit_gauss2d)
from .interfaces import ConfocalScannerInterface, Position3, ScanVolume
from .module import Module, module_kind
from .util import grid

PLANES = ("xy", "xz")
HISTORY_DEPTH = 10


@dataclass(frozen=True)
class ScanSettings:
    plane: str
    center: Position3
    extent: tuple[float, float]      # width, height in um
    resolution: tuple[int, int]      # nx, ny pixels
    dwell_s: float

    def __post_init__(self):
        if self.plane not in PLANES:
            raise SchemaError(f"plane must be one of {PLANES}")
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise SchemaError("extent must be positive")
        nx, ny = self.resolution
        if nx < 2 or ny < 2:
            raise SchemaError("resolution must be at least 2x2")
        if self.dwell_s <= 0:
            raise SchemaError("dwell_s must be > 0")


@dataclass(frozen=True)
class ScanImage:
    settings: ScanSettings
    data: tuple[tuple[float, ...], ...]  # ny rows of nx rates; NaN = unset
    rows_complete: int


@dataclass(frozen=True)
class OptimizerResult:
    refined: Position3
    fit_xy: FitResult | None
    fit_z: FitResult | None
    accepted: bool


def scan_axes(settings: ScanSettings) -> tuple[list[float], list[float]]:
    """Pixel-center coordinates: fast (row) axis, then slow (line) axis.

    xy scans raster x within rows of constant y; xz scans x within rows of
    constant z.
    """
    nx, ny = settings.resolution
    w, h = settings.extent
    c = settings.center
    xs = grid(c.x - w / 2.0, c.x + w / 2.0, nx)
    slow_center = c.y if settings.plane == "xy" else c.z
    ys = grid(slow_center - h / 2.0, slow_center + h / 2.0, ny)
    return xs, ys


def _row_endpoints(settings: ScanSettings, xs: list[float], slow: float
                   ) -> tuple[Position3, Position3]:
    c = settings.center
    if settings.plane == "xy":
        return (Position3(xs[0], slow, c.z), Position3(xs[-1], slow, c.z))
    return (Position3(xs[0], c.y, slow), Position3(xs[-1], c.y, slow))


def _rect_in_volume(settings: ScanSettings, volume: ScanVolume) -> bool:
    xs, ys = scan_axes(settings)
    corners = [_row_endpoints(settings, xs, ys[0])[0],
               _row_endpoints(settings, xs, ys[-1])[1]]
    return all(volume.contains(p) for p in corners)


def _clamped_span(center: float, size: float, lo: float, hi: float
                  ) -> tuple[float, float]:
    """A window of ``size`` around ``center`` shifted to fit [lo, hi]."""
    if size >= hi - lo:
        return lo, hi
    start = min(max(center - size / 2.0, lo), hi - size)
    return start, start + size


@module_kind("confocal_logic")
class ConfocalLogic(Module):
    """Raster scan orchestration over any ConfocalScannerInterface."""

    LAYER = "logic"
    CONNECTORS = {"scanner": ConfocalScannerInterface}

    def on_activate(self):
        self._scanner = self.ctx.connector("scanner")
        self._volume = self._scanner.get_volume()
        self._cursor = self._scanner.get_position()
        self._history: deque[ScanImage] = deque(maxlen=HISTORY_DEPTH)
        self._scan: dict | None = None
        self._scan_counter = 0
        opt = {
            "xy_size": float(self.ctx.option("opt_xy_size", 1.0)),
            "xy_points": int(self.ctx.option("opt_xy_points", 21)),
            "z_size": float(self.ctx.option("opt_z_size", 2.0)),
            "z_points": int(self.ctx.option("opt_z_points", 41)),
            # 5 ms collects ~250 counts at a default-sample peak: enough
            # for the fit to localize well inside the acceptance gates
            "dwell_s": float(self.ctx.option("opt_dwell_s", 0.005)),
            "expected_w_xy": float(self.ctx.option("opt_expected_w_xy", 0.15)),
            "expected_w_z": float(self.ctx.option("opt_expected_w_z", 0.45)),
        }
        if opt["xy_points"] < 5 or opt["z_points"] < 5:
            raise SchemaError("optimizer needs at least 5 points per axis")
        self._opt = opt

    def on_deactivate(self):
        self._scan = None

    def on_stop_requested(self):
        if self._scan is not None:
            self._scan["stop"] = True

    # -- cursor ------------------------------------------------------------

    def set_cursor(self, p: Position3) -> None:
        if not self._volume.contains(p):
            raise OutOfRange(f"cursor {p} outside scan volume")
        self._cursor = p
        self._scanner.set_position(p)

    def get_cursor(self) -> Position3:
        return self._cursor

    # -- raster scans --------------------------------------------------------

    def start_scan(self, settings: ScanSettings) -> int:
        """Begin acquisition; rows arrive as confocal.row events. Returns
        the scan id used in this run's events."""
        if self._scan is not None:
            raise BusyError("a scan is already running")
        if not _rect_in_volume(settings, self._volume):
            raise OutOfRange("scan rectangle exceeds the scanner volume")
        xs, ys = scan_axes(settings)
        self._scan_counter += 1
        self._scan = {
            "id": self._scan_counter,
            "settings": settings,
            "xs": xs,
            "ys": ys,
            "rows": [],
            "stop": False,
        }
        self.ctx.set_busy(True)
        self.ctx.post(self._row_job)
        return self._scan_counter

    def stop_scan(self) -> None:
        """Halt after the current row; no-op when idle."""
        if self._scan is not None:
            self._scan["stop"] = True

    def _row_job(self):
        scan = self._scan
        if scan is None:
            return
        settings: ScanSettings = scan["settings"]
        row_index = len(scan["rows"])
        ny = settings.resolution[1]
        if scan["stop"] or row_index >= ny:
            self._finish_scan()
            return
        start, end = _row_endpoints(settings, scan["xs"], scan["ys"][row_index])
        values = self._scanner.scan_line(start, end, settings.resolution[0],
                                         settings.dwell_s)
        scan["rows"].append(tuple(float(v) for v in values))
        self.ctx.publish("confocal.row", {
            "scan_id": scan["id"], "row_index": row_index,
            "values": [float(v) for v in values],
        })
        if len(scan["rows"]) >= ny:
            self._finish_scan()
        else:
            self.ctx.post(self._row_job)

    def _finish_scan(self):
        scan = self._scan
        self._scan = None
        settings: ScanSettings = scan["settings"]
        nx, ny = settings.resolution
        rows = list(scan["rows"])
        rows_complete = len(rows)
        while len(rows) < ny:
            rows.append(tuple([nan] * nx))
        image = ScanImage(settings, tuple(rows), rows_complete)
        self._history.append(image)
        try:
            self._scanner.set_position(self._cursor)
        finally:
            self.ctx.set_busy(False)
            self.ctx.publish("confocal.done", {
                "scan_id": scan["id"], "rows_complete": rows_complete,
            })

    def get_image(self, index: int = -1) -> ScanImage | None:
        """Recent images, newest at index -1; None with no history."""
        if not self._history:
            return None
        try:
            return self._history[index]
        except IndexError:
            return None

    def get_status(self) -> dict:
        scanning = self._scan is not None
        return {
            "scanning": scanning,
            "scan_id": self._scan["id"] if scanning else None,
            "rows_complete": len(self._scan["rows"]) if scanning
            else (self._history[-1].rows_complete if self._history else 0),
            "history": len(self._history),
            "cursor": wire.to_wire(self._cursor),
        }

    # -- optimizer -----------------------------------------------------------

    def optimize_at(self, p: Position3) -> OptimizerResult:
        """One xy-crop scan + 2D fit, one z line + 1D fit around p; moves
        the scanner (and cursor) to the refined position when both fits
        pass the acceptance gates, otherwise returns the scanner to p."""
        if self._scan is not None:
            raise BusyError("a scan is already running")
        if not self._volume.contains(p):
            raise OutOfRange(f"optimize target {p} outside scan volume")
        self.ctx.set_busy(True)
        try:
            result = self._optimize(p)
        finally:
            self.ctx.set_busy(False)
        self.ctx.publish("confocal.optimized", {"result": wire.to_wire(result)})
        return result

    def _optimize(self, p: Position3) -> OptimizerResult:
        opt = self._opt
        vol = self._volume
        x_lo, x_hi = _clamped_span(p.x, opt["xy_size"], *vol.x_range)
        y_lo, y_hi = _clamped_span(p.y, opt["xy_size"], *vol.y_range)
        nxy = opt["xy_points"]
        xs = grid(x_lo, x_hi, nxy)
        ys = grid(y_lo, y_hi, nxy)
        points = []
        values = []
        for yv in ys:
            row = self._scanner.scan_line(Position3(xs[0], yv, p.z),
                                          Position3(xs[-1], yv, p.z),
                                          nxy, opt["dwell_s"])
            for xv, v in zip(xs, row):
                points.append((xv, yv))
                values.append(float(v))

        fit_xy = None
        fit_z = None
        accepted = False
        refined = p
        try:
            fit_xy = fit_gauss2d(points, values)
        except (DegenerateData, NoConvergence):
            fit_xy = None
        if fit_xy is not None and self._xy_gate(fit_xy, x_lo, x_hi, y_lo, y_hi):
            x0 = fit_xy.params["x0"]
            y0 = fit_xy.params["y0"]
            z_lo, z_hi = _clamped_span(p.z, opt["z_size"], *vol.z_range)
            zs = grid(z_lo, z_hi, opt["z_points"])
            line = self._scanner.scan_line(Position3(x0, y0, zs[0]),
                                           Position3(x0, y0, zs[-1]),
                                           opt["z_points"], opt["dwell_s"])
            try:
                fit_z = fit_gauss1d(zs, [float(v) for v in line])
            except (DegenerateData, NoConvergence):
                fit_z = None
            if fit_z is not None and self._z_gate(fit_z, z_lo, z_hi):
                refined = Position3(x0, y0, fit_z.params["x0"])
                accepted = True

        if accepted:
            self._scanner.set_position(refined)
            self._cursor = refined
        else:
            refined = p
            self._scanner.set_position(p)
        return OptimizerResult(refined=refined, fit_xy=fit_xy, fit_z=fit_z,
                               accepted=accepted)

    def _xy_gate(self, fit: FitResult, x_lo, x_hi, y_lo, y_hi) -> bool:
        p = fit.params
        if not (x_lo <= p["x0"] <= x_hi and y_lo <= p["y0"] <= y_hi):
            return False
        expected = self._opt["expected_w_xy"]
        for key in ("sigma_x", "sigma_y"):
            w = W_OVER_SIGMA * p[key]
            if not 0.2 * expected <= w <= 5.0 * expected:
                return False
        return True

    def _z_gate(self, fit: FitResult, z_lo, z_hi) -> bool:
        p = fit.params
        if not z_lo <= p["x0"] <= z_hi:
            return False
        w = W_OVER_SIGMA * p["sigma"]
        expected = self._opt["expected_w_z"]
        return 0.2 * expected <= w <= 5.0 * expected
