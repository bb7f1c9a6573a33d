"""Interfuses: logic-layer adapters that implement a hardware interface on
top of other modules, so measurement logic runs unchanged against them.

Two are shipped: spectral_scanner turns a scanner + spectrometer pair into
a confocal scanner whose count rate is a wavelength-window integral, and
tilt_scanner applies a plane shear so a tilted sample appears flat.
Both are passive delegating objects; config declares them with
layer "logic" plus an ``implements`` field naming the interface.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateGeometry, OutOfRange, SchemaError
from .interfaces import (ConfocalScannerInterface, Position3, ScanVolume,
                         SpectrometerInterface)
from .module import Module, module_kind
from .util import grid


@dataclass(frozen=True)
class TiltPlane:
    """Sample surface plane: z offset grows with slope_x, slope_y away
    from the reference point."""

    reference: Position3
    slope_x: float  # um of z per um of x
    slope_y: float  # um of z per um of y

    def __post_init__(self):
        if not (abs(self.slope_x) < 1.0 and abs(self.slope_y) < 1.0):
            raise SchemaError("tilt slopes must satisfy |slope| < 1")

    def dz(self, x: float, y: float) -> float:
        return (self.slope_x * (x - self.reference.x)
                + self.slope_y * (y - self.reference.y))


def calibrate_tilt(p1: Position3, p2: Position3, p3: Position3) -> TiltPlane:
    """Plane through three surface points, as slopes about p1.

    The points must not be collinear in (x, y).
    """
    dx2, dy2, dz2 = p2.x - p1.x, p2.y - p1.y, p2.z - p1.z
    dx3, dy3, dz3 = p3.x - p1.x, p3.y - p1.y, p3.z - p1.z
    det = dx2 * dy3 - dy2 * dx3
    scale = max(abs(dx2), abs(dy2), abs(dx3), abs(dy3), 1e-30)
    if abs(det) <= 1e-12 * scale * scale:
        raise DegenerateGeometry("calibration points are collinear in (x, y)")
    slope_x = (dz2 * dy3 - dy2 * dz3) / det
    slope_y = (dx2 * dz3 - dz2 * dx3) / det
    return TiltPlane(reference=p1, slope_x=slope_x, slope_y=slope_y)


@module_kind("spectral_scanner")
class SpectralScanner(Module, ConfocalScannerInterface):
    """Scanner whose count rate is the spectrum integrated over a
    wavelength window.

    scan_line visits each pixel with the wrapped scanner, acquires a
    spectrum with exposure = dwell, and integrates the window by the
    trapezoidal rule on the spectrometer's native bins (no resampling);
    bins outside the window are clipped, not interpolated.
    """

    LAYER = "logic"
    PASSIVE = True
    INTERFACE = ConfocalScannerInterface
    CONNECTORS = {"scanner": ConfocalScannerInterface,
                  "spectrometer": SpectrometerInterface}

    def on_activate(self):
        window = self.ctx.option("window")
        try:
            lo, hi = (float(v) for v in window)
        except (TypeError, ValueError) as exc:
            raise SchemaError("window must be [lambda_lo, lambda_hi] nm") from exc
        if not lo < hi:
            raise SchemaError("window must satisfy lambda_lo < lambda_hi")
        self._window = (lo, hi)
        self._scanner = self.ctx.connector("scanner")
        self._spectrometer = self.ctx.connector("spectrometer")

    def get_volume(self) -> ScanVolume:
        return self._scanner.get_volume()

    def get_position(self) -> Position3:
        return self._scanner.get_position()

    def set_position(self, p: Position3) -> None:
        self._scanner.set_position(p)

    def _window_rate(self, exposure_s: float) -> float:
        spectrum = self._spectrometer.acquire_spectrum(exposure_s)
        lo, hi = self._window
        wl = spectrum.wavelengths
        inten = spectrum.intensities
        counts = 0.0
        for k in range(len(wl) - 1):
            if wl[k] >= lo and wl[k + 1] <= hi:
                counts += (inten[k] + inten[k + 1]) / 2.0
        return counts / exposure_s

    def scan_line(self, start: Position3, end: Position3, pixels: int,
                  dwell_s: float) -> list[float]:
        if pixels < 2:
            raise OutOfRange("scan_line needs at least 2 pixels")
        if dwell_s <= 0:
            raise OutOfRange("dwell time must be > 0")
        xs = grid(start.x, end.x, pixels)
        ys = grid(start.y, end.y, pixels)
        zs = grid(start.z, end.z, pixels)
        rates = []
        for k in range(pixels):
            self._scanner.set_position(Position3(xs[k], ys[k], zs[k]))
            rates.append(self._window_rate(dwell_s))
        return rates


@module_kind("tilt_scanner")
class TiltScanner(Module, ConfocalScannerInterface):
    """Shear transform between logical (flat-sample) and physical
    coordinates: physical z = logical z + plane.dz(x, y).

    get_volume reports the wrapped scanner's volume in logical terms; the
    wrapped scanner rejects sheared targets that leave it (OutOfRange).
    """

    LAYER = "logic"
    PASSIVE = True
    INTERFACE = ConfocalScannerInterface
    CONNECTORS = {"scanner": ConfocalScannerInterface}

    def on_activate(self):
        self._scanner = self.ctx.connector("scanner")
        max_slope = float(self.ctx.option("max_slope", 1.0))
        reference = self.ctx.option("reference", [0.0, 0.0, 0.0])
        try:
            ref = Position3(*(float(v) for v in reference))
        except (TypeError, ValueError) as exc:
            raise SchemaError("reference must be [x, y, z]") from exc
        plane = TiltPlane(reference=ref,
                          slope_x=float(self.ctx.option("slope_x", 0.0)),
                          slope_y=float(self.ctx.option("slope_y", 0.0)))
        self._max_slope = max_slope
        self._check_plane(plane)
        self._plane = plane

    def _check_plane(self, plane: TiltPlane) -> None:
        if max(abs(plane.slope_x), abs(plane.slope_y)) >= self._max_slope:
            raise OutOfRange(
                f"tilt slopes exceed the configured bound {self._max_slope}")

    def _to_inner(self, p: Position3) -> Position3:
        return Position3(p.x, p.y, p.z + self._plane.dz(p.x, p.y))

    def _from_inner(self, p: Position3) -> Position3:
        return Position3(p.x, p.y, p.z - self._plane.dz(p.x, p.y))

    def get_tilt(self) -> TiltPlane:
        return self._plane

    def set_tilt(self, plane: TiltPlane) -> None:
        self._check_plane(plane)
        self._plane = plane

    def calibrate(self, p1: Position3, p2: Position3, p3: Position3) -> TiltPlane:
        """Adopt the plane through three logical-coordinate surface
        points (as measured through this interfuse)."""
        plane = calibrate_tilt(self._to_inner(p1), self._to_inner(p2),
                               self._to_inner(p3))
        self.set_tilt(plane)
        return plane

    def get_volume(self) -> ScanVolume:
        return self._scanner.get_volume()

    def get_position(self) -> Position3:
        return self._from_inner(self._scanner.get_position())

    def set_position(self, p: Position3) -> None:
        self._scanner.set_position(self._to_inner(p))

    def scan_line(self, start: Position3, end: Position3, pixels: int,
                  dwell_s: float) -> list[float]:
        # the shear is affine, so equidistant logical pixels map to
        # equidistant physical pixels; endpoints carry the whole transform
        return self._scanner.scan_line(self._to_inner(start),
                                       self._to_inner(end), pixels, dwell_s)
