"""Hardware interface contracts.

A logic module programs against these classes only. Every method body
raises NotImplementedByHardware by default; a concrete hardware module
(or an interfuse, or a remote proxy) must override all of them. Units are
pinned here once and for all: micrometers, Hz, dBm, seconds, counts/s —
hardware modules do the converting.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotImplementedByHardware


@dataclass(frozen=True)
class Position3:
    """Point in scanner coordinates, micrometers."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class ScanVolume:
    """Closed intervals reachable by a scanner, micrometers per axis."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if lo > hi:
                raise ValueError("volume interval must have min <= max")

    def contains(self, p: Position3) -> bool:
        return (self.x_range[0] <= p.x <= self.x_range[1]
                and self.y_range[0] <= p.y <= self.y_range[1]
                and self.z_range[0] <= p.z <= self.z_range[1])


@dataclass(frozen=True)
class Spectrum:
    """One spectrometer acquisition.

    wavelengths: bin centers in nm, strictly ascending.
    intensities: counts accumulated per bin over the exposure.
    """

    wavelengths: tuple[float, ...]
    intensities: tuple[float, ...]

    def __post_init__(self):
        if len(self.wavelengths) != len(self.intensities):
            raise ValueError("wavelengths and intensities must have equal length")
        if any(b <= a for a, b in zip(self.wavelengths, self.wavelengths[1:])):
            raise ValueError("wavelengths must be strictly ascending")
        if any(v < 0 for v in self.intensities):
            raise ValueError("intensities must be non-negative")


def _default(method_name: str):
    raise NotImplementedByHardware(f"{method_name} is not implemented by this hardware")


class ConfocalScannerInterface:
    """3-axis positioner fused with photon counting along a line."""

    def get_volume(self) -> ScanVolume:
        _default("get_volume")

    def get_position(self) -> Position3:
        _default("get_position")

    def set_position(self, p: Position3) -> None:
        """Move to ``p``; returns only once the move is done.

        Raises OutOfRange (position unchanged) for targets outside the
        volume.
        """
        _default("set_position")

    def scan_line(self, start: Position3, end: Position3, pixels: int,
                  dwell_s: float) -> list[float]:
        """Count rates at ``pixels`` equidistant points from start to end
        inclusive, counts/s, dwelling ``dwell_s`` per point."""
        _default("scan_line")


class MicrowaveInterface:
    """CW microwave source."""

    def set_cw(self, frequency: float, power: float) -> None:
        """Set CW frequency (Hz) and power (dBm). Raises OutOfRange outside
        the device limits; accepted settings stick."""
        _default("set_cw")

    def set_output(self, on: bool) -> None:
        _default("set_output")

    def get_state(self) -> dict:
        """{"frequency": Hz, "power": dBm, "on": bool} of the last accepted
        settings. Fresh devices report output off."""
        _default("get_state")


class SpectrometerInterface:
    def acquire_spectrum(self, exposure_s: float) -> Spectrum:
        """Single exposure of ``exposure_s`` seconds. exposure_s must be > 0."""
        _default("acquire_spectrum")


#: interface name -> class, for config-declared remote proxies and kinds.
INTERFACES: dict[str, type] = {
    "ConfocalScannerInterface": ConfocalScannerInterface,
    "MicrowaveInterface": MicrowaveInterface,
    "SpectrometerInterface": SpectrometerInterface,
}
