"""Simulated laboratory: point emitters with Gaussian PSFs, spectral lines
and microwave resonances, served through the hardware interfaces.

All randomness flows from one per-instrument xoshiro256** stream derived
from the configuration seed and the module name, so entire measurement
transcripts replay identically. With the ``noise`` option off the
instruments skip photon sampling and return exact model values, which the
logic-layer tests use as bitwise oracles.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .errors import OutOfRange, SchemaError
from .interfaces import (ConfocalScannerInterface, MicrowaveInterface,
                         Position3, ScanVolume, SpectrometerInterface,
                         Spectrum)
from .module import Module, module_kind
from .rng import Xoshiro256StarStar, stream_id
from .util import grid


@dataclass(frozen=True)
class Resonance:
    f0: float        # Hz
    fwhm: float      # Hz
    contrast: float  # dip depth, fraction of the off-resonant rate

    def __post_init__(self):
        if self.fwhm <= 0:
            raise SchemaError("resonance fwhm must be > 0")
        if not 0 < self.contrast < 1:
            raise SchemaError("resonance contrast must be in (0, 1)")


@dataclass(frozen=True)
class Emitter:
    position: Position3
    peak_rate: float    # counts/s at focus
    w_xy: float         # lateral 1/e^2 radius, um
    w_z: float          # axial 1/e^2 radius, um
    line_center: float  # nm
    line_width: float   # nm, 1-sigma of the Gaussian spectral line
    resonances: tuple[Resonance, ...] = ()

    def __post_init__(self):
        if self.peak_rate <= 0:
            raise SchemaError("emitter peak_rate must be > 0")
        if self.w_xy <= 0 or self.w_z <= 0:
            raise SchemaError("emitter PSF radii must be > 0")
        if self.line_width <= 0:
            raise SchemaError("emitter line_width must be > 0")


@dataclass(frozen=True)
class SimSample:
    emitters: tuple[Emitter, ...]
    background_rate: float = 0.0
    rng_stream_id: int = 0

    def __post_init__(self):
        if self.background_rate < 0:
            raise SchemaError("background_rate must be >= 0")


#: Default sample: five emitters spread through a 20x20x10 um volume.
DEFAULT_SAMPLE = {
    "background_rate": 2.0e3,
    "emitters": [
        {"position": [5.0, 5.0, 5.0]},
        {"position": [15.0, 5.0, 5.0]},
        {"position": [10.0, 10.0, 5.0]},
        {"position": [5.0, 15.0, 5.0]},
        {"position": [15.0, 15.0, 5.0]},
    ],
}

DEFAULT_EMITTER = {
    "peak_rate": 5.0e4,
    "w_xy": 0.15,
    "w_z": 0.45,
    "line_center": 700.0,
    "line_width": 3.0,
    "resonances": [{"f0": 2.87e9, "fwhm": 1.0e7, "contrast": 0.25}],
}

DEFAULT_VOLUME = [[0.0, 20.0], [0.0, 20.0], [0.0, 10.0]]


def parse_sample(data: dict | None, rng_stream: int = 0) -> SimSample:
    """Build a SimSample from the config-options schema.

    Emitter fields omitted in the document fall back to the defaults
    above; unknown fields are rejected so typos fail loudly.
    """
    if data is None:
        data = DEFAULT_SAMPLE
    if not isinstance(data, dict):
        raise SchemaError("sample must be an object")
    unknown = set(data) - {"emitters", "background_rate"}
    if unknown:
        raise SchemaError(f"unknown sample fields: {', '.join(sorted(unknown))}")
    emitters = []
    for i, edata in enumerate(data.get("emitters", [])):
        if not isinstance(edata, dict):
            raise SchemaError(f"emitter {i} must be an object")
        bad = set(edata) - set(DEFAULT_EMITTER) - {"position"}
        if bad:
            raise SchemaError(f"emitter {i}: unknown fields {', '.join(sorted(bad))}")
        merged = {**DEFAULT_EMITTER, **edata}
        pos = merged.get("position")
        if (not isinstance(pos, (list, tuple)) or len(pos) != 3
                or not all(isinstance(v, (int, float)) for v in pos)):
            raise SchemaError(f"emitter {i}: position must be [x, y, z]")
        resonances = tuple(
            Resonance(float(r["f0"]), float(r["fwhm"]), float(r["contrast"]))
            for r in merged["resonances"])
        emitters.append(Emitter(
            position=Position3(float(pos[0]), float(pos[1]), float(pos[2])),
            peak_rate=float(merged["peak_rate"]),
            w_xy=float(merged["w_xy"]),
            w_z=float(merged["w_z"]),
            line_center=float(merged["line_center"]),
            line_width=float(merged["line_width"]),
            resonances=resonances,
        ))
    background = data.get("background_rate", 0.0)
    if not isinstance(background, (int, float)) or isinstance(background, bool):
        raise SchemaError("background_rate must be a number")
    return SimSample(tuple(emitters), float(background), rng_stream)


def psf_weight(emitter: Emitter, p: Position3) -> float:
    """Gaussian confocal PSF: 1 at the emitter, 1/e^2 at w_xy laterally."""
    dr2 = (p.x - emitter.position.x) ** 2 + (p.y - emitter.position.y) ** 2
    dz = p.z - emitter.position.z
    return math.exp(-2.0 * dr2 / emitter.w_xy ** 2) * \
        math.exp(-2.0 * dz * dz / emitter.w_z ** 2)


def mw_suppression(emitter: Emitter, frequency: float) -> float:
    """Fluorescence factor under CW microwave drive: Lorentzian dips."""
    s = 1.0
    for r in emitter.resonances:
        half = r.fwhm / 2.0
        s -= r.contrast * half * half / ((frequency - r.f0) ** 2 + half * half)
    return s


def mean_rate(sample: SimSample, p: Position3,
              mw_on: bool = False, mw_frequency: float = 0.0) -> float:
    """Expected fluorescence rate (counts/s) at position p.

    Scalar pure-Python evaluation on purpose: values must be bitwise
    reproducible across runs and against the test oracles, which rules out
    vectorized code paths whose summation order may differ.
    """
    rate = sample.background_rate
    for emitter in sample.emitters:
        w = psf_weight(emitter, p)
        if mw_on:
            w *= mw_suppression(emitter, mw_frequency)
        rate += emitter.peak_rate * w
    return rate


def sample_counts(mean: float, dwell_s: float, rng: Xoshiro256StarStar,
                  noise: bool = True) -> int:
    """Photon counts over one dwell: Poisson around mean*dwell.

    With noise off, returns round(mean*dwell) without consuming rng state.
    """
    if mean < 0:
        raise OutOfRange("mean rate must be >= 0")
    if dwell_s <= 0:
        raise OutOfRange("dwell time must be > 0")
    mu = mean * dwell_s
    if not noise:
        return round(mu)
    return rng.poisson(mu)


def _parse_volume(raw) -> ScanVolume:
    if raw is None:
        raw = DEFAULT_VOLUME
    try:
        (x0, x1), (y0, y1), (z0, z1) = raw
        return ScanVolume((float(x0), float(x1)), (float(y0), float(y1)),
                          (float(z0), float(z1)))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"volume must be three [min, max] pairs: {exc}") from exc


class _SimInstrument(Module):
    """Shared plumbing: sample parsing and the per-instrument rng stream."""

    LAYER = "hardware"
    PASSIVE = True

    def on_activate(self):
        sid = stream_id(self.ctx.seed, self.ctx.name)
        self.sample = parse_sample(self.ctx.option("sample"), sid)
        self.rng = Xoshiro256StarStar(sid)
        self.noise = bool(self.ctx.option("noise", True))
        self.realtime = bool(self.ctx.option("realtime", False))


@module_kind("sim_scanner")
class SimScanner(_SimInstrument, ConfocalScannerInterface):
    """Confocal scanner + photon counter over the simulated sample.

    The ``microwave`` option names a MicrowaveInterface module whose CW
    state modulates fluorescence (ODMR); without it microwaves are ignored.
    """

    INTERFACE = ConfocalScannerInterface

    def on_activate(self):
        super().on_activate()
        self._volume = _parse_volume(self.ctx.option("volume"))
        self._position = Position3(0.0, 0.0, 0.0)
        if not self._volume.contains(self._position):
            x0, _ = self._volume.x_range
            y0, _ = self._volume.y_range
            z0, _ = self._volume.z_range
            self._position = Position3(x0, y0, z0)
        self._mw_name = self.ctx.option("microwave")

    def _mw_state(self) -> tuple[bool, float]:
        if not self._mw_name:
            return False, 0.0
        peer = self.ctx.peer(self._mw_name)
        if peer is None:
            return False, 0.0
        state = peer.get_state()
        return bool(state["on"]), float(state["frequency"])

    def get_volume(self) -> ScanVolume:
        return self._volume

    def get_position(self) -> Position3:
        return self._position

    def set_position(self, p: Position3) -> None:
        if not self._volume.contains(p):
            raise OutOfRange(f"position {p} outside scan volume")
        self._position = p

    def scan_line(self, start: Position3, end: Position3, pixels: int,
                  dwell_s: float) -> list[float]:
        if pixels < 2:
            raise OutOfRange("scan_line needs at least 2 pixels")
        if dwell_s <= 0:
            raise OutOfRange("dwell time must be > 0")
        for p in (start, end):
            if not self._volume.contains(p):
                raise OutOfRange(f"position {p} outside scan volume")
        mw_on, mw_f = self._mw_state()
        xs = grid(start.x, end.x, pixels)
        ys = grid(start.y, end.y, pixels)
        zs = grid(start.z, end.z, pixels)
        rates = []
        for k in range(pixels):
            p = Position3(xs[k], ys[k], zs[k])
            mu = mean_rate(self.sample, p, mw_on, mw_f)
            if self.noise:
                counts = sample_counts(mu, dwell_s, self.rng)
                rates.append(counts / dwell_s)
            else:
                rates.append(mu)  # exact model value: the bitwise oracle path
        self._position = end
        if self.realtime:
            time.sleep(pixels * dwell_s)
        return rates


@module_kind("sim_microwave")
class SimMicrowave(_SimInstrument, MicrowaveInterface):
    """CW microwave source with hard frequency limits (default 1-6 GHz)."""

    INTERFACE = MicrowaveInterface

    def on_activate(self):
        super().on_activate()
        limits = self.ctx.option("frequency_limits", [1.0e9, 6.0e9])
        try:
            lo, hi = (float(v) for v in limits)
        except (TypeError, ValueError) as exc:
            raise SchemaError("frequency_limits must be [min, max]") from exc
        if not lo < hi:
            raise SchemaError("frequency_limits must satisfy min < max")
        self._limits = (lo, hi)
        self._frequency = lo
        self._power = -20.0
        self._on = False

    def set_cw(self, frequency: float, power: float) -> None:
        lo, hi = self._limits
        if not lo <= frequency <= hi:
            raise OutOfRange(
                f"frequency {frequency:.6g} Hz outside limits [{lo:.6g}, {hi:.6g}]")
        if not math.isfinite(power):
            raise OutOfRange("power must be finite")
        self._frequency = float(frequency)
        self._power = float(power)

    def set_output(self, on: bool) -> None:
        self._on = bool(on)

    def get_state(self) -> dict:
        return {"frequency": self._frequency, "power": self._power, "on": self._on}


@module_kind("sim_spectrometer")
class SimSpectrometer(_SimInstrument, SpectrometerInterface):
    """Spectrometer seeing each emitter's Gaussian line, weighted by the
    confocal PSF at the scanner's current position.

    The ``scanner`` option names the position source; without it (or with
    the scanner inactive) only the dark level is returned. Intensities are
    photon counts per wavelength bin over the exposure.
    """

    INTERFACE = SpectrometerInterface

    def on_activate(self):
        super().on_activate()
        wl_range = self.ctx.option("wavelength_range", [600.0, 800.0])
        try:
            lo, hi = (float(v) for v in wl_range)
        except (TypeError, ValueError) as exc:
            raise SchemaError("wavelength_range must be [min, max]") from exc
        if not lo < hi:
            raise SchemaError("wavelength_range must satisfy min < max")
        n_bins = self.ctx.option("n_bins", 512)
        if not isinstance(n_bins, int) or isinstance(n_bins, bool) or n_bins < 2:
            raise SchemaError("n_bins must be an integer >= 2")
        self._wavelengths = tuple(grid(lo, hi, n_bins))
        self._bin_width = (hi - lo) / (n_bins - 1)
        dark = self.ctx.option("dark_rate", 50.0)
        if not isinstance(dark, (int, float)) or isinstance(dark, bool) or dark < 0:
            raise SchemaError("dark_rate must be a number >= 0")
        self._dark_rate = float(dark)  # counts/s per bin
        self._scanner_name = self.ctx.option("scanner")

    def _scanner_position(self) -> Position3 | None:
        if not self._scanner_name:
            return None
        peer = self.ctx.peer(self._scanner_name)
        if peer is None:
            return None
        return peer.get_position()

    def acquire_spectrum(self, exposure_s: float) -> Spectrum:
        if exposure_s <= 0:
            raise OutOfRange("exposure must be > 0")
        pos = self._scanner_position()
        weights = []
        if pos is not None:
            for emitter in self.sample.emitters:
                weights.append((emitter, psf_weight(emitter, pos)))
        intensities = []
        for lam in self._wavelengths:
            mu = self._dark_rate * exposure_s
            for emitter, w in weights:
                sigma = emitter.line_width
                frac = (self._bin_width / (sigma * math.sqrt(2.0 * math.pi))
                        * math.exp(-((lam - emitter.line_center) ** 2)
                                   / (2.0 * sigma * sigma)))
                mu += w * emitter.peak_rate * exposure_s * frac
            if self.noise:
                intensities.append(float(self.rng.poisson(mu)))
            else:
                intensities.append(mu)
        if self.realtime:
            time.sleep(exposure_s)
        return Spectrum(self._wavelengths, tuple(intensities))
