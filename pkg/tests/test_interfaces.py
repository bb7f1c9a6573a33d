"""Interface contracts: default-unimplemented methods, value-type
invariants, and the compliance kit run against the simulated hardware."""

import math

import pytest

from conftest import make_config
from labkit.compliance import check_microwave, check_scanner, check_spectrometer
from labkit.errors import NotImplementedByHardware, OutOfRange
from labkit.interfaces import (
    INTERFACES,
    ConfocalScannerInterface,
    MicrowaveInterface,
    Position3,
    ScanVolume,
    Spectrum,
    SpectrometerInterface,
)
from labkit.kernel import Kernel


def test_every_default_method_raises():
    scanner = ConfocalScannerInterface()
    p = Position3(0.0, 0.0, 0.0)
    with pytest.raises(NotImplementedByHardware):
        scanner.get_volume()
    with pytest.raises(NotImplementedByHardware):
        scanner.get_position()
    with pytest.raises(NotImplementedByHardware):
        scanner.set_position(p)
    with pytest.raises(NotImplementedByHardware):
        scanner.scan_line(p, p, 5, 0.01)

    mw = MicrowaveInterface()
    with pytest.raises(NotImplementedByHardware):
        mw.set_cw(2.87e9, -10.0)
    with pytest.raises(NotImplementedByHardware):
        mw.set_output(True)
    with pytest.raises(NotImplementedByHardware):
        mw.get_state()

    with pytest.raises(NotImplementedByHardware):
        SpectrometerInterface().acquire_spectrum(1.0)


def test_partial_override_still_raises_for_the_rest():
    class HalfScanner(ConfocalScannerInterface):
        def get_position(self):
            return Position3(1.0, 2.0, 3.0)

    s = HalfScanner()
    assert s.get_position() == Position3(1.0, 2.0, 3.0)
    with pytest.raises(NotImplementedByHardware):
        s.get_volume()


def test_interface_registry():
    assert INTERFACES == {
        "ConfocalScannerInterface": ConfocalScannerInterface,
        "MicrowaveInterface": MicrowaveInterface,
        "SpectrometerInterface": SpectrometerInterface,
    }


# -- value types --------------------------------------------------------------


def test_position_is_frozen():
    p = Position3(1.0, 2.0, 3.0)
    with pytest.raises(AttributeError):
        p.x = 5.0


def test_scan_volume_validates_and_contains():
    with pytest.raises(ValueError):
        ScanVolume((1.0, 0.0), (0.0, 1.0), (0.0, 1.0))
    vol = ScanVolume((0.0, 10.0), (0.0, 20.0), (0.0, 5.0))
    assert vol.contains(Position3(0.0, 0.0, 0.0))
    assert vol.contains(Position3(10.0, 20.0, 5.0))
    assert not vol.contains(Position3(10.1, 0.0, 0.0))
    assert not vol.contains(Position3(0.0, -0.1, 0.0))
    assert not vol.contains(Position3(0.0, 0.0, 5.1))


def test_spectrum_invariants():
    Spectrum((1.0, 2.0), (0.0, 5.0))
    with pytest.raises(ValueError):
        Spectrum((1.0, 2.0), (0.0,))
    with pytest.raises(ValueError):
        Spectrum((2.0, 1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        Spectrum((1.0, 1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        Spectrum((1.0, 2.0), (0.0, -1.0))


# -- compliance kit against the sims ------------------------------------------


@pytest.fixture
def sim_instruments(tmp_path):
    cfg = make_config([
        {"name": "mw", "layer": "hardware", "kind": "sim_microwave"},
        {"name": "scanner", "layer": "hardware", "kind": "sim_scanner",
         "options": {"microwave": "mw"}},
        {"name": "spectrometer", "layer": "hardware",
         "kind": "sim_spectrometer", "options": {"scanner": "scanner"}},
    ], seed=11, tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        for name in ("mw", "scanner", "spectrometer"):
            kernel.activate(name)
        yield kernel


def test_sim_scanner_compliance(sim_instruments):
    check_scanner(sim_instruments.handle("scanner").instance)


def test_sim_microwave_compliance(sim_instruments):
    check_microwave(sim_instruments.handle("mw").instance)


def test_sim_spectrometer_compliance(sim_instruments):
    check_spectrometer(sim_instruments.handle("spectrometer").instance)


def test_compliance_kit_catches_violations():
    """The kit itself must fail on a scanner that ignores its bounds."""

    class SloppyScanner(ConfocalScannerInterface):
        def __init__(self):
            self._p = Position3(5.0, 5.0, 5.0)

        def get_volume(self):
            return ScanVolume((0.0, 10.0), (0.0, 10.0), (0.0, 10.0))

        def get_position(self):
            return self._p

        def set_position(self, p):
            self._p = p  # no bounds check

        def scan_line(self, start, end, pixels, dwell_s):
            return [0.0] * pixels

    with pytest.raises(AssertionError, match="OutOfRange"):
        check_scanner(SloppyScanner())


def test_compliance_kit_catches_stale_readback():
    class StuckMicrowave(MicrowaveInterface):
        def get_state(self):
            return {"frequency": 1.0e9, "power": 0.0, "on": False}

        def set_cw(self, frequency, power):
            pass

        def set_output(self, on):
            pass

    with pytest.raises(AssertionError, match="readback"):
        check_microwave(StuckMicrowave())


# -- sim behaviour pinned at the interface level ------------------------------


def test_spectrometer_dark_level_statistics(sim_instruments):
    spectro = sim_instruments.handle("spectrometer").instance
    scanner = sim_instruments.handle("scanner").instance
    scanner.set_position(Position3(0.0, 0.0, 0.0))  # no emitter nearby
    exposure = 0.02
    spec = spectro.acquire_spectrum(exposure)
    n = len(spec.intensities)
    mu = 50.0 * exposure  # configured default dark rate, counts per bin
    mean = sum(spec.intensities) / n
    assert abs(mean - mu) < 3 * math.sqrt(mu / n)


def test_spectrometer_exposure_linearity(sim_instruments):
    spectro = sim_instruments.handle("spectrometer").instance
    scanner = sim_instruments.handle("scanner").instance
    scanner.set_position(Position3(5.0, 5.0, 5.0))  # on an emitter
    short = 0.0
    long = 0.0
    for _ in range(100):
        short += sum(spectro.acquire_spectrum(0.005).intensities)
        long += sum(spectro.acquire_spectrum(0.010).intensities)
    ratio = long / short
    # Poisson error on the totals is far below 5% at these counts
    assert ratio == pytest.approx(2.0, rel=0.05)
