"""Interface compliance kit.

Each ``check_*`` function exercises one hardware interface contract
against a live object: readback consistency, range enforcement and error
taxonomy. The object may be a concrete module instance, an interfuse or a
remote proxy; the checks only use the interface's methods, so anything
that claims the interface must pass the same suite. Failures raise
AssertionError with a message naming the broken clause.
"""

from __future__ import annotations

from .errors import OutOfRange
from .interfaces import Position3

#: readback tolerance in micrometers; coordinate-transforming interfuses
#: may not round-trip bitwise
POSITION_ATOL = 1e-9


def _mid(lo: float, hi: float) -> float:
    return lo + (hi - lo) / 2.0


def _assert_out_of_range(fn, what: str):
    try:
        fn()
    except OutOfRange:
        return
    except Exception as exc:
        raise AssertionError(
            f"{what}: expected OutOfRange, got {type(exc).__name__}: {exc}") from exc
    raise AssertionError(f"{what}: expected OutOfRange, nothing was raised")


def _positions_close(a, b, what: str):
    for axis in ("x", "y", "z"):
        av, bv = getattr(a, axis), getattr(b, axis)
        assert abs(av - bv) <= POSITION_ATOL, \
            f"{what}: {axis} readback {bv!r} differs from {av!r}"


def check_scanner(scanner) -> None:
    """ConfocalScannerInterface compliance."""
    volume = scanner.get_volume()
    for rng in (volume.x_range, volume.y_range, volume.z_range):
        assert rng[0] <= rng[1], f"volume range {rng} has min > max"

    center = Position3(_mid(*volume.x_range), _mid(*volume.y_range),
                       _mid(*volume.z_range))
    scanner.set_position(center)
    _positions_close(center, scanner.get_position(), "set_position readback")

    span = max(volume.x_range[1] - volume.x_range[0], 1.0)
    outside = Position3(volume.x_range[1] + span + 1.0, center.y, center.z)
    _assert_out_of_range(lambda: scanner.set_position(outside),
                         "set_position outside volume")
    _positions_close(center, scanner.get_position(),
                     "position after rejected set_position")

    start = Position3(volume.x_range[0], center.y, center.z)
    end = Position3(volume.x_range[1], center.y, center.z)
    values = scanner.scan_line(start, end, 7, 0.001)
    assert len(values) == 7, f"scan_line returned {len(values)} values for 7 pixels"
    assert all(v >= 0 for v in values), "scan_line returned a negative count rate"

    same = scanner.scan_line(center, center, 5, 0.001)
    assert len(same) == 5, "zero-length scan_line must still return one value per pixel"

    _assert_out_of_range(lambda: scanner.scan_line(start, outside, 5, 0.001),
                         "scan_line beyond volume")
    _assert_out_of_range(lambda: scanner.scan_line(start, end, 1, 0.001),
                         "scan_line with fewer than 2 pixels")
    _assert_out_of_range(lambda: scanner.scan_line(start, end, 5, 0.0),
                         "scan_line with zero dwell")


def check_microwave(mw, valid_frequency: float = 2.87e9,
                    invalid_frequency: float = 1e12) -> None:
    """MicrowaveInterface compliance.

    ``valid_frequency`` must lie inside the device limits and
    ``invalid_frequency`` outside them.
    """
    state = mw.get_state()
    for key in ("frequency", "power", "on"):
        assert key in state, f"get_state lacks '{key}'"

    mw.set_output(False)
    assert mw.get_state()["on"] is False, "output readback after set_output(False)"

    mw.set_cw(valid_frequency, -10.0)
    state = mw.get_state()
    assert state["frequency"] == valid_frequency, \
        f"frequency readback {state['frequency']!r} != {valid_frequency!r}"
    assert state["power"] == -10.0, f"power readback {state['power']!r} != -10.0"
    assert state["on"] is False, "set_cw must not switch the output on"

    _assert_out_of_range(lambda: mw.set_cw(invalid_frequency, 0.0),
                         "set_cw outside device limits")
    state = mw.get_state()
    assert state["frequency"] == valid_frequency, \
        "rejected set_cw must leave the frequency unchanged"

    mw.set_output(True)
    assert mw.get_state()["on"] is True, "output readback after set_output(True)"
    mw.set_output(False)
    assert mw.get_state()["on"] is False, "output readback after set_output(False)"


def check_spectrometer(spectrometer) -> None:
    """SpectrometerInterface compliance."""
    spectrum = spectrometer.acquire_spectrum(0.01)
    wl = list(spectrum.wavelengths)
    inten = list(spectrum.intensities)
    assert len(wl) == len(inten), "wavelengths and intensities lengths differ"
    assert len(wl) >= 2, "spectrum must contain at least 2 bins"
    assert all(b > a for a, b in zip(wl, wl[1:])), \
        "wavelengths must be strictly ascending"
    assert all(v >= 0 for v in inten), "negative intensity"

    _assert_out_of_range(lambda: spectrometer.acquire_spectrum(0.0),
                         "acquire_spectrum with zero exposure")
    _assert_out_of_range(lambda: spectrometer.acquire_spectrum(-1.0),
                         "acquire_spectrum with negative exposure")
