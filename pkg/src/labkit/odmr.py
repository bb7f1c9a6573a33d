"""ODMR logic: sweep the microwave frequency, record fluorescence at the
current scanner position, keep the per-sweep matrix and the running mean,
and fit the resonance dip.

Runs as a chain of per-point jobs so stop requests take effect within one
dwell period. The microwave output is switched off on every terminal path.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import BusyError, DegenerateData, SchemaError
from .fitting import FitResult, fit_lorentz_dip
from .interfaces import ConfocalScannerInterface, MicrowaveInterface
from .module import Module, module_kind
from .util import grid

#: stored sweeps are capped (ring); the running mean still covers all sweeps
MATRIX_CAP = 500

CONTINUOUS = "continuous"


@dataclass(frozen=True)
class SweepSettings:
    f_start: float          # Hz
    f_stop: float           # Hz
    n_points: int
    power: float            # dBm
    dwell_s: float          # per frequency point
    n_sweeps: int | str = 1  # count, or "continuous"

    def __post_init__(self):
        if not self.f_start < self.f_stop:
            raise SchemaError("f_start must be < f_stop")
        if self.n_points < 2:
            raise SchemaError("n_points must be >= 2")
        if self.dwell_s <= 0:
            raise SchemaError("dwell_s must be > 0")
        if self.n_sweeps != CONTINUOUS and (
                not isinstance(self.n_sweeps, int) or self.n_sweeps < 1):
            raise SchemaError('n_sweeps must be an integer >= 1 or "continuous"')


@dataclass(frozen=True)
class OdmrRecord:
    settings: SweepSettings
    matrix: tuple[tuple[float, ...], ...]  # completed sweeps x n_points, counts/s
    sum: tuple[float, ...]                 # running mean over all completed sweeps
    sweeps_done: int


@module_kind("odmr_logic")
class OdmrLogic(Module):
    """Frequency-swept fluorescence measurement (CW ODMR)."""

    LAYER = "logic"
    CONNECTORS = {"scanner": ConfocalScannerInterface,
                  "microwave": MicrowaveInterface}

    def on_activate(self):
        self._scanner = self.ctx.connector("scanner")
        self._mw = self.ctx.connector("microwave")
        self._run: dict | None = None
        self._record: OdmrRecord | None = None
        self._run_counter = 0

    def on_deactivate(self):
        self._run = None
        self._mw.set_output(False)

    def on_stop_requested(self):
        if self._run is not None:
            self._run["stop"] = True

    def start_sweep(self, settings: SweepSettings) -> int:
        """Begin sweeping; rows arrive as odmr.sweep events. Returns the
        run id used in this run's events."""
        if self._run is not None:
            raise BusyError("a sweep is already running")
        # surface frequency-limit errors before acquiring anything
        self._mw.set_cw(settings.f_start, settings.power)
        self._mw.set_cw(settings.f_stop, settings.power)
        self._run_counter += 1
        self._run = {
            "id": self._run_counter,
            "settings": settings,
            "freqs": grid(settings.f_start, settings.f_stop, settings.n_points),
            "row": [],
            "matrix": deque(maxlen=MATRIX_CAP),
            "totals": [0.0] * settings.n_points,
            "sweeps_done": 0,
            "stop": False,
        }
        self._record = None
        self.ctx.set_busy(True)
        self._mw.set_output(True)
        self.ctx.post(self._point_job)
        return self._run_counter

    def stop_sweep(self) -> None:
        """Halt after the current point; the partial sweep row is
        discarded. No-op when idle."""
        if self._run is not None:
            self._run["stop"] = True

    def _point_job(self):
        run = self._run
        if run is None:
            return
        if run["stop"]:
            self._finish_run()
            return
        try:
            settings: SweepSettings = run["settings"]
            k = len(run["row"])
            self._mw.set_cw(run["freqs"][k], settings.power)
            pos = self._scanner.get_position()
            pair = self._scanner.scan_line(pos, pos, 2, settings.dwell_s / 2.0)
            run["row"].append((float(pair[0]) + float(pair[1])) / 2.0)
        except Exception:
            self._finish_run()
            raise
        if len(run["row"]) == settings.n_points:
            self._complete_sweep(run)
        if self._run is not None:
            self.ctx.post(self._point_job)

    def _complete_sweep(self, run: dict) -> None:
        row = tuple(run["row"])
        run["row"] = []
        run["matrix"].append(row)
        for j, v in enumerate(row):
            run["totals"][j] += v
        run["sweeps_done"] += 1
        self.ctx.publish("odmr.sweep", {
            "run_id": run["id"], "sweep_index": run["sweeps_done"] - 1,
            "values": list(row),
        })
        settings: SweepSettings = run["settings"]
        if settings.n_sweeps != CONTINUOUS and run["sweeps_done"] >= settings.n_sweeps:
            self._finish_run()

    def _finish_run(self) -> None:
        run = self._run
        self._run = None
        try:
            self._mw.set_output(False)
        finally:
            self._record = self._snapshot(run)
            self.ctx.set_busy(False)
            self.ctx.publish("odmr.done", {
                "run_id": run["id"], "sweeps_done": run["sweeps_done"],
            })

    def _snapshot(self, run: dict) -> OdmrRecord:
        done = run["sweeps_done"]
        mean = tuple(t / done for t in run["totals"]) if done else ()
        return OdmrRecord(settings=run["settings"],
                          matrix=tuple(run["matrix"]),
                          sum=mean,
                          sweeps_done=done)

    def get_record(self) -> OdmrRecord | None:
        """Finished (or stopped) run's record; the live record while
        sweeping."""
        if self._run is not None:
            return self._snapshot(self._run)
        return self._record

    def frequencies(self) -> list[float]:
        if self._run is not None:
            return list(self._run["freqs"])
        if self._record is not None:
            s = self._record.settings
            return grid(s.f_start, s.f_stop, s.n_points)
        return []

    def fit_resonance(self) -> FitResult:
        """Lorentzian dip fit of the running mean over completed sweeps."""
        record = self.get_record()
        if record is None or record.sweeps_done < 1:
            raise DegenerateData("no completed sweeps to fit")
        s = record.settings
        freqs = grid(s.f_start, s.f_stop, s.n_points)
        return fit_lorentz_dip(freqs, list(record.sum))

    def get_status(self) -> dict:
        running = self._run is not None
        record = self.get_record()
        return {
            "running": running,
            "run_id": self._run["id"] if running else None,
            "sweeps_done": record.sweeps_done if record else 0,
        }
