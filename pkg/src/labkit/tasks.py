"""Scripted measurement tasks orchestrating the logic modules.

One task ships: visit a list of spots, optimize the position on each, and
take an ODMR spectrum where the optimization was accepted. Tasks are
ordinary logic modules, so they follow the same dispatch and state rules
as everything else.
"""

from __future__ import annotations

from .confocal import OptimizerResult
from .errors import (BusyError, DegenerateData, DeviceFault, NoConvergence,
                     NotActive, SchemaError)
from .fitting import FitResult
from .interfaces import Position3
from .module import Module, module_kind
from .odmr import CONTINUOUS, SweepSettings
from .util import grid


@module_kind("multispot_task")
class MultispotTask(Module):
    """Spot-by-spot optimize + ODMR sequence."""

    LAYER = "logic"
    CONNECTORS = {"confocal": None, "odmr": None, "recorder": None}

    def on_activate(self):
        self._confocal = self.ctx.connector("confocal")
        self._odmr = self.ctx.connector("odmr")
        self._recorder = self.ctx.connector("recorder")

    def run_multispot(self, spots: list[Position3],
                      sweep: SweepSettings) -> list[dict]:
        """Sequentially: set_cursor, optimize_at, and (if accepted) one
        full ODMR run with fit and save, for every spot.

        Returns one entry per spot: {spot_index, optimizer, fit,
        data_path}; rejected spots carry fit=None and data_path=None.
        """
        if sweep.n_sweeps == CONTINUOUS:
            raise SchemaError("multispot needs a finite sweep count")
        for name in (self._confocal.target_name, self._odmr.target_name):
            if self.ctx.module_state(name) != "active_idle":
                raise BusyError(f"module '{name}' is not idle")
        self.ctx.set_busy(True)
        try:
            return [self._run_spot(i, spot, sweep)
                    for i, spot in enumerate(spots)]
        finally:
            self.ctx.set_busy(False)

    def _run_spot(self, index: int, spot: Position3,
                  sweep: SweepSettings) -> dict:
        self._progress(index, "optimize")
        self._confocal.set_cursor(p=spot)
        optimizer: OptimizerResult = self._confocal.optimize_at(p=spot)
        entry = {"spot_index": index, "optimizer": optimizer,
                 "fit": None, "data_path": None}
        if not optimizer.accepted:
            self._progress(index, "skipped")
            return entry

        self._progress(index, "odmr")
        expected_s = sweep.n_sweeps * sweep.n_points * sweep.dwell_s
        with self.ctx.event_waiter("odmr.done") as waiter:
            run_id = self._odmr.start_sweep(settings=sweep)
            done = waiter.wait(timeout=30.0 + 5.0 * expected_s,
                               predicate=lambda t, p: p.get("run_id") == run_id)
        if done is None:
            raise DeviceFault(f"spot {index}: sweep {run_id} never finished")
        # a faulted run snapshots a short record before its done event, so
        # completeness is judged from the record, not from racing the
        # module's error transition
        try:
            record = self._odmr.get_record()
        except NotActive as exc:
            raise DeviceFault(f"spot {index}: sweep {run_id} failed") from exc
        if record is None or record.sweeps_done < sweep.n_sweeps:
            done_count = 0 if record is None else record.sweeps_done
            raise DeviceFault(f"spot {index}: sweep {run_id} aborted "
                              f"after {done_count} sweeps")

        self._progress(index, "fit")
        fit: FitResult | None
        try:
            fit = self._odmr.fit_resonance()
        except (DegenerateData, NoConvergence):
            fit = None
        entry["fit"] = fit

        self._progress(index, "save")
        metadata = {
            "kind": "multispot_odmr",
            "spot_index": index,
            "spot_x": repr(spot.x), "spot_y": repr(spot.y), "spot_z": repr(spot.z),
            "refined_x": repr(optimizer.refined.x),
            "refined_y": repr(optimizer.refined.y),
            "refined_z": repr(optimizer.refined.z),
            "f_start": repr(sweep.f_start), "f_stop": repr(sweep.f_stop),
            "n_points": sweep.n_points, "power": repr(sweep.power),
            "sweeps_done": record.sweeps_done,
        }
        if fit is not None:
            metadata["fit_f0"] = repr(fit.params["f0"])
            metadata["fit_fwhm"] = repr(fit.params["fwhm"])
            metadata["fit_contrast"] = repr(fit.params["c"])
        freqs = grid(sweep.f_start, sweep.f_stop, sweep.n_points)
        entry["data_path"] = self._recorder.save_data(
            tag=f"multispot_{index:02d}", metadata=metadata,
            columns={"frequency": freqs, "mean_rate": list(record.sum)})
        self._progress(index, "done")
        return entry

    def _progress(self, spot_index: int, phase: str) -> None:
        self.ctx.publish("task.progress",
                         {"spot_index": spot_index, "phase": phase})
