"""Command-line entry point.

Subcommands: ``validate`` checks a configuration, ``serve`` runs the
protocol server, and ``scan``/``odmr``/``multispot`` run headless
measurements. Headless runs stamp data files from a virtual clock, so a
fixed seed reproduces output byte for byte.

Exit codes: 0 success, 1 configuration or validation failure, 2 runtime
measurement failure, 3 bind or connection failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import threading

from .config import parse_config, validate
from .confocal import ScanSettings
from .errors import (
    BindError,
    ConfigSyntaxError,
    ConnectError,
    LabError,
    SchemaError,
)
from .interfaces import Position3
from .kernel import Kernel
from .odmr import SweepSettings
from .remote.server import RemoteServer
from .util import VirtualClock

LOOPBACK_HOSTS = {"127.0.0.1", "localhost", "::1"}
DEFAULT_LISTEN = "127.0.0.1:8765"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CONNECT = 3


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_config(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    violations = validate(cfg)
    if violations:
        lines = "\n".join(f"  {v.rule_id} {v.module}: {v.message}"
                          for v in violations)
        raise SchemaError(f"configuration invalid:\n{lines}")
    return cfg


def _first_of_kind(cfg, kind: str) -> str:
    for spec in cfg.modules:
        if spec.kind == kind:
            return spec.name
    raise SchemaError(f"configuration declares no module of kind '{kind}'")


def _floats(text: str, n: int, flag: str) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise SchemaError(f"{flag} needs {n} comma-separated numbers")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise SchemaError(f"{flag} needs {n} comma-separated numbers") from None


def _ints(text: str, n: int, flag: str) -> tuple[int, ...]:
    values = _floats(text, n, flag)
    if any(not v.is_integer() for v in values):
        raise SchemaError(f"{flag} needs integers")
    return tuple(int(v) for v in values)


# -- subcommands ---------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (ConfigSyntaxError, SchemaError) as exc:
        print(f"PARSE_ERROR: {exc}")
        return EXIT_CONFIG
    violations = validate(cfg)
    for v in violations:
        print(f"{v.rule_id} {v.module}: {v.message}")
    if violations:
        return EXIT_CONFIG
    print(f"ok: {len(cfg.modules)} modules, startup {cfg.startup}")
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise SchemaError(f"--listen '{args.listen}' is not host:port")
    port = int(port_text)
    if host not in LOOPBACK_HOSTS and not args.allow_remote:
        raise SchemaError(
            f"refusing to bind non-loopback host '{host}' without --allow-remote")
    exposed = set(args.expose.split(",")) if args.expose else None
    kernel = Kernel(cfg)
    server = None
    try:
        # Ctrl-C can land before the wait starts; treat it as a shutdown
        # request anywhere past this point, not as a crash.
        try:
            for name in cfg.startup:
                kernel.activate(name)
            server = RemoteServer(kernel, host, port, exposed=exposed)
            server.serve_background()
            print(f"serving on {server.host}:{server.port}", flush=True)
            threading.Event().wait()
        except KeyboardInterrupt:
            print("shutting down", file=sys.stderr)
    finally:
        if server is not None:
            server.close()
        kernel.shutdown()
    return EXIT_OK


def _headless_kernel(cfg) -> Kernel:
    # virtual recorder clock: reruns with one seed write identical files
    return Kernel(cfg, recorder_clock=VirtualClock())


def cmd_scan(args) -> int:
    cfg = _load_config(args)
    center = _floats(args.center, 3, "--center")
    extent = _floats(args.extent, 2, "--extent")
    res = _ints(args.res, 2, "--res")
    settings = ScanSettings(plane=args.plane, center=Position3(*center),
                            extent=extent, resolution=res, dwell_s=args.dwell)
    confocal = _first_of_kind(cfg, "confocal_logic")
    recorder = _first_of_kind(cfg, "recorder")
    with _headless_kernel(cfg) as kernel:
        kernel.activate(confocal)
        kernel.activate(recorder)
        budget = settings.resolution[0] * settings.resolution[1] * settings.dwell_s
        with kernel.events.waiter("confocal.done") as done:
            scan_id = kernel.dispatch(confocal, "start_scan",
                                      {"settings": settings})
            done.wait(timeout=2.0 * budget + 60.0,
                      predicate=lambda t, p: p.get("scan_id") == scan_id)
        image = kernel.dispatch(confocal, "get_image")
        if image is None or image.rows_complete < image.settings.resolution[1]:
            raise LabError("scan did not complete")
        dat_path, svg_path = kernel.dispatch(
            recorder, "save_image", {"tag": args.out, "image": image})
        flat = [v for row in image.data for v in row]
        print(dat_path)
        print(svg_path)
        print(f"scan: {res[0]}x{res[1]} {args.plane}, "
              f"max {max(flat):.1f} counts/s, min {min(flat):.1f} counts/s")
    return EXIT_OK


def cmd_odmr(args) -> int:
    cfg = _load_config(args)
    settings = SweepSettings(f_start=args.start, f_stop=args.stop,
                             n_points=args.points, power=args.power,
                             dwell_s=args.dwell, n_sweeps=args.sweeps)
    odmr = _first_of_kind(cfg, "odmr_logic")
    recorder = _first_of_kind(cfg, "recorder")
    with _headless_kernel(cfg) as kernel:
        kernel.activate(odmr)
        kernel.activate(recorder)
        if args.at is not None:
            confocal = _first_of_kind(cfg, "confocal_logic")
            kernel.activate(confocal)
            kernel.dispatch(confocal, "set_cursor",
                            {"p": Position3(*_floats(args.at, 3, "--at"))})
        budget = args.points * args.dwell * args.sweeps
        with kernel.events.waiter("odmr.done") as done:
            run_id = kernel.dispatch(odmr, "start_sweep", {"settings": settings})
            done.wait(timeout=2.0 * budget + 60.0,
                      predicate=lambda t, p: p.get("run_id") == run_id)
        record = kernel.dispatch(odmr, "get_record")
        if record is None or record.sweeps_done < args.sweeps:
            raise LabError("sweep did not complete")
        freqs = kernel.dispatch(odmr, "frequencies")
        fit = None
        fit_line = "fit: none (fit failed or degenerate data)"
        try:
            fit = kernel.dispatch(odmr, "fit_resonance")
            fit_line = (f"fit: f0 {fit.params['f0'] / 1e9:.6f} GHz, "
                        f"fwhm {fit.params['fwhm'] / 1e6:.3f} MHz, "
                        f"contrast {fit.params['c'] * 100:.1f}%")
        except LabError:
            pass
        metadata = {
            "kind": "odmr",
            "f_start_hz": repr(float(args.start)),
            "f_stop_hz": repr(float(args.stop)),
            "n_points": str(args.points),
            "power_dbm": repr(float(args.power)),
            "dwell_s": repr(float(args.dwell)),
            "sweeps_done": str(record.sweeps_done),
        }
        if fit is not None:
            metadata["fit_f0_hz"] = repr(float(fit.params["f0"]))
            metadata["fit_fwhm_hz"] = repr(float(fit.params["fwhm"]))
            metadata["fit_contrast"] = repr(float(fit.params["c"]))
        dat_path = kernel.dispatch(recorder, "save_data", {
            "tag": args.out, "metadata": metadata,
            "columns": {"frequency_hz": list(freqs),
                        "mean_rate_counts_per_s": list(record.sum)}})
        svg_path = kernel.dispatch(recorder, "save_plot", {
            "tag": args.out, "x": list(freqs), "y": list(record.sum),
            "x_label": "frequency / Hz",
            "y_label": "average fluorescence / counts/s",
            "fit": fit})
        print(dat_path)
        print(svg_path)
        print(fit_line)
    return EXIT_OK


def _read_spots(path: str) -> list[Position3]:
    spots = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise SchemaError(
                    f"{path}:{lineno}: expected 'x y z', got {text!r}")
            try:
                x, y, z = (float(p) for p in parts)
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: non-numeric coordinate in {text!r}") from None
            spots.append(Position3(x, y, z))
    return spots


def cmd_multispot(args) -> int:
    cfg = _load_config(args)
    spots = _read_spots(args.spots)
    sweep = SweepSettings(f_start=args.start, f_stop=args.stop,
                          n_points=args.points, power=args.power,
                          dwell_s=args.dwell, n_sweeps=args.sweeps)
    task = _first_of_kind(cfg, "multispot_task")
    with _headless_kernel(cfg) as kernel:
        kernel.activate(task)
        results = kernel.dispatch(task, "run_multispot",
                                  {"spots": spots, "sweep": sweep})
        accepted = 0
        for entry in results:
            index = entry["spot_index"]
            if entry["data_path"] is None:
                print(f"spot {index}: optimization rejected, skipped")
                continue
            accepted += 1
            print(entry["data_path"])
            fit = entry["fit"]
            if fit is not None:
                print(f"spot {index}: f0 {fit.params['f0'] / 1e9:.6f} GHz, "
                      f"fwhm {fit.params['fwhm'] / 1e6:.3f} MHz, "
                      f"contrast {fit.params['c'] * 100:.1f}%")
            else:
                print(f"spot {index}: fit failed")
        print(f"multispot: {accepted}/{len(results)} spots measured")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labkit",
        description="Modular measurement control: validate configs, serve "
                    "the remote protocol, run headless measurements.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="configuration JSON file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the configuration seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common],
                       help="check a configuration file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", parents=[common], help="run the protocol server")
    p.add_argument("--listen", default=DEFAULT_LISTEN, help="host:port to bind")
    p.add_argument("--allow-remote", action="store_true",
                   help="permit binding a non-loopback interface")
    p.add_argument("--expose", default=None,
                   help="comma-separated module names to expose (default: all)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("scan", parents=[common], help="run one confocal scan")
    p.add_argument("--plane", choices=("xy", "xz"), required=True)
    p.add_argument("--center", required=True, help="x,y,z in µm")
    p.add_argument("--extent", required=True, help="width,height in µm")
    p.add_argument("--res", required=True, help="nx,ny pixels")
    p.add_argument("--dwell", type=float, default=0.001, help="seconds per pixel")
    p.add_argument("--out", required=True, help="data file tag")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("odmr", parents=[common], help="run an ODMR sweep")
    p.add_argument("--start", type=float, required=True, help="start frequency Hz")
    p.add_argument("--stop", type=float, required=True, help="stop frequency Hz")
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--sweeps", type=int, default=1)
    p.add_argument("--at", default=None,
                   help="x,y,z µm: move the cursor here before sweeping")
    p.add_argument("--power", type=float, default=-10.0, help="dBm")
    p.add_argument("--dwell", type=float, default=0.002, help="seconds per point")
    p.add_argument("--out", required=True, help="data file tag")
    p.set_defaults(func=cmd_odmr)

    p = sub.add_parser("multispot", parents=[common],
                       help="optimize and sweep a list of spots")
    p.add_argument("--spots", required=True, help="text file, 'x y z' per line")
    p.add_argument("--start", type=float, default=2.82e9)
    p.add_argument("--stop", type=float, default=2.92e9)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--sweeps", type=int, default=1)
    p.add_argument("--power", type=float, default=-10.0)
    p.add_argument("--dwell", type=float, default=0.002)
    p.set_defaults(func=cmd_multispot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BindError, ConnectError) as exc:
        return _fail(EXIT_CONNECT, str(exc))
    except (ConfigSyntaxError, SchemaError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except LabError as exc:
        return _fail(EXIT_RUNTIME, str(exc))


if __name__ == "__main__":
    sys.exit(main())
