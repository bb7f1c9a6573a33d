"""labkit: modular instrument control at desk scale.

A configuration file declares modules (hardware drivers and simulators,
logic, interfuses) and how they wire together; the kernel activates them,
serializes their operations, and exposes everything over a framed JSON
protocol that a CLI, scripts, or a browser UI can drive.
"""

__version__ = "0.1.0"

from .config import Configuration, ModuleSpec, parse_config, serialize_config, validate
from .errors import LabError
from .interfaces import (
    ConfocalScannerInterface,
    MicrowaveInterface,
    Position3,
    ScanVolume,
    SpectrometerInterface,
    Spectrum,
)
from .kernel import Kernel, LifecycleState
from .module import Module, ModuleContext, module_kind

# importing these registers their module kinds with the kernel
from . import confocal  # noqa: E402
from . import interfuses  # noqa: E402
from . import odmr  # noqa: E402
from . import recorder  # noqa: E402
from . import sim  # noqa: E402
from . import tasks  # noqa: E402

from .confocal import ConfocalLogic, OptimizerResult, ScanImage, ScanSettings
from .fitting import FitResult, fit_gauss1d, fit_gauss2d, fit_lorentz_dip
from .interfuses import SpectralScanner, TiltPlane, TiltScanner, calibrate_tilt
from .odmr import OdmrLogic, OdmrRecord, SweepSettings
from .recorder import DataRecorder, load_data
from .sim import Emitter, Resonance, SimMicrowave, SimScanner, SimSpectrometer
from .tasks import MultispotTask

__all__ = [
    "Configuration",
    "ConfocalLogic",
    "ConfocalScannerInterface",
    "DataRecorder",
    "Emitter",
    "FitResult",
    "Kernel",
    "LabError",
    "LifecycleState",
    "MicrowaveInterface",
    "Module",
    "ModuleContext",
    "ModuleSpec",
    "MultispotTask",
    "OdmrLogic",
    "OdmrRecord",
    "OptimizerResult",
    "Position3",
    "Resonance",
    "ScanImage",
    "ScanSettings",
    "ScanVolume",
    "SimMicrowave",
    "SimScanner",
    "SimSpectrometer",
    "SpectralScanner",
    "SpectrometerInterface",
    "Spectrum",
    "SweepSettings",
    "TiltPlane",
    "TiltScanner",
    "calibrate_tilt",
    "fit_gauss1d",
    "fit_gauss2d",
    "fit_lorentz_dip",
    "load_data",
    "module_kind",
    "parse_config",
    "serialize_config",
    "validate",
]
