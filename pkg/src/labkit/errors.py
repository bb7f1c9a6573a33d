"""Exception taxonomy shared by every layer.

Logic modules branch on exception *type* (never on message text), and the
remote protocol maps each type to a stable wire kind, so new exceptions
must subclass :class:`LabError` and pick a ``kind``.
"""

from __future__ import annotations


class LabError(Exception):
    """Base class for all framework errors.

    ``kind`` is the stable protocol identifier; ``module`` is filled in by
    the kernel when the error crosses a dispatch boundary.
    """

    kind = "INTERNAL"

    def __init__(self, message: str = "", module: str | None = None):
        super().__init__(message)
        self.module = module

    def __str__(self) -> str:
        base = super().__str__()
        if self.module:
            return f"[{self.module}] {base}"
        return base


# --- configuration ----------------------------------------------------------

class ConfigSyntaxError(LabError):
    """Malformed configuration document (not valid JSON)."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(LabError):
    """Structurally valid document that violates the config schema."""


class InvalidConfiguration(LabError):
    """Configuration with validation violations handed to the kernel."""


# --- kernel -----------------------------------------------------------------

class UnknownModule(LabError):
    kind = "NOT_ACTIVE"


class ActivationFailed(LabError):
    def __init__(self, module: str, cause: BaseException):
        super().__init__(f"activation failed: {cause}", module=module)
        self.cause = cause


class NotActive(LabError):
    kind = "NOT_ACTIVE"


class UnknownOperation(LabError):
    kind = "UNKNOWN_OP"


class BusyError(LabError):
    kind = "BUSY"


class LayerViolation(LabError):
    """Dispatch whose caller-layer -> target-layer pair is illegal."""

    kind = "FORBIDDEN"


class ReentrantDispatch(LabError):
    """A module operation tried to dispatch to its own module synchronously."""


# --- hardware ---------------------------------------------------------------

class OutOfRange(LabError):
    kind = "OUT_OF_RANGE"


class NotImplementedByHardware(LabError):
    """Default body of every interface method; concrete hardware overrides."""

    kind = "DEVICE_FAULT"


class DeviceFault(LabError):
    kind = "DEVICE_FAULT"


# --- fitting / geometry -----------------------------------------------------

class DegenerateData(LabError):
    """Data cannot constrain the model (constant signal, too few points)."""


class NoConvergence(LabError):
    """Fit loop exhausted max_iter without meeting either tolerance."""


class DegenerateGeometry(LabError):
    """Calibration points do not define a plane."""


# --- recorder ---------------------------------------------------------------

class IoError(LabError):
    pass


# --- remote -----------------------------------------------------------------

class BindError(LabError):
    pass


class ConnectError(LabError):
    pass


class RemoteTimeout(LabError, TimeoutError):
    """No response within the per-call timeout."""


class ConnectionLost(LabError):
    """Peer went away while a call was in flight."""


class ProtocolError(LabError):
    """Frame or message that violates the wire protocol."""


class ForbiddenModule(LabError):
    """Request targeting a module the server does not expose."""

    kind = "FORBIDDEN"


#: Wire kind -> exception class used when a proxy re-raises a remote error.
KIND_TO_ERROR: dict[str, type[LabError]] = {
    "NOT_ACTIVE": NotActive,
    "UNKNOWN_OP": UnknownOperation,
    "OUT_OF_RANGE": OutOfRange,
    "BUSY": BusyError,
    "DEVICE_FAULT": DeviceFault,
    "FORBIDDEN": ForbiddenModule,
    "INTERNAL": LabError,
}


def error_kind(exc: BaseException) -> str:
    """Protocol kind for an arbitrary exception."""
    if isinstance(exc, LabError):
        return exc.kind
    return "INTERNAL"
