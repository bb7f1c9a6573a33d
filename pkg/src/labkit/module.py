"""Module base class, kind registry and the context handed to instances.

A module kind is a class registered under a string identifier; the
configuration instantiates kinds by that identifier. Logic modules get a
dedicated serialized loop; hardware modules (and interfuses, which are
delegating logic) are passive: their operations run on the calling
module's loop under an exclusive lock.
"""

from __future__ import annotations

from typing import Any, Callable


class ModuleContext:
    """Kernel services available to a module instance.

    Constructed by the kernel; modules keep it as ``self.ctx``. Everything
    a module needs from the outside world flows through here, which keeps
    instruments testable without a kernel (tests pass a stub).
    """

    def __init__(self, kernel, name: str, options: dict[str, Any]):
        self._kernel = kernel
        self.name = name
        self.options = options

    @property
    def seed(self) -> int:
        return self._kernel.seed

    @property
    def data_dir(self) -> str:
        return self._kernel.data_dir

    @property
    def clock(self):
        return self._kernel.clock

    @property
    def recorder_clock(self):
        """Clock stamping data files; virtual in reproducible headless
        runs, the kernel clock otherwise."""
        return self._kernel.recorder_clock

    def option(self, key: str, default=None):
        return self.options.get(key, default)

    def log(self, level: str, message: str) -> None:
        self._kernel.log(level, self.name, message)

    def debug(self, message: str) -> None:
        self.log("debug", message)

    def info(self, message: str) -> None:
        self.log("info", message)

    def warning(self, message: str) -> None:
        self.log("warning", message)

    def error(self, message: str) -> None:
        self.log("error", message)

    def publish(self, topic: str, payload: dict) -> None:
        self._kernel.events.publish(topic, payload)

    def connector(self, connector_name: str):
        """Bound dependency as a call proxy (serialized access guaranteed)."""
        return self._kernel.connector_of(self.name, connector_name)

    def peer(self, module_name: str):
        """Call proxy for an *active* module named in options, else None.

        This is how simulated instruments reach their option-declared
        peers (hardware carries no config connectors).
        """
        return self._kernel.peer_proxy(module_name)

    def set_busy(self, busy: bool) -> None:
        self._kernel.set_busy(self.name, busy)

    def post(self, job: Callable[[], None]) -> None:
        """Enqueue an internal job behind pending operations on this
        module's own loop."""
        self._kernel.post_job(self.name, job)

    def dispatch(self, target: str, op: str, params: dict | None = None):
        return self._kernel.dispatch(target, op, params, caller=self.name)

    def module_state(self, module_name: str) -> str:
        return self._kernel.state(module_name).value

    def wait_for_event(self, topic_pattern: str, predicate=None, timeout: float | None = None):
        return self._kernel.events.wait_for(topic_pattern, predicate, timeout)

    def event_waiter(self, topic_pattern: str):
        """Buffering waiter to open *before* triggering the awaited
        operation (no subscribe/publish race)."""
        return self._kernel.events.waiter(topic_pattern)


class Module:
    """Base class for every module kind."""

    #: layer this kind belongs to, or None if any layer is acceptable
    LAYER: str | None = None
    #: hardware interface the kind implements (hardware kinds, interfuses)
    INTERFACE: type | None = None
    #: passive modules have no loop; ops run on the caller under a lock
    PASSIVE: bool = False
    #: connector name -> class the bound target must implement
    CONNECTORS: dict[str, type] = {}

    def __init__(self, ctx: ModuleContext):
        self.ctx = ctx

    def on_activate(self) -> None:
        pass

    def on_deactivate(self) -> None:
        pass

    def on_stop_requested(self) -> None:
        """Called (from another thread) before a forced deactivation so
        long-running acquisitions can bail out between steps."""


#: kind identifier -> module class
KINDS: dict[str, type[Module]] = {}


def module_kind(kind: str):
    """Class decorator registering a module kind."""

    def register(cls: type[Module]) -> type[Module]:
        if kind in KINDS:
            raise ValueError(f"module kind '{kind}' already registered")
        cls.KIND = kind
        KINDS[kind] = cls
        return cls

    return register


def register_module_kind(kind: str, cls: type[Module]) -> None:
    """Imperative form of :func:`module_kind` (used by tests and plugins)."""
    module_kind(kind)(cls)


def unregister_module_kind(kind: str) -> None:
    KINDS.pop(kind, None)
