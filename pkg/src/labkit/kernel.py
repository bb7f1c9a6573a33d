"""Module kernel: instantiation, lifecycle, serialized dispatch, logging.

The kernel turns a validated Configuration into living module instances.
Each logic module owns one worker thread draining a FIFO inbox, so its
operations execute strictly serially; hardware modules and interfuses are
passive objects guarded by a per-handle lock and execute on the calling
logic module's thread. Lifecycle transitions, dispatch and the event bus
are safe to drive from any thread.
"""

from __future__ import annotations

import enum
import fnmatch
import heapq
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass

from . import wire
from .config import Configuration, LAYER_MAY_TARGET, validate
from .errors import (ActivationFailed, BusyError, InvalidConfiguration,
                     LabError, LayerViolation, NotActive, ReentrantDispatch,
                     UnknownModule, UnknownOperation)
from .module import KINDS, Module, ModuleContext
from .util import Clock, iso_utc

LOG_RING_CAPACITY = 10_000


class LifecycleState(str, enum.Enum):
    UNLOADED = "unloaded"
    LOADED = "loaded"
    ACTIVE_IDLE = "active_idle"
    ACTIVE_BUSY = "active_busy"
    ERROR = "error"

    def is_active(self) -> bool:
        return self in (LifecycleState.ACTIVE_IDLE, LifecycleState.ACTIVE_BUSY)


@dataclass(frozen=True)
class LogEntry:
    timestamp: str
    level: str
    source: str
    message: str


# --- activation order -------------------------------------------------------

def resolve_activation_order(cfg: Configuration, roots: set[str] | list[str]) -> list[str]:
    """Roots plus all transitive connector targets, dependencies first.

    Deterministic: among modules whose dependencies are all placed, the
    lexicographically smallest name goes next.
    """
    declared = cfg.names()
    for root in roots:
        if root not in declared:
            raise UnknownModule(f"module '{root}' is not declared")

    by_name = {spec.name: spec for spec in cfg.modules}
    selected: set[str] = set()
    frontier = list(roots)
    while frontier:
        name = frontier.pop()
        if name in selected:
            continue
        selected.add(name)
        for target in by_name[name].connectors.values():
            if target in declared:
                frontier.append(target)

    # Kahn over the induced subgraph, min-heap on name for the tie-break.
    pending = {name: sum(1 for t in by_name[name].connectors.values() if t in selected)
               for name in selected}
    dependents: dict[str, list[str]] = {name: [] for name in selected}
    for name in selected:
        for target in by_name[name].connectors.values():
            if target in selected:
                dependents[target].append(name)

    ready = [name for name, n in pending.items() if n == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        name = heapq.heappop(ready)
        order.append(name)
        for dep in dependents[name]:
            pending[dep] -= 1
            if pending[dep] == 0:
                heapq.heappush(ready, dep)
    if len(order) != len(selected):
        raise LabError("connector graph contains a cycle")
    return order


# --- events -----------------------------------------------------------------

class EventBus:
    """Topic/payload fan-out with glob-pattern subscriptions.

    Callbacks run synchronously on the publishing thread and must be quick
    and non-blocking; slow consumers (the protocol server) buffer.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._next_id = 1
        self._subs: dict[int, tuple[list[str], object]] = {}

    def subscribe(self, patterns: list[str], callback) -> int:
        with self._lock:
            sub_id = self._next_id
            self._next_id += 1
            self._subs[sub_id] = (list(patterns), callback)
        return sub_id

    def unsubscribe(self, sub_id: int) -> None:
        with self._lock:
            self._subs.pop(sub_id, None)

    def publish(self, topic: str, payload: dict) -> None:
        with self._lock:
            listeners = [cb for patterns, cb in self._subs.values()
                         if any(fnmatch.fnmatchcase(topic, p) for p in patterns)]
        for callback in listeners:
            callback(topic, payload)

    def wait_for(self, pattern: str, predicate=None, timeout: float | None = None):
        """Block until an event matching ``pattern`` (and ``predicate``)
        arrives; returns (topic, payload) or None on timeout.

        Only sees events published after the call starts; to wait for the
        outcome of an operation you are about to trigger, open a
        :meth:`waiter` first.
        """
        with self.waiter(pattern) as w:
            return w.wait(timeout=timeout, predicate=predicate)

    def waiter(self, pattern: str) -> "EventWaiter":
        return EventWaiter(self, pattern)


class EventWaiter:
    """Buffering subscription: collects matching events from creation on,
    so subscribe-then-trigger-then-wait has no gap to race through."""

    def __init__(self, bus: EventBus, pattern: str):
        self._bus = bus
        self._queue: queue.Queue = queue.Queue()
        self._sub = bus.subscribe([pattern], self._on_event)

    def _on_event(self, topic, payload):
        self._queue.put((topic, payload))

    def wait(self, timeout: float | None = None, predicate=None):
        """Next matching event as (topic, payload), or None on timeout."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                return None
            try:
                topic, payload = self._queue.get(timeout=remaining)
            except queue.Empty:
                return None
            if predicate is None or predicate(topic, payload):
                return (topic, payload)

    def close(self):
        self._bus.unsubscribe(self._sub)

    def __enter__(self) -> "EventWaiter":
        return self

    def __exit__(self, *exc_info):
        self.close()


# --- logging ----------------------------------------------------------------

_LEVELS = ("debug", "info", "warning", "error")


class _LogSink:
    def __init__(self, path: str, bus: EventBus, clock: Clock):
        self._path = path
        self._bus = bus
        self._clock = clock
        self._lock = threading.Lock()
        self._file = None
        self._file_ok = True
        self._last_ts = ""
        self.ring: deque[LogEntry] = deque(maxlen=LOG_RING_CAPACITY)

    def log(self, level: str, source: str, message: str) -> None:
        if level not in _LEVELS:
            level = "info"
        with self._lock:
            ts = iso_utc(self._clock.now())
            if ts < self._last_ts:  # clock went backwards; keep stream monotone
                ts = self._last_ts
            self._last_ts = ts
            entry = LogEntry(ts, level, source, str(message))
            self.ring.append(entry)
            self._write(entry)
        self._bus.publish(f"log.{level}", {
            "timestamp": entry.timestamp, "level": entry.level,
            "source": entry.source, "message": entry.message,
        })

    def _write(self, entry: LogEntry) -> None:
        if not self._file_ok:
            return
        escaped = (entry.message.replace("\\", "\\\\")
                   .replace("\n", "\\n").replace("\r", "\\r"))
        line = f"{entry.timestamp} {entry.level.upper()} {entry.source} {escaped}\n"
        try:
            if self._file is None:
                self._file = open(self._path, "a", encoding="utf-8")
            self._file.write(line)
            self._file.flush()
        except OSError as exc:
            # logging must never fail the caller: degrade to memory-only
            self._file_ok = False
            self.ring.append(LogEntry(entry.timestamp, "warning", "kernel",
                                      f"log file unavailable, memory-only: {exc}"))

    def close(self) -> None:
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None


# --- per-module machinery ----------------------------------------------------

_AMBIENT = threading.local()


def current_module() -> str | None:
    return getattr(_AMBIENT, "name", None)


class _Job:
    __slots__ = ("fn", "done", "result", "error")

    def __init__(self, fn):
        self.fn = fn
        self.done = threading.Event()
        self.result = None
        self.error: BaseException | None = None


class _Worker:
    """One serialized loop: FIFO inbox drained by a dedicated thread."""

    def __init__(self, module_name: str, on_job_error):
        self.inbox: queue.Queue = queue.Queue()
        self._on_job_error = on_job_error
        self._thread = threading.Thread(
            target=self._run, name=f"module:{module_name}", daemon=True)
        self._module_name = module_name
        self._thread.start()

    def _run(self):
        _AMBIENT.name = self._module_name
        while True:
            job = self.inbox.get()
            if job is None:
                return
            try:
                job.result = job.fn()
            except BaseException as exc:  # propagate to the waiter, if any
                job.error = exc
                if job.done is None:
                    self._on_job_error(exc)
            finally:
                if job.done is not None:
                    job.done.set()

    def submit(self, fn) -> _Job:
        job = _Job(fn)
        self.inbox.put(job)
        return job

    def post(self, fn) -> None:
        job = _Job(fn)
        job.done = None  # fire-and-forget internal job
        self.inbox.put(job)

    def is_current_thread(self) -> bool:
        return threading.current_thread() is self._thread

    def stop(self) -> None:
        self.inbox.put(None)
        if not self.is_current_thread():
            self._thread.join(timeout=10)


class ModuleHandle:
    def __init__(self, spec):
        self.spec = spec
        self.state = LifecycleState.UNLOADED
        self.instance: Module | None = None
        self.connector_bindings: dict[str, "CallProxy"] = {}
        self.lock = threading.RLock()       # passive exclusivity
        self.worker: _Worker | None = None  # serialized loop, logic only
        self.passive = False

    @property
    def inbox(self):
        return self.worker.inbox if self.worker else None


class CallProxy:
    """Callable facade over kernel dispatch for one target module.

    Attribute access yields a bound method-like callable; every call goes
    through the kernel's serialization and layer checks with this proxy's
    owner as the caller.
    """

    def __init__(self, kernel: "Kernel", target: str, caller: str | None):
        self._kernel = kernel
        self._target = target
        self._caller = caller

    @property
    def target_name(self) -> str:
        return self._target

    def __getattr__(self, op: str):
        if op.startswith("_"):
            raise AttributeError(op)
        kernel, target, caller = self._kernel, self._target, self._caller

        def call(*args, **kwargs):
            return kernel.invoke(target, op, args, kwargs, caller=caller)

        call.__name__ = op
        return call


_INFRA_OPS = {"on_activate", "on_deactivate", "on_stop_requested", "ctx"}


class Kernel:
    def __init__(self, cfg: Configuration, clock: Clock | None = None,
                 recorder_clock: Clock | None = None):
        violations = validate(cfg)
        if violations:
            raise InvalidConfiguration(
                "; ".join(f"{v.rule_id}({v.module}): {v.message}" for v in violations))
        self.cfg = cfg
        self.seed = cfg.seed
        self.data_dir = cfg.data_dir
        self.clock = clock or Clock()
        #: clock used for data file naming/stamps; virtual in headless runs
        self.recorder_clock = recorder_clock or self.clock
        self.events = EventBus()
        self._sink = _LogSink(cfg.log_path, self.events, self.clock)
        self._handles = {spec.name: ModuleHandle(spec) for spec in cfg.modules}
        self._lifecycle_lock = threading.RLock()
        self.log("info", "kernel", "kernel created with "
                 f"{len(cfg.modules)} declared modules, seed {cfg.seed}")

    # -- logging ---------------------------------------------------------

    def log(self, level: str, source: str, message: str) -> None:
        self._sink.log(level, source, message)

    @property
    def log_ring(self) -> deque[LogEntry]:
        return self._sink.ring

    def recent_log(self, limit: int = 100) -> list[LogEntry]:
        return list(self._sink.ring)[-limit:]

    # -- registry --------------------------------------------------------

    def handle(self, name: str) -> ModuleHandle:
        try:
            return self._handles[name]
        except KeyError:
            raise UnknownModule(f"module '{name}' is not declared") from None

    def state(self, name: str) -> LifecycleState:
        return self.handle(name).state

    def list_modules(self) -> list[dict]:
        return [{"name": h.spec.name, "layer": h.spec.layer,
                 "kind": h.spec.kind, "state": h.state.value}
                for h in self._handles.values()]

    def connector_of(self, module_name: str, connector_name: str) -> "CallProxy":
        handle = self.handle(module_name)
        try:
            return handle.connector_bindings[connector_name]
        except KeyError:
            raise UnknownModule(
                f"module '{module_name}' has no connector '{connector_name}'") from None

    def peer_proxy(self, module_name: str) -> "CallProxy | None":
        handle = self._handles.get(module_name)
        if handle is None or not handle.state.is_active():
            return None
        return CallProxy(self, module_name, current_module())

    # -- lifecycle ---------------------------------------------------------

    def _set_state(self, handle: ModuleHandle, state: LifecycleState) -> None:
        if handle.state is state:
            return
        handle.state = state
        self.events.publish("module.state",
                            {"module": handle.spec.name, "state": state.value})

    def _load(self, handle: ModuleHandle) -> None:
        spec = handle.spec
        if spec.remote_address is not None:
            from .remote.client import remote_module_instance
            try:
                instance = remote_module_instance(self, spec)
            except LabError as exc:
                raise ActivationFailed(spec.name, exc) from exc
            handle.passive = True
        else:
            cls = KINDS.get(spec.kind)
            if cls is None:
                raise ActivationFailed(spec.name,
                                       LabError(f"unknown module kind '{spec.kind}'"))
            if cls.LAYER is not None and cls.LAYER != spec.layer:
                raise ActivationFailed(spec.name, LabError(
                    f"kind '{spec.kind}' belongs to layer '{cls.LAYER}', "
                    f"declared '{spec.layer}'"))
            ctx = ModuleContext(self, spec.name, dict(spec.options))
            try:
                instance = cls(ctx)
            except Exception as exc:
                raise ActivationFailed(spec.name, exc) from exc
            handle.passive = bool(cls.PASSIVE or spec.layer == "hardware")
        handle.instance = instance
        handle.connector_bindings = {
            cname: CallProxy(self, target, spec.name)
            for cname, target in spec.connectors.items()}
        if not handle.passive and handle.worker is None:
            handle.worker = _Worker(spec.name, self._make_job_error_handler(spec.name))
        self._set_state(handle, LifecycleState.LOADED)
        self.log("debug", "kernel", f"loaded {spec.name} ({spec.kind})")

    def _make_job_error_handler(self, name: str):
        def on_error(exc: BaseException) -> None:
            self.log("error", name, f"background job failed: {exc}")
            self._set_state(self.handle(name), LifecycleState.ERROR)
        return on_error

    def _run_on(self, handle: ModuleHandle, fn):
        if handle.passive:
            with handle.lock:
                return fn()
        if handle.worker.is_current_thread():
            return fn()
        job = handle.worker.submit(fn)
        job.done.wait()
        if job.error is not None:
            raise job.error
        return job.result

    def _check_connectors(self, handle: ModuleHandle) -> None:
        cls = type(handle.instance)
        for cname, required in cls.CONNECTORS.items():
            proxy = handle.connector_bindings.get(cname)
            if proxy is None:
                raise LabError(f"required connector '{cname}' is not wired")
            target = self.handle(proxy.target_name)
            if required is not None and not isinstance(target.instance, required):
                raise LabError(
                    f"connector '{cname}' target '{proxy.target_name}' does not "
                    f"implement {required.__name__}")
        for cname in handle.spec.connectors:
            if cname not in cls.CONNECTORS:
                self.log("warning", handle.spec.name,
                         f"connector '{cname}' is not declared by kind "
                         f"'{handle.spec.kind}' and will be ignored")

    def activate(self, name: str) -> LifecycleState:
        """Bring ``name`` and all its dependencies to active_idle.

        Dependencies first; idempotent on active modules. On failure the
        already-activated dependencies stay active.
        """
        with self._lifecycle_lock:
            order = resolve_activation_order(self.cfg, {name})
            for mod in order:
                handle = self.handle(mod)
                if handle.state is LifecycleState.ERROR:
                    raise ActivationFailed(mod, LabError("module is in error state; reset first"))
                if handle.state is LifecycleState.UNLOADED:
                    self._load(handle)
                if handle.state is LifecycleState.LOADED:
                    try:
                        self._check_connectors(handle)
                        self._run_on(handle, handle.instance.on_activate)
                    except Exception as exc:
                        self._set_state(handle, LifecycleState.ERROR)
                        self.log("error", "kernel", f"activation of {mod} failed: {exc}")
                        if isinstance(exc, ActivationFailed):
                            raise
                        raise ActivationFailed(mod, exc) from exc
                    self._set_state(handle, LifecycleState.ACTIVE_IDLE)
                    self.log("info", "kernel", f"activated {mod}")
            return self.handle(name).state

    def _active_dependents(self, name: str) -> list[str]:
        """Modules to deactivate for ``name``: itself plus every active
        module transitively depending on it, dependents first."""
        rdeps: dict[str, set[str]] = {n: set() for n in self._handles}
        for spec in self.cfg.modules:
            for target in spec.connectors.values():
                if target in rdeps:
                    rdeps[target].add(spec.name)
        affected = set()
        frontier = [name]
        while frontier:
            mod = frontier.pop()
            if mod in affected:
                continue
            affected.add(mod)
            frontier.extend(rdeps[mod])
        affected = {m for m in affected if self.handle(m).state.is_active()}
        if not affected:
            return []
        order = resolve_activation_order(self.cfg, affected)
        return [m for m in reversed(order) if m in affected]

    def deactivate(self, name: str, force: bool = False) -> LifecycleState:
        """Return ``name`` and its active dependents to loaded, dependents
        first. BusyError if anything affected is active_busy and not
        ``force``; no-op on modules that are not active."""
        with self._lifecycle_lock:
            handle = self.handle(name)
            if not handle.state.is_active():
                return handle.state
            affected = self._active_dependents(name)
            busy = [m for m in affected
                    if self.handle(m).state is LifecycleState.ACTIVE_BUSY]
            if busy and not force:
                raise BusyError(f"cannot deactivate while busy: {', '.join(busy)}",
                                module=busy[0])
            if force:
                for mod in affected:
                    self.handle(mod).instance.on_stop_requested()
            for mod in affected:
                h = self.handle(mod)
                try:
                    self._run_on(h, h.instance.on_deactivate)
                except Exception as exc:
                    self.log("error", "kernel", f"deactivation of {mod} raised: {exc}")
                self._set_state(h, LifecycleState.LOADED)
                self.log("info", "kernel", f"deactivated {mod}")
            return handle.state

    def reset(self, name: str) -> LifecycleState:
        """error -> loaded, so the module can be activated again."""
        with self._lifecycle_lock:
            handle = self.handle(name)
            if handle.state is LifecycleState.ERROR:
                self._set_state(handle, LifecycleState.LOADED)
                self.log("info", "kernel", f"reset {name}")
            return handle.state

    def set_busy(self, name: str, busy: bool) -> None:
        handle = self.handle(name)
        if not handle.state.is_active():
            return
        self._set_state(handle, LifecycleState.ACTIVE_BUSY if busy
                        else LifecycleState.ACTIVE_IDLE)

    def post_job(self, name: str, job) -> None:
        handle = self.handle(name)
        if handle.worker is None:
            raise LabError(f"module '{name}' has no loop", module=name)
        handle.worker.post(job)

    # -- dispatch ----------------------------------------------------------

    def dispatch(self, target: str, op: str, params: dict | None = None,
                 caller: str | None = None):
        """Invoke ``op`` on ``target`` with keyword parameters.

        Blocks until the operation completes on the target's loop (or, for
        passive modules, runs it inline under the exclusivity lock) and
        returns its result; errors propagate tagged with the module name.
        """
        return self.invoke(target, op, (), params or {}, caller=caller)

    def invoke(self, target: str, op: str, args: tuple, kwargs: dict,
               caller: str | None = None):
        handle = self.handle(target)
        if caller is None:
            caller = current_module()
        if caller is not None and caller in self._handles:
            caller_layer = self._handles[caller].spec.layer
            target_layer = handle.spec.layer
            if target_layer not in LAYER_MAY_TARGET[caller_layer]:
                raise LayerViolation(
                    f"{caller_layer} module '{caller}' may not dispatch to "
                    f"{target_layer} module '{target}'")
        if not handle.state.is_active():
            raise NotActive(f"module '{target}' is not active", module=target)
        if op.startswith("_") or op in _INFRA_OPS:
            raise UnknownOperation(f"no operation '{op}'", module=target)
        method = getattr(handle.instance, op, None)
        if method is None or not callable(method):
            raise UnknownOperation(f"no operation '{op}'", module=target)
        if kwargs:
            try:
                kwargs = wire.decode_params(method, kwargs)
            except TypeError as exc:
                raise UnknownOperation(str(exc), module=target) from exc

        def run():
            return method(*args, **kwargs)

        try:
            if handle.passive:
                with handle.lock:
                    return run()
            if handle.worker.is_current_thread():
                raise ReentrantDispatch(
                    f"operation on '{target}' tried to re-enter its own module")
            job = handle.worker.submit(run)
            job.done.wait()
            if job.error is not None:
                raise job.error
            return job.result
        except LabError as exc:
            if exc.module is None:
                exc.module = target
            raise
        except Exception as exc:
            wrapped = LabError(f"{type(exc).__name__}: {exc}", module=target)
            raise wrapped from exc

    # -- shutdown ----------------------------------------------------------

    def shutdown(self) -> None:
        """Deactivate everything (dependents first) and stop all loops."""
        with self._lifecycle_lock:
            active = [h.spec.name for h in self._handles.values()
                      if h.state.is_active()]
            if active:
                order = resolve_activation_order(self.cfg, set(active))
                for name in reversed(order):
                    if self.handle(name).state.is_active():
                        self.deactivate(name, force=True)
            for h in self._handles.values():
                if h.worker is not None:
                    h.worker.stop()
                    h.worker = None
                if h.state is not LifecycleState.UNLOADED:
                    self._set_state(h, LifecycleState.UNLOADED)
                h.instance = None
                h.connector_bindings = {}
        self._sink.close()

    def __enter__(self) -> "Kernel":
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()
