"""Client side of the remote protocol: a demuxing connection, interface
proxies, and the adapter that lets a kernel treat a remote module as one
of its own.

Proxies are generated from the interface class itself. Each public method
turns into a request whose params are keyed by the method's parameter
names; the response is rebuilt against the return annotation, so a proxy
satisfies isinstance checks and behaves like local hardware.
"""

from __future__ import annotations

import functools
import inspect
import queue
import socket
import threading
import typing

from .. import wire
from ..errors import (
    KIND_TO_ERROR,
    ConnectError,
    ConnectionLost,
    LabError,
    ProtocolError,
    RemoteTimeout,
)
from ..interfaces import INTERFACES
from ..module import KINDS, Module, ModuleContext
from . import framing
from .server import KERNEL_TARGET, MAX_ID

DEFAULT_TIMEOUT = 30.0


def parse_addr(addr: str) -> tuple[str, int]:
    """Split a "host:port" string; bare port numbers bind the host to
    loopback."""
    text = addr.strip()
    if ":" not in text:
        raise ValueError(f"address '{addr}' is not host:port")
    host, _, port_text = text.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"address '{addr}' has a non-numeric port") from None
    if not 0 < port < 65536:
        raise ValueError(f"address '{addr}' has port outside 1..65535")
    return (host or "127.0.0.1", port)


class _Slot:
    __slots__ = ("ready", "response")

    def __init__(self):
        self.ready = threading.Event()
        self.response: dict | None = None


class Connection:
    """One framed TCP connection with concurrent request slots.

    A reader thread demultiplexes responses by id and hands events (in
    arrival order) to ``on_event`` or, when no callback is set, to the
    ``events`` queue as (topic, seq, payload) tuples.
    """

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT,
                 on_event=None):
        self.timeout = timeout
        self.on_event = on_event
        self.events: queue.Queue = queue.Queue()
        self._pending: dict[int, _Slot] = {}
        self._pending_lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._id_lock = threading.Lock()
        self._next_id = 1
        self._closed = False
        try:
            self._sock = socket.create_connection((host, port), timeout=10.0)
        except OSError as exc:
            raise ConnectError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)
        self._reader = threading.Thread(
            target=self._read_loop, name=f"remote-client:{host}:{port}",
            daemon=True)
        self._reader.start()

    # -- plumbing ----------------------------------------------------------

    def _take_id(self) -> int:
        with self._id_lock:
            rid = self._next_id
            self._next_id = rid + 1 if rid < MAX_ID else 1
            return rid

    def _read_loop(self) -> None:
        try:
            while True:
                message = framing.read_frame(self._sock)
                if message is None:
                    break
                if "id" in message:
                    self._resolve(message)
                elif "topic" in message:
                    self._deliver_event(message)
        except (LabError, OSError):
            pass
        finally:
            self._abandon_pending()

    def _resolve(self, message: dict) -> None:
        with self._pending_lock:
            slot = self._pending.pop(message.get("id"), None)
        if slot is not None:
            slot.response = message
            slot.ready.set()

    def _deliver_event(self, message: dict) -> None:
        topic = message.get("topic")
        seq = message.get("seq")
        payload = message.get("payload")
        if self.on_event is not None:
            try:
                self.on_event(topic, seq, payload)
            except Exception:
                pass
        else:
            self.events.put((topic, seq, payload))

    def _abandon_pending(self) -> None:
        self._closed = True
        with self._pending_lock:
            slots = list(self._pending.values())
            self._pending.clear()
        for slot in slots:
            slot.ready.set()

    # -- API ------------------------------------------------------------------

    def request(self, target: str, op: str, params: dict | None = None,
                timeout: float | None = None):
        """Round-trip one request; raises the remote error by kind."""
        if self._closed:
            raise ConnectionLost("connection is closed")
        rid = self._take_id()
        slot = _Slot()
        with self._pending_lock:
            self._pending[rid] = slot
        message = {"id": rid, "target": target, "op": op,
                   "params": params or {}}
        try:
            with self._send_lock:
                framing.send_frame(self._sock, message)
        except OSError as exc:
            with self._pending_lock:
                self._pending.pop(rid, None)
            raise ConnectionLost(f"send failed: {exc}") from exc
        limit = self.timeout if timeout is None else timeout
        if not slot.ready.wait(limit):
            with self._pending_lock:
                self._pending.pop(rid, None)
            raise RemoteTimeout(f"no response to {target}.{op} within {limit} s")
        if slot.response is None:
            raise ConnectionLost(f"connection lost awaiting {target}.{op}")
        return self._unpack(slot.response)

    @staticmethod
    def _unpack(response: dict):
        if "error" in response:
            error = response["error"] or {}
            kind = error.get("kind", "INTERNAL")
            message = error.get("message", "remote error")
            raise KIND_TO_ERROR.get(kind, LabError)(message)
        if "result" not in response:
            raise ProtocolError("response carries neither result nor error")
        return response["result"]

    def subscribe(self, topics: list[str], timeout: float | None = None) -> list[str]:
        result = self.request(KERNEL_TARGET, "subscribe", {"topics": topics},
                              timeout=timeout)
        return result["subscribed"]

    def unsubscribe(self) -> None:
        self.request(KERNEL_TARGET, "unsubscribe")

    def close(self) -> None:
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- proxy generation ---------------------------------------------------------


def _proxy_method(iface_func):
    signature = inspect.signature(iface_func)
    hints = typing.get_type_hints(iface_func)
    returns = hints.get("return")

    @functools.wraps(iface_func)
    def method(self, *args, **kwargs):
        bound = signature.bind(self, *args, **kwargs)
        params = {name: wire.to_wire(value)
                  for name, value in bound.arguments.items() if name != "self"}
        raw = self._connection.request(self._remote_target,
                                       iface_func.__name__, params)
        if returns is None or returns is type(None):
            return None
        return wire.decode_value(returns, raw)

    return method


def _interface_methods(interface: type) -> dict:
    methods = {}
    for name, func in inspect.getmembers(interface, inspect.isfunction):
        if not name.startswith("_"):
            methods[name] = _proxy_method(func)
    return methods


def connect_proxy(addr: str, module: str, interface: str | type,
                  timeout: float = DEFAULT_TIMEOUT):
    """Object implementing ``interface`` whose methods call ``module`` on
    the server at ``addr``; blocks per call up to ``timeout`` seconds.

    The returned proxy owns its connection; ``close()`` (or use as a
    context manager) releases it.
    """
    iface = INTERFACES[interface] if isinstance(interface, str) else interface
    host, port = parse_addr(addr)
    connection = Connection(host, port, timeout=timeout)

    namespace = _interface_methods(iface)

    def _init(self):
        self._connection = connection
        self._remote_target = module

    def _close(self):
        connection.close()

    def _enter(self):
        return self

    def _exit(self, *exc):
        connection.close()

    namespace.update({
        "__init__": _init,
        "close": _close,
        "__enter__": _enter,
        "__exit__": _exit,
        "connection": property(lambda self: self._connection),
    })
    cls = type(f"Remote{iface.__name__}", (iface,), namespace)
    return cls()


# -- kernel adapter -----------------------------------------------------------


def _resolve_interface(spec) -> type:
    if spec.implements is not None:
        iface = INTERFACES.get(spec.implements)
        if iface is None:
            raise LabError(f"module '{spec.name}' implements unknown "
                           f"interface '{spec.implements}'")
        return iface
    kind_cls = KINDS.get(spec.kind)
    if kind_cls is not None and kind_cls.INTERFACE is not None:
        return kind_cls.INTERFACE
    iface = INTERFACES.get(spec.kind)
    if iface is None:
        raise LabError(
            f"cannot infer the interface of remote module '{spec.name}'; "
            f"set 'implements' or use an interface name as the kind")
    return iface


def remote_module_instance(kernel, spec) -> Module:
    """Module whose operations run on another process's module.

    The connection opens on activation and closes on deactivation, so a
    remote module reconnects cleanly across lifecycle round-trips. The
    remote-side name defaults to the local one; option ``remote_name``
    overrides it.
    """
    iface = _resolve_interface(spec)
    host, port = parse_addr(spec.remote_address)
    target = spec.options.get("remote_name", spec.name)
    timeout = float(spec.options.get("timeout_s", DEFAULT_TIMEOUT))

    namespace = _interface_methods(iface)

    def on_activate(self):
        self._connection = Connection(host, port, timeout=timeout)
        self._remote_target = target
        state = self._connection.request(KERNEL_TARGET, "module_state",
                                         {"module": target})["state"]
        if state not in ("active_idle", "active_busy"):
            self._connection.request(KERNEL_TARGET, "activate",
                                     {"module": target})
        self.ctx.info(f"attached to {target} at {host}:{port}")

    def on_deactivate(self):
        connection = getattr(self, "_connection", None)
        if connection is not None:
            connection.close()
            self._connection = None

    namespace.update({
        "PASSIVE": True,
        "LAYER": spec.layer,
        "INTERFACE": iface,
        "on_activate": on_activate,
        "on_deactivate": on_deactivate,
    })
    cls = type(f"RemoteModule_{spec.name}", (Module, iface), namespace)
    return cls(ModuleContext(kernel, spec.name, dict(spec.options)))
