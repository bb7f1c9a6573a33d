"""Protocol server: exposes a kernel's modules over TCP frames and, on
the same port, WebSocket.

A connection's first bytes decide its flavor: "GET " starts an HTTP
upgrade to WebSocket at /ws, anything else is read as a raw frame length
prefix. Requests dispatch concurrently (responses may overtake each
other); each connection's event stream is a single ordered queue with
per-topic sequence numbers assigned at enqueue, so dropped events (bounded
buffer) show up as sequence gaps.
"""

from __future__ import annotations

import socket
import threading
from collections import deque

from .. import wire
from ..errors import BindError, ForbiddenModule, LabError, error_kind
from ..kernel import Kernel
from . import framing

EVENT_BUFFER = 10_000
MAX_ID = 2 ** 53

#: virtual dispatch target for kernel-level operations
KERNEL_TARGET = "@kernel"


class _Connection:
    def __init__(self, server: "RemoteServer", sock: socket.socket, peer: str):
        self.server = server
        self.sock = sock
        self.peer = peer
        self.websocket = False
        self.send_lock = threading.Lock()
        self.closed = threading.Event()
        self.sub_lock = threading.Lock()
        self.sub_id: int | None = None
        self.patterns: list[str] = []
        self.seq: dict[str, int] = {}
        self.outbox: deque = deque(maxlen=EVENT_BUFFER)
        self.outbox_cond = threading.Condition()

    # -- outbound ---------------------------------------------------------

    def send_message(self, message: dict) -> None:
        with self.send_lock:
            if self.websocket:
                payload = framing.encode_payload(message)
                self.sock.sendall(framing.ws_encode(payload))
            else:
                framing.send_frame(self.sock, message)

    def enqueue_event(self, topic: str, payload: dict) -> None:
        with self.outbox_cond:
            seq = self.seq.get(topic, 0) + 1
            self.seq[topic] = seq
            self.outbox.append({"topic": topic, "seq": seq, "payload": payload})
            self.outbox_cond.notify()

    def writer_loop(self) -> None:
        while True:
            with self.outbox_cond:
                while not self.outbox and not self.closed.is_set():
                    self.outbox_cond.wait(timeout=0.5)
                if self.closed.is_set():
                    return
                message = self.outbox.popleft()
            try:
                self.send_message(message)
            except Exception:
                self.close()
                return

    # -- subscription -------------------------------------------------------

    def set_patterns(self, patterns: list[str]) -> list[str]:
        events = self.server.kernel.events
        with self.sub_lock:
            if self.sub_id is not None:
                events.unsubscribe(self.sub_id)
                self.sub_id = None
            self.patterns = list(patterns)
            if self.patterns:
                self.sub_id = events.subscribe(self.patterns, self._on_event)
        return self.patterns

    def _on_event(self, topic: str, payload: dict) -> None:
        try:
            safe = wire.to_wire(payload)
        except TypeError:
            safe = {"unserializable": True, "topic": topic}
        self.enqueue_event(topic, safe)

    def close(self) -> None:
        if self.closed.is_set():
            return
        self.closed.set()
        with self.sub_lock:
            if self.sub_id is not None:
                self.server.kernel.events.unsubscribe(self.sub_id)
                self.sub_id = None
        with self.outbox_cond:
            self.outbox_cond.notify()
        try:
            # shutdown, not just close: a close alone leaves the fd pinned
            # by any thread blocked in recv, and the peer never sees FIN
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass
        self.server._forget(self)


class RemoteServer:
    """Serve a kernel's modules; see docs/protocol.md for the wire format."""

    def __init__(self, kernel: Kernel, host: str = "127.0.0.1", port: int = 0,
                 exposed: set[str] | None = None):
        self.kernel = kernel
        self.exposed = None if exposed is None else set(exposed)
        self._connections: set[_Connection] = set()
        self._conn_lock = threading.Lock()
        self._accepting = False
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self.host, self.port = self._listener.getsockname()[:2]

    def serve_background(self) -> "RemoteServer":
        self._accepting = True
        threading.Thread(target=self._accept_loop, name="remote:accept",
                         daemon=True).start()
        self.kernel.log("info", "remote",
                        f"serving on {self.host}:{self.port}")
        return self

    def _accept_loop(self) -> None:
        while self._accepting:
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            conn = _Connection(self, sock, f"{addr[0]}:{addr[1]}")
            with self._conn_lock:
                self._connections.add(conn)
            threading.Thread(target=self._serve_connection, args=(conn,),
                             name=f"remote:{conn.peer}", daemon=True).start()

    def _forget(self, conn: _Connection) -> None:
        with self._conn_lock:
            self._connections.discard(conn)

    def close(self) -> None:
        self._accepting = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._conn_lock:
            connections = list(self._connections)
        for conn in connections:
            conn.close()

    # -- connection handling --------------------------------------------------

    def _serve_connection(self, conn: _Connection) -> None:
        writer = threading.Thread(target=conn.writer_loop,
                                  name=f"remote:{conn.peer}:writer", daemon=True)
        writer.start()
        try:
            first = framing.recv_exact(conn.sock, 4)
            if first is None:
                return
            if first == b"GET ":
                self._websocket_session(conn, first)
            else:
                self._frame_session(conn, first)
        except LabError as exc:
            self._protocol_failure(conn, exc)
        except OSError:
            pass
        finally:
            conn.close()

    def _protocol_failure(self, conn: _Connection, exc: LabError) -> None:
        # protocol rule: one error response with id 0, then drop the link
        try:
            conn.send_message({"id": 0, "error": {
                "kind": "INTERNAL", "message": str(exc)}})
        except Exception:
            pass

    def _frame_session(self, conn: _Connection, first: bytes) -> None:
        message = framing.read_frame_after_prefix(conn.sock, first)
        while True:
            self._start_request(conn, message)
            nxt = framing.read_frame(conn.sock)
            if nxt is None:
                return
            message = nxt

    def _websocket_session(self, conn: _Connection, first: bytes) -> None:
        request_line, headers = framing.read_http_request(conn.sock, first)
        if " /ws" not in request_line.split("?")[0]:
            conn.sock.sendall(b"HTTP/1.1 404 Not Found\r\n"
                              b"Content-Length: 0\r\nConnection: close\r\n\r\n")
            return
        conn.sock.sendall(framing.ws_handshake_response(headers))
        conn.websocket = True
        while True:
            got = framing.ws_read_frame(conn.sock)
            if got is None:
                return
            opcode, payload = got
            if opcode == framing.OP_CLOSE:
                with conn.send_lock:
                    conn.sock.sendall(framing.ws_encode(b"", framing.OP_CLOSE))
                return
            if opcode == framing.OP_PING:
                with conn.send_lock:
                    conn.sock.sendall(framing.ws_encode(payload, framing.OP_PONG))
                continue
            if opcode != framing.OP_TEXT:
                continue
            self._start_request(conn, framing.decode_payload(payload))

    # -- requests --------------------------------------------------------------

    def _start_request(self, conn: _Connection, message: dict) -> None:
        rid = message.get("id")
        if (not isinstance(rid, int) or isinstance(rid, bool)
                or not 1 <= rid <= MAX_ID):
            raise framing.ProtocolError("request id must be an integer in [1, 2^53]")
        target = message.get("target")
        op = message.get("op")
        if not isinstance(target, str) or not isinstance(op, str):
            raise framing.ProtocolError("request needs string 'target' and 'op'")
        params = message.get("params") or {}
        if not isinstance(params, dict):
            raise framing.ProtocolError("'params' must be an object")
        threading.Thread(
            target=self._answer, args=(conn, rid, target, op, params),
            name=f"remote:{conn.peer}:req{rid}", daemon=True).start()

    def _answer(self, conn: _Connection, rid: int, target: str, op: str,
                params: dict) -> None:
        try:
            result = self._execute(conn, target, op, params)
            response = {"id": rid, "result": wire.to_wire(result)}
        except Exception as exc:
            response = {"id": rid, "error": {
                "kind": error_kind(exc), "message": str(exc)}}
        try:
            conn.send_message(response)
        except Exception:
            conn.close()

    def _execute(self, conn: _Connection, target: str, op: str, params: dict):
        if target == KERNEL_TARGET:
            return self._kernel_op(conn, op, params)
        if self.exposed is not None and target not in self.exposed:
            raise ForbiddenModule(f"module '{target}' is not exposed")
        return self.kernel.dispatch(target, op, params)

    def _kernel_op(self, conn: _Connection, op: str, params: dict):
        kernel = self.kernel
        if op == "ping":
            return {"pong": True}
        if op == "list_modules":
            modules = kernel.list_modules()
            if self.exposed is not None:
                modules = [m for m in modules if m["name"] in self.exposed]
            return modules
        if op == "module_state":
            name = self._exposed_name(params)
            return {"module": name, "state": kernel.state(name).value}
        if op == "activate":
            name = self._exposed_name(params)
            return {"module": name, "state": kernel.activate(name).value}
        if op == "deactivate":
            name = self._exposed_name(params)
            force = bool(params.get("force", False))
            return {"module": name, "state": kernel.deactivate(name, force).value}
        if op == "reset":
            name = self._exposed_name(params)
            return {"module": name, "state": kernel.reset(name).value}
        if op == "subscribe":
            topics = params.get("topics", [])
            if (not isinstance(topics, list)
                    or not all(isinstance(t, str) for t in topics)):
                raise LabError("'topics' must be a list of patterns")
            return {"subscribed": conn.set_patterns(topics)}
        if op == "unsubscribe":
            return {"subscribed": conn.set_patterns([])}
        if op == "get_log":
            limit = params.get("limit", 100)
            if not isinstance(limit, int) or isinstance(limit, bool) or limit < 1:
                raise LabError("'limit' must be a positive integer")
            return [{"timestamp": e.timestamp, "level": e.level,
                     "source": e.source, "message": e.message}
                    for e in kernel.recent_log(limit)]
        if op == "describe":
            return {"subprotocol": framing.WS_SUBPROTOCOL,
                    "max_frame": framing.MAX_FRAME}
        from ..errors import UnknownOperation
        raise UnknownOperation(f"no kernel operation '{op}'")

    def _exposed_name(self, params: dict) -> str:
        name = params.get("module")
        if not isinstance(name, str):
            raise LabError("'module' must be a string")
        if self.exposed is not None and name not in self.exposed:
            raise ForbiddenModule(f"module '{name}' is not exposed")
        return name
