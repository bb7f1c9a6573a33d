"""Wire framing: length-prefixed JSON over TCP and RFC 6455 WebSocket
text frames carrying the identical JSON payloads.

A raw frame is a 4-byte big-endian unsigned length followed by that many
bytes of UTF-8 JSON encoding one object. The WebSocket side implements
just enough of RFC 6455 for single-frame text messages plus ping/pong and
close, which is all the protocol needs.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import socket
import struct

from ..errors import ConnectionLost, ProtocolError

MAX_FRAME = 16 * 1024 * 1024
WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
WS_SUBPROTOCOL = "labkit.v1"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def encode_payload(message: dict) -> bytes:
    """One JSON object as compact UTF-8; rejects NaN/Inf (not JSON)."""
    return json.dumps(message, ensure_ascii=False, allow_nan=False,
                      separators=(",", ":")).encode("utf-8")


def decode_payload(payload: bytes) -> dict:
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed frame payload: {exc}") from exc
    if not isinstance(message, dict):
        raise ProtocolError("frame payload must be a JSON object")
    return message


def encode_frame(message: dict) -> bytes:
    payload = encode_payload(message)
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds 16 MiB")
    return struct.pack(">I", len(payload)) + payload


def recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Exactly n bytes; None on clean EOF at a frame boundary (n bytes
    pending = 0 read); ConnectionLost on EOF mid-read."""
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(min(n - got, 65536))
        except OSError as exc:
            raise ConnectionLost(f"socket error: {exc}") from exc
        if not chunk:
            if got == 0:
                return None
            raise ConnectionLost("peer closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame_after_prefix(sock: socket.socket, prefix: bytes) -> dict:
    """Finish reading a raw frame whose first 4 bytes are already in hand."""
    (length,) = struct.unpack(">I", prefix)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds 16 MiB")
    payload = recv_exact(sock, length) if length else b""
    if payload is None:
        raise ConnectionLost("peer closed mid-frame")
    return decode_payload(payload)


def read_frame(sock: socket.socket) -> dict | None:
    """Next raw frame as a dict; None on clean EOF."""
    prefix = recv_exact(sock, 4)
    if prefix is None:
        return None
    return read_frame_after_prefix(sock, prefix)


def send_frame(sock: socket.socket, message: dict) -> None:
    try:
        sock.sendall(encode_frame(message))
    except OSError as exc:
        raise ConnectionLost(f"socket error: {exc}") from exc


# --- WebSocket ---------------------------------------------------------------

def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def read_http_request(sock: socket.socket, first: bytes = b"") -> tuple[str, dict]:
    """HTTP request line + headers (the WebSocket upgrade preamble)."""
    data = bytearray(first)
    while b"\r\n\r\n" not in data:
        if len(data) > 65536:
            raise ProtocolError("oversized HTTP preamble")
        chunk = sock.recv(4096)
        if not chunk:
            raise ConnectionLost("peer closed during HTTP preamble")
        data.extend(chunk)
    head, _, _ = bytes(data).partition(b"\r\n\r\n")
    lines = head.decode("latin-1").split("\r\n")
    headers = {}
    for line in lines[1:]:
        key, _, value = line.partition(":")
        headers[key.strip().lower()] = value.strip()
    return lines[0], headers


def ws_handshake_response(headers: dict) -> bytes:
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise ProtocolError("not a WebSocket upgrade request")
    offered = [p.strip() for p in
               headers.get("sec-websocket-protocol", "").split(",") if p.strip()]
    lines = [
        "HTTP/1.1 101 Switching Protocols",
        "Upgrade: websocket",
        "Connection: Upgrade",
        f"Sec-WebSocket-Accept: {ws_accept_key(key)}",
    ]
    if WS_SUBPROTOCOL in offered:
        lines.append(f"Sec-WebSocket-Protocol: {WS_SUBPROTOCOL}")
    return ("\r\n".join(lines) + "\r\n\r\n").encode("ascii")


def ws_encode(payload: bytes, opcode: int = OP_TEXT, mask: bool = False) -> bytes:
    """Single unfragmented frame; clients must mask, servers must not."""
    head = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head.append(mask_bit | n)
    elif n < 65536:
        head.append(mask_bit | 126)
        head.extend(struct.pack(">H", n))
    else:
        head.append(mask_bit | 127)
        head.extend(struct.pack(">Q", n))
    if mask:
        key = os.urandom(4)
        head.extend(key)
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(head) + payload


def ws_read_frame(sock: socket.socket) -> tuple[int, bytes] | None:
    """(opcode, payload) of the next frame; None on clean EOF."""
    head = recv_exact(sock, 2)
    if head is None:
        return None
    fin = head[0] & 0x80
    opcode = head[0] & 0x0F
    if not fin:
        raise ProtocolError("fragmented WebSocket frames are not supported")
    masked = head[1] & 0x80
    length = head[1] & 0x7F
    if length == 126:
        ext = recv_exact(sock, 2)
        if ext is None:
            raise ConnectionLost("peer closed mid-frame")
        (length,) = struct.unpack(">H", ext)
    elif length == 127:
        ext = recv_exact(sock, 8)
        if ext is None:
            raise ConnectionLost("peer closed mid-frame")
        (length,) = struct.unpack(">Q", ext)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds 16 MiB")
    key = recv_exact(sock, 4) if masked else None
    payload = recv_exact(sock, length) if length else b""
    if payload is None or (masked and key is None):
        raise ConnectionLost("peer closed mid-frame")
    if masked:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, payload
