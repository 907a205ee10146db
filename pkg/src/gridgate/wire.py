"""Client side of the line-oriented TCP protocols spoken by fabric sites.

Jobmanager requests, one per connection:
    PING                          -> PONG <site_id>
    SUBMIT <base64 json>          -> OK <contact>
    STATUS <contact>              -> STATE <JOBSTATE> [exit_code]
    CANCEL <contact>              -> STATE <JOBSTATE> [exit_code]
    JDL <base64 document>         -> OK <contact>
Fileserver requests:
    GET <path>                    -> OK <length>\\n<bytes>
    PUT <path> <length>\\n<bytes> -> OK <length>
    DEL <path>                    -> OK
Any request may be answered with "ERR <code> <message>", which is raised
here as the matching exception class.
"""

from __future__ import annotations

import base64
import json
import socket

from . import errors
from .model import JobState

MAX_LINE = 1 << 20


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    """host:port with an optional /service suffix (ignored for dialing)."""
    hostport = endpoint.split("/", 1)[0]
    host, sep, port = hostport.partition(":")
    if not sep or not host:
        raise errors.ValidationError(f"bad endpoint {endpoint!r}")
    try:
        return host, int(port)
    except ValueError:
        raise errors.ValidationError(f"bad endpoint port in {endpoint!r}") from None


class LineSocket:
    """Buffered reader over a socket: newline-framed lines followed by raw
    byte payloads, without losing buffered bytes between the two."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = bytearray()

    def read_line(self) -> str:
        while True:
            idx = self._buf.find(b"\n")
            if idx >= 0:
                line = self._buf[:idx]
                del self._buf[: idx + 1]
                return line.decode("utf-8")
            if len(self._buf) >= MAX_LINE:
                raise errors.MalformedRequest("line too long")
            chunk = self._sock.recv(65536)
            if not chunk:
                return self._buf.decode("utf-8")
            self._buf += chunk

    def read_exact(self, n: int) -> bytes:
        while len(self._buf) < n:
            chunk = self._sock.recv(min(65536, n - len(self._buf)))
            if not chunk:
                raise errors.MalformedRequest(f"short read: wanted {n}, got {len(self._buf)}")
            self._buf += chunk
        data = bytes(self._buf[:n])
        del self._buf[:n]
        return data


def read_line(sock: socket.socket | LineSocket) -> str:
    if isinstance(sock, LineSocket):
        return sock.read_line()
    return LineSocket(sock).read_line()


def read_exact(sock: socket.socket | LineSocket, n: int) -> bytes:
    if isinstance(sock, LineSocket):
        return sock.read_exact(n)
    return LineSocket(sock).read_exact(n)


def _raise_if_err(reply: str) -> str:
    if reply.startswith("ERR "):
        _, _, rest = reply.partition(" ")
        code, _, message = rest.partition(" ")
        raise errors.by_code(code, message or code)
    return reply


def _roundtrip(endpoint: str, line: str, timeout: float) -> str:
    host, port = parse_endpoint(endpoint)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(line.encode("utf-8") + b"\n")
        return _raise_if_err(LineSocket(sock).read_line())


def b64_json(obj: dict) -> str:
    return base64.b64encode(json.dumps(obj, sort_keys=True).encode("utf-8")).decode("ascii")


def unb64_json(text: str) -> dict:
    try:
        obj = json.loads(base64.b64decode(text.encode("ascii"), validate=True))
    except (ValueError, json.JSONDecodeError) as exc:
        raise errors.MalformedRequest(f"bad base64 json payload: {exc}") from None
    if not isinstance(obj, dict):
        raise errors.MalformedRequest("payload must be a JSON object")
    return obj


# --------------------------------------------------------------------------
# jobmanager client

def ping(endpoint: str, timeout: float = 5.0) -> str:
    """Returns the site id from the PONG reply; raises on anything else."""
    reply = _roundtrip(endpoint, "PING", timeout)
    tag, _, site_id = reply.partition(" ")
    if tag != "PONG" or not site_id:
        raise errors.MalformedRequest(f"unexpected ping reply {reply!r}")
    return site_id


def gram_submit(endpoint: str, wrapper_request: dict, timeout: float = 5.0) -> str:
    reply = _roundtrip(endpoint, f"SUBMIT {b64_json(wrapper_request)}", timeout)
    tag, _, contact = reply.partition(" ")
    if tag != "OK" or not contact:
        raise errors.MalformedRequest(f"unexpected submit reply {reply!r}")
    return contact


def _parse_state(reply: str) -> tuple[JobState, int | None]:
    parts = reply.split(" ")
    if len(parts) < 2 or parts[0] != "STATE":
        raise errors.MalformedRequest(f"unexpected state reply {reply!r}")
    state = JobState(parts[1])
    exit_code = int(parts[2]) if len(parts) > 2 else None
    return state, exit_code


def gram_status(endpoint: str, contact: str, timeout: float = 5.0) -> tuple[JobState, int | None]:
    return _parse_state(_roundtrip(endpoint, f"STATUS {contact}", timeout))


def gram_cancel(endpoint: str, contact: str, timeout: float = 5.0) -> tuple[JobState, int | None]:
    return _parse_state(_roundtrip(endpoint, f"CANCEL {contact}", timeout))


def jdl_submit(endpoint: str, document: str, timeout: float = 5.0) -> str:
    payload = base64.b64encode(document.encode("utf-8")).decode("ascii")
    reply = _roundtrip(endpoint, f"JDL {payload}", timeout)
    tag, _, contact = reply.partition(" ")
    if tag != "OK" or not contact:
        raise errors.MalformedRequest(f"unexpected jdl reply {reply!r}")
    return contact


# --------------------------------------------------------------------------
# fileserver client

def fs_get(endpoint: str, path: str, timeout: float = 5.0) -> bytes:
    host, port = parse_endpoint(endpoint)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(f"GET {path}\n".encode("utf-8"))
        line_sock = LineSocket(sock)
        reply = _raise_if_err(line_sock.read_line())
        tag, _, length = reply.partition(" ")
        if tag != "OK":
            raise errors.MalformedRequest(f"unexpected get reply {reply!r}")
        return line_sock.read_exact(int(length))


def fs_put(endpoint: str, path: str, data: bytes, timeout: float = 5.0) -> int:
    host, port = parse_endpoint(endpoint)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(f"PUT {path} {len(data)}\n".encode("utf-8") + data)
        reply = _raise_if_err(LineSocket(sock).read_line())
        tag, _, length = reply.partition(" ")
        if tag != "OK":
            raise errors.MalformedRequest(f"unexpected put reply {reply!r}")
        return int(length)


def fs_del(endpoint: str, path: str, timeout: float = 5.0) -> None:
    host, port = parse_endpoint(endpoint)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(f"DEL {path}\n".encode("utf-8"))
        _raise_if_err(LineSocket(sock).read_line())
