"""Per-site fileserver speaking the GET/PUT/DEL line protocol.

The server is rooted at the site's base directory; URI paths map below that
root and escapes are rejected. It also answers PING so availability probes
can check it like any other contact endpoint. Transfers are logged (paths
only) so tests can count them.
"""

from __future__ import annotations

import shutil
import socketserver
import threading
from pathlib import Path

from .. import errors, wire


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True
    owner: "FileServer"


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        fs: FileServer = self.server.owner  # type: ignore[attr-defined]
        self._line_sock = wire.LineSocket(self.request)
        try:
            self._dispatch(fs, self._line_sock.read_line())
        except errors.GridGateError as exc:
            self._err(exc)
        except OSError as exc:
            self._err(errors.GridGateError(f"io failure: {exc}"))

    def _send(self, text: str) -> None:
        self.request.sendall(text.encode("utf-8"))

    def _err(self, exc: Exception) -> None:
        message = str(exc).replace("\n", " ")
        try:
            self._send(f"ERR {errors.code_of(exc)} {message}\n")
        except OSError:
            pass

    def _dispatch(self, fs: "FileServer", line: str) -> None:
        verb, _, rest = line.partition(" ")
        if verb == "PING":
            self._send(f"PONG {fs.site_id}\n")
        elif verb == "GET":
            data = fs.read_file(rest.strip())
            self._send(f"OK {len(data)}\n")
            self.request.sendall(data)
        elif verb == "PUT":
            path_text, _, length_text = rest.rpartition(" ")
            try:
                length = int(length_text)
            except ValueError:
                raise errors.MalformedRequest(f"bad PUT length {length_text!r}") from None
            data = self._line_sock.read_exact(length)
            fs.write_file(path_text.strip(), data)
            self._send(f"OK {length}\n")
        elif verb == "DEL":
            fs.delete(rest.strip())
            self._send("OK\n")
        else:
            raise errors.MalformedRequest(f"unknown verb {verb!r}")


class FileServer:
    def __init__(self, site_id: str, root: str | Path, listen: str = "127.0.0.1:0"):
        self.site_id = site_id
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        host, port = wire.parse_endpoint(listen)
        try:
            self._server = _TcpServer((host, port), _Handler)
        except OSError as exc:
            raise errors.BindError(f"cannot bind fileserver on {listen}: {exc}") from None
        self._server.owner = self
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=f"fs-{site_id}", daemon=True
        )
        self._lock = threading.Lock()
        self.put_log: list[str] = []
        self.get_log: list[str] = []

    def start(self) -> "FileServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        # shutdown() blocks forever unless serve_forever is actually running
        if self._thread.is_alive():
            self._server.shutdown()
        self._server.server_close()

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def _resolve(self, uri_path: str) -> Path:
        if not uri_path.startswith("/"):
            raise errors.MalformedRequest(f"path must be absolute: {uri_path!r}")
        target = (self.root / uri_path.lstrip("/")).resolve()
        if target != self.root and self.root not in target.parents:
            raise errors.MalformedRequest(f"path escapes the served root: {uri_path!r}")
        return target

    def read_file(self, uri_path: str) -> bytes:
        target = self._resolve(uri_path)
        if not target.is_file():
            raise errors.NotFound(f"no such file {uri_path}")
        with self._lock:
            self.get_log.append(uri_path)
        return target.read_bytes()

    def write_file(self, uri_path: str, data: bytes) -> None:
        target = self._resolve(uri_path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        with self._lock:
            self.put_log.append(uri_path)

    def delete(self, uri_path: str) -> None:
        # Idempotent; directories go recursively (failed-job results cleanup).
        target = self._resolve(uri_path)
        if target.is_dir():
            shutil.rmtree(target, ignore_errors=True)
        elif target.exists():
            target.unlink(missing_ok=True)
