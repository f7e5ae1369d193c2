"""Tiny TCP key-value server speaking the store wire protocol.

Grammar (UTF-8, newline-framed headers, length-prefixed values):

    GET <key>\n                                    -> VALUE <version> <len>\n<bytes>\n
                                                      | MISSING\n
    PUT <key> <expected_version|-> <ttl_s|-> <len>\n<bytes>\n
                                                   -> OK <new_version>\n
                                                      | CONFLICT <current_version>\n
    PING\n                                         -> PONG\n

Versions increase monotonically per key; PUT with an expected version is an
atomic compare-and-set. TTL expiry is lazy (checked on access).
"""

from __future__ import annotations

import argparse
import socketserver
import threading
import time


class _Entry:
    __slots__ = ("value", "version", "expires_at")

    def __init__(self, value: bytes, version: int, expires_at: float | None):
        self.value = value
        self.version = version
        self.expires_at = expires_at


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: KVServer = self.server.owner  # type: ignore[attr-defined]
        while True:
            line = self.rfile.readline()
            if not line:
                return
            try:
                reply = self._dispatch(server, line.decode("utf-8").strip())
            except Exception:
                reply = b"ERROR\n"
            self.wfile.write(reply)
            self.wfile.flush()

    def _dispatch(self, server: "KVServer", line: str) -> bytes:
        parts = line.split(" ")
        command = parts[0].upper() if parts else ""
        if command == "PING":
            return b"PONG\n"
        if command == "GET" and len(parts) == 2:
            record = server.get(parts[1])
            if record is None:
                return b"MISSING\n"
            value, version = record
            return f"VALUE {version} {len(value)}\n".encode() + value + b"\n"
        if command == "PUT" and len(parts) == 5:
            key, expected_raw, ttl_raw, length_raw = parts[1:]
            length = int(length_raw)
            value = self.rfile.read(length)
            self.rfile.read(1)  # trailing newline
            expected = None if expected_raw == "-" else int(expected_raw)
            ttl = None if ttl_raw == "-" else int(ttl_raw)
            ok, version = server.put(key, value, expected, ttl)
            if ok:
                return f"OK {version}\n".encode()
            return f"CONFLICT {version}\n".encode()
        return b"ERROR\n"


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class KVServer:
    """In-process server instance; start() binds and serves on a daemon thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._host = host
        self._port = port
        self._lock = threading.Lock()
        self._data: dict[str, _Entry] = {}
        self._server: _TCPServer | None = None
        self._thread: threading.Thread | None = None

    # storage ------------------------------------------------------------

    def _live_entry(self, key: str) -> _Entry | None:
        entry = self._data.get(key)
        if entry is None:
            return None
        if entry.expires_at is not None and time.monotonic() >= entry.expires_at:
            del self._data[key]
            return None
        return entry

    def get(self, key: str) -> tuple[bytes, int] | None:
        with self._lock:
            entry = self._live_entry(key)
            if entry is None:
                return None
            return entry.value, entry.version

    def put(self, key: str, value: bytes, expected_version: int | None,
            ttl_s: int | None) -> tuple[bool, int]:
        with self._lock:
            entry = self._live_entry(key)
            current_version = entry.version if entry else 0
            if expected_version is not None and expected_version != current_version:
                return False, current_version
            version = current_version + 1
            expires_at = None if ttl_s is None else time.monotonic() + ttl_s
            self._data[key] = _Entry(value, version, expires_at)
            return True, version

    # lifecycle ------------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("server not started")
        return self._server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"kv://{host}:{port}"

    def start(self) -> "KVServer":
        server = _TCPServer((self._host, self._port), _Handler)
        server.owner = self  # type: ignore[attr-defined]
        self._server = server
        self._thread = threading.Thread(target=server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run the key-value store server.")
    parser.add_argument("--listen", default="127.0.0.1:7070", help="host:port to bind")
    args = parser.parse_args(argv)
    host, _, port = args.listen.partition(":")
    server = KVServer(host, int(port)).start()
    print(f"kv store listening on {server.url}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
