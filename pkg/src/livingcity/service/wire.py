"""Line-delimited JSON over TCP.

Request (one line)::

    {"v": 1, "id": 7, "verb": "start_build", "session": "<token>",
     "payload": {"building_id": "FA15"}, "client_timestamp": 1700000000.5}

Response (one line)::

    {"v": 1, "id": 7, "ok": true, "seq": 42, "tick": 3600, "result": {...}}
    {"v": 1, "id": 7, "ok": false, "error": "CategoryBusy", "message": "..."}

``id`` is echoed back untouched. A request with a different ``v`` is refused.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading

from ..errors import LivingCityError, MalformedCommand
from .service import Service

WIRE_VERSION = 1
MAX_LINE = 64 * 1024

log = logging.getLogger(__name__)


def handle_line(service: Service, line: bytes | str) -> dict:
    req_id = None
    try:
        try:
            req = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedCommand(f"not JSON: {exc}") from None
        if not isinstance(req, dict):
            raise MalformedCommand("request must be an object")
        req_id = req.get("id")
        if req.get("v", WIRE_VERSION) != WIRE_VERSION:
            raise MalformedCommand(f"unsupported wire version {req.get('v')!r}")
        resp = service.submit(req)
        return {"v": WIRE_VERSION, "id": req_id, "ok": True, **resp}
    except LivingCityError as exc:
        return {"v": WIRE_VERSION, "id": req_id, "ok": False, "error": exc.code, "message": str(exc)}
    except Exception as exc:  # noqa: BLE001 - never drop the connection on a server bug
        log.exception("internal error")
        return {"v": WIRE_VERSION, "id": req_id, "ok": False, "error": "InternalError", "message": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service = self.server.service
        while True:
            line = self.rfile.readline(MAX_LINE + 1)
            if not line:
                return
            if len(line) > MAX_LINE:
                resp = {"v": WIRE_VERSION, "id": None, "ok": False, "error": "MalformedCommand", "message": "line too long"}
                self.wfile.write((json.dumps(resp) + "\n").encode())
                return
            if not line.strip():
                continue
            resp = handle_line(service, line)
            self.wfile.write((json.dumps(resp, separators=(",", ":")) + "\n").encode())


class WireServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, service: Service, address=("127.0.0.1", 0)):
        super().__init__(address, _Handler)
        self.service = service

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="wire-server", daemon=True)
        t.start()
        return t


def parse_listen(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return (host or "127.0.0.1", int(port))


class WireClient:
    """Blocking client, one request in flight at a time."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")
        self.session: str | None = None
        self._next_id = 0

    def call(self, verb: str, payload: dict | None = None, session: str | None = None, **extra) -> dict:
        self._next_id += 1
        req = {"v": WIRE_VERSION, "id": self._next_id, "verb": verb, "payload": payload or {}, **extra}
        if session or self.session:
            req["session"] = session or self.session
        self.sock.sendall((json.dumps(req) + "\n").encode())
        resp = json.loads(self.rfile.readline())
        if resp.get("ok") and "session" in resp:
            self.session = resp["session"]
        return resp

    def send_raw(self, line: bytes) -> dict:
        self.sock.sendall(line)
        return json.loads(self.rfile.readline())

    def close(self) -> None:
        self.rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
