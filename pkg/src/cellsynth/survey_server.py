"""HTTP service exposing the survey to browser clients.

Endpoints (JSON bodies unless noted):

    GET  /api/session?seed=N   -> {"session_id", "image_ids"}  (no truth)
    GET  /api/image/{id}       -> 8-bit grayscale PGM bytes
    POST /api/response         -> {"ok": true} or field-level errors
    GET  /api/report           -> aggregated SurveyReport
    GET  /api/report.csv       -> per-image CSV rows

Image ids are salted digests of the underlying file references, so a
client payload never betrays which pool an image came from.  CORS
headers are emitted on every response so a separately served frontend
can talk to the API during development.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import SizeError
from .survey import (ResponseRejected, ResponseStore, SurveyResponse,
                     create_session, report, report_csv)

_ID_SALT = "cellsynth-survey"


def opaque_id(ref: str) -> str:
    """Stable, non-reversible id for an image reference."""
    return "im" + hashlib.sha256(f"{_ID_SALT}:{ref}".encode()).hexdigest()[:12]


class SurveyService:
    """Bundles image pools, sessions, and the response store.

    `synthetic_paths` / `real_paths` are PGM file paths; each is
    registered under an opaque id.  Sessions are cached per seed so
    every participant asking for seed N sees the identical ordering.
    """

    def __init__(self, synthetic_paths, real_paths, store: ResponseStore | None = None):
        self.store = store if store is not None else ResponseStore()
        self._paths: dict = {}
        self.synthetic_ids = []
        self.real_ids = []
        for p in synthetic_paths:
            i = opaque_id(str(p))
            self._paths[i] = str(p)
            self.synthetic_ids.append(i)
        for p in real_paths:
            i = opaque_id(str(p))
            self._paths[i] = str(p)
            self.real_ids.append(i)
        self._sessions: dict = {}
        self._lock = threading.Lock()

    def session(self, seed: int):
        with self._lock:
            if seed not in self._sessions:
                self._sessions[seed] = create_session(
                    self.synthetic_ids, self.real_ids, seed)
            return self._sessions[seed]

    def session_by_id(self, session_id: str):
        with self._lock:
            for s in self._sessions.values():
                if s.session_id == session_id:
                    return s
        return None

    def all_sessions(self) -> list:
        with self._lock:
            return list(self._sessions.values())

    def image_bytes(self, image_id: str) -> bytes | None:
        path = self._paths.get(image_id)
        if path is None:
            return None
        with open(path, "rb") as fh:
            return fh.read()


class _Handler(BaseHTTPRequestHandler):
    service: SurveyService  # installed by make_handler

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, payload) -> None:
        self._send(status, json.dumps(payload).encode(), "application/json")

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/api/session":
            qs = parse_qs(url.query)
            try:
                seed = int(qs.get("seed", ["0"])[0])
            except ValueError:
                self._send_json(400, {"ok": False, "errors": {"seed": "must be an integer"}})
                return
            try:
                session = self.service.session(seed)
            except SizeError as e:
                self._send_json(409, {"ok": False, "errors": {"pool": str(e)}})
                return
            self._send_json(200, session.client_view())
        elif url.path.startswith("/api/image/"):
            image_id = url.path[len("/api/image/"):]
            data = self.service.image_bytes(image_id)
            if data is None:
                self._send_json(404, {"ok": False, "errors": {"image_id": "unknown image"}})
            else:
                self._send(200, data, "image/x-portable-graymap")
        elif url.path == "/api/report":
            try:
                rep = report(self.service.store, self.service.all_sessions())
            except SizeError as e:
                self._send_json(409, {"ok": False, "errors": {"responses": str(e)}})
                return
            self._send_json(200, rep.to_dict())
        elif url.path == "/api/report.csv":
            try:
                rep = report(self.service.store, self.service.all_sessions())
            except SizeError as e:
                self._send_json(409, {"ok": False, "errors": {"responses": str(e)}})
                return
            self._send(200, report_csv(rep).encode(), "text/csv")
        else:
            self._send_json(404, {"ok": False, "errors": {"path": "unknown endpoint"}})

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/response":
            self._send_json(404, {"ok": False, "errors": {"path": "unknown endpoint"}})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(payload, dict):
                raise ValueError("body must be a JSON object")
        except (ValueError, json.JSONDecodeError):
            self._send_json(400, {"ok": False, "errors": {"body": "invalid JSON"}})
            return

        session = None
        session_id = payload.get("session_id")
        if session_id is not None:
            session = self.service.session_by_id(str(session_id))
            if session is None:
                self._send_json(400, {"ok": False,
                                      "errors": {"session_id": "unknown session"}})
                return
        try:
            confidence = payload.get("confidence")
            resp = SurveyResponse(
                participant_id=str(payload.get("participant_id", "")),
                image_id=str(payload.get("image_id", "")),
                guess=str(payload.get("guess", "")),
                confidence=confidence if isinstance(confidence, int) else -1,
                explanation=str(payload.get("explanation", "")),
                timestamp=float(payload.get("timestamp", time.time())),
            )
        except (TypeError, ValueError):
            self._send_json(400, {"ok": False, "errors": {"body": "malformed fields"}})
            return
        try:
            self.service.store.record(resp, session)
        except ResponseRejected as e:
            self._send_json(400, {"ok": False, "errors": e.errors})
            return
        self._send_json(200, {"ok": True, "participant_id": resp.participant_id,
                              "image_id": resp.image_id})


def make_handler(service: SurveyService):
    return type("SurveyHandler", (_Handler,), {"service": service})


def make_server(service: SurveyService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """Bind a threading HTTP server; port 0 picks a free port."""
    return ThreadingHTTPServer((host, port), make_handler(service))


def serve_forever(service: SurveyService, host: str, port: int) -> None:
    server = make_server(service, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
