"""Small HTTP layer: request/response values, a router, and a threaded server.

Applications are plain objects with a ``handle(Request) -> Response`` method,
so they can be exercised in-process (no sockets) or served over HTTP/1.1 via
:func:`make_server`. Handlers raise :class:`ApiError` for client-visible
failures; every error body is ``{"code": ..., "message": ...}``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, urlsplit

MAX_BODY_BYTES = 64 * 1024 * 1024 + 4096  # container cap plus envelope slack


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail or {}


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)  # lower-case keys
    body: bytes = b""

    def header(self, name: str, default: str = "") -> str:
        return self.headers.get(name.lower(), default)

    def json(self) -> dict:
        try:
            doc = json.loads(self.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ApiError(400, "BAD_REQUEST", "request body is not valid JSON") from None
        if not isinstance(doc, dict):
            raise ApiError(400, "BAD_REQUEST", "request body must be a JSON object")
        return doc


@dataclass
class Response:
    status: int
    headers: dict[str, str]
    body: bytes


def json_response(status: int, payload) -> Response:
    body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    return Response(status, {"Content-Type": "application/json; charset=utf-8"}, body)


def error_response(status: int, code: str, message: str, detail: dict | None = None) -> Response:
    payload = {"code": code, "message": message}
    if detail:
        payload.update(detail)
    return json_response(status, payload)


class Router:
    """Literal/parameter path matching: '/api/v1/projects/{id}/package'."""

    def __init__(self):
        self._routes: list[tuple[str, list[str], object]] = []

    def add(self, method: str, pattern: str, handler) -> None:
        self._routes.append((method, pattern.strip("/").split("/"), handler))

    def dispatch(self, request: Request) -> Response:
        segments = request.path.strip("/").split("/") if request.path.strip("/") else []
        path_known = False
        for method, pattern, handler in self._routes:
            params = _match(pattern, segments)
            if params is None:
                continue
            path_known = True
            if method != request.method:
                continue
            return handler(request, **params)
        if path_known:
            raise ApiError(405, "METHOD_NOT_ALLOWED", f"{request.method} not allowed here")
        raise ApiError(404, "NOT_FOUND", "no such resource")


def _match(pattern: list[str], segments: list[str]) -> dict[str, str] | None:
    if len(pattern) != len(segments):
        return None
    params: dict[str, str] = {}
    for want, got in zip(pattern, segments):
        if want.startswith("{") and want.endswith("}"):
            params[want[1:-1]] = got
        elif want != got:
            return None
    return params


class _AppHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "psytest/0.1"

    def _run(self) -> None:
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            length = 0
        if length > MAX_BODY_BYTES:
            self._send(error_response(413, "PAYLOAD_TOO_LARGE", "request body too large"), close=True)
            return
        body = self.rfile.read(length) if length > 0 else b""
        split = urlsplit(self.path)
        request = Request(
            method=self.command,
            path=split.path,
            query=dict(parse_qsl(split.query)),
            headers={k.lower(): v for k, v in self.headers.items()},
            body=body,
        )
        try:
            response = self.server.app.handle(request)  # type: ignore[attr-defined]
        except Exception:  # handler contract: never leaks internals
            response = error_response(500, "INTERNAL", "internal error")
        self._send(response)

    def _send(self, response: Response, close: bool = False) -> None:
        self.send_response(response.status)
        for name, value in response.headers.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(response.body)))
        if close:
            self.send_header("Connection", "close")
            self.close_connection = True
        self.end_headers()
        self.wfile.write(response.body)

    do_GET = _run
    do_POST = _run
    do_PUT = _run
    do_DELETE = _run
    do_OPTIONS = _run

    def log_message(self, format: str, *args) -> None:  # keep stdio clean
        pass


def make_server(app, host: str, port: int) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _AppHandler)
    server.app = app  # type: ignore[attr-defined]
    server.daemon_threads = True
    return server


def serve_in_thread(app, host: str, port: int) -> tuple[ThreadingHTTPServer, threading.Thread]:
    server = make_server(app, host, port)
    thread = threading.Thread(target=server.serve_forever, name=f"psytest-http-{port}", daemon=True)
    thread.start()
    return server, thread
