"""Local HTTP service for the review UI.

Endpoints (JSON):

* ``GET  /api/session`` — labels, sample size, progress
* ``GET  /api/next``    — next unreviewed annotation with chunk context (410 when done)
* ``POST /api/label``   — ``{"label": ...}``; appends to the eval store (400 on bad label)
* ``POST /api/undo``    — tombstones the latest record
* ``GET  /api/report``  — quality report (409 until the sample is complete)

Anything else is served from the static UI directory when one is configured;
otherwise a plain placeholder page is returned.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .review import ReviewError, ReviewSession

log = logging.getLogger(__name__)

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>Annotation review</title></head>
<body>
<h1>Annotation review service</h1>
<p>The review API is running. No UI assets are installed; point the server
at a built frontend with <code>--ui &lt;dir&gt;</code>, or drive the JSON API
directly (see <code>/api/session</code>).</p>
</body></html>
"""


class ReviewServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, session: ReviewSession, ui_dir: Path | None):
        super().__init__(address, _Handler)
        self.session = session
        self.ui_dir = ui_dir
        self.mutation_lock = threading.Lock()


class _Handler(BaseHTTPRequestHandler):
    server: ReviewServer

    def log_message(self, fmt, *args):  # route access logs through logging
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return {}
        return doc if isinstance(doc, dict) else {}

    def do_GET(self):
        session = self.server.session
        path = self.path.split("?", 1)[0]
        if path == "/api/session":
            self._send_json(
                200,
                {
                    "labels": list(session.labels),
                    "sample_size": session.sample_size,
                    "progress": session.progress,
                    "done": session.done,
                },
            )
        elif path == "/api/next":
            item = session.current_item()
            if item is None:
                self._send_json(410, {"error": "review complete"})
            else:
                self._send_json(200, item)
        elif path == "/api/report":
            try:
                report = session.report()
            except ReviewError as exc:
                self._send_json(409, {"error": str(exc)})
                return
            self._send_json(200, report.to_dict())
        else:
            self._serve_static(path)

    def do_POST(self):
        session = self.server.session
        path = self.path.split("?", 1)[0]
        if path == "/api/label":
            body = self._read_body()
            label = body.get("label")
            with self.server.mutation_lock:
                try:
                    progress = session.submit_label(label)
                except ReviewError as exc:
                    self._send_json(400, {"error": str(exc)})
                    return
            self._send_json(
                200,
                {"progress": progress, "sample_size": session.sample_size, "done": session.done},
            )
        elif path == "/api/undo":
            with self.server.mutation_lock:
                try:
                    progress = session.undo()
                except ReviewError as exc:
                    self._send_json(409, {"error": str(exc)})
                    return
            self._send_json(
                200,
                {"progress": progress, "sample_size": session.sample_size, "done": session.done},
            )
        else:
            self._send_json(404, {"error": "unknown endpoint"})

    def _serve_static(self, path: str) -> None:
        ui_dir = self.server.ui_dir
        if path in ("", "/"):
            path = "/index.html"
        if ui_dir is not None:
            target = (ui_dir / path.lstrip("/")).resolve()
            if (
                target.is_file()
                and ui_dir.resolve() in target.parents
            ):
                content = target.read_bytes()
                ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(content)))
                self.end_headers()
                self.wfile.write(content)
                return
        if path == "/index.html":
            body = _PLACEHOLDER_PAGE.encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        self._send_json(404, {"error": "not found"})


def serve_review(
    session: ReviewSession,
    bind_address: tuple[str, int] = ("127.0.0.1", 8174),
    ui_dir: str | Path | None = None,
) -> ReviewServer:
    """Create the HTTP server (callers run ``serve_forever`` or a thread)."""
    ui = Path(ui_dir) if ui_dir is not None else None
    if ui is not None and not ui.is_dir():
        log.warning("UI directory %s does not exist; serving placeholder page", ui)
        ui = None
    server = ReviewServer(bind_address, session, ui)
    log.info("review service listening on http://%s:%d/", *server.server_address)
    return server
