"""Embedded HTTP facade over a relabel session for the annotator UI.

JSON over HTTP/1.1 on loopback, no authentication: one annotator, one
session.  Task geometry is sent pre-projected (boundary polylines in image
coordinates plus BEV corner lists) so the UI needs no geometry code.

Routes:
  GET  /api/health                  -> 200 "ok"
  GET  /api/tasks                   -> task manifest
  GET  /api/tasks/{id}              -> full task view
  POST /api/tasks/{id}/selection    -> 204; body {"proposal_id": ...}
  GET  /                            -> static UI assets
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .geometry import LayoutAnnotation, annotation_to_boundary
from .relabel import RelabelError, RelabelSession, SelectionConflict

logger = logging.getLogger(__name__)

DEFAULT_UI_DIR = os.path.join(os.path.dirname(__file__), "webui")


def _boundary_payload(ann: LayoutAnnotation, frame) -> dict:
    bc = annotation_to_boundary(ann, frame)
    return {
        "floor_v": [float(v) for v in bc.floor_v],
        "ceil_v": [float(v) for v in bc.ceil_v],
    }


def task_summary(task) -> dict:
    return {
        "task_id": task.task_id,
        "status": task.status,
        "num_proposals": len(task.proposals),
        "selected_proposal_id": task.selection,
    }


def task_view(session: RelabelSession, task) -> dict:
    frame = session.frame
    image_paths = getattr(session, "_image_paths", {})
    return {
        "task_id": task.task_id,
        "status": task.status,
        "panorama_url": image_paths.get(task.task_id),
        "frame": {
            "width": frame.width,
            "height": frame.height,
            "num_columns": frame.num_columns,
            "camera_height": frame.camera_height,
        },
        "source": {
            "boundary": _boundary_payload(task.annotation, frame),
            "bev": [[float(x), float(z)] for x, z in task.annotation.corners],
            "label_kind": task.annotation.label_kind,
            "room_height": task.annotation.room_height,
        },
        "occluded_intervals": [list(iv) for iv in task.analysis.intervals],
        "proposals": [
            {
                "id": p.id,
                "kind": p.kind,
                "interval": list(p.interval),
                "boundary": _boundary_payload(
                    LayoutAnnotation(corners=p.corners,
                                     room_height=task.annotation.room_height,
                                     label_kind="enclosed", id=p.id),
                    frame,
                ),
                "bev": [[float(x), float(z)] for x, z in p.corners],
            }
            for p in task.proposals
        ],
        "selected_proposal_id": task.selection,
    }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "bilayout"

    # quiet by default; the CLI enables logging explicitly
    def log_message(self, fmt, *args):
        logger.debug("%s " + fmt, self.address_string(), *args)

    @property
    def session(self) -> RelabelSession:
        return self.server.session

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/api/health":
            body = b"ok"
            self.send_response(HTTPStatus.OK)
            self.send_header("Content-Type", "text/plain; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        if path == "/api/tasks":
            tasks = [task_summary(self.session.tasks[tid]) for tid in self.session.order]
            self._send_json(HTTPStatus.OK, {"tasks": tasks})
            return
        if path.startswith("/api/tasks/"):
            task_id = path[len("/api/tasks/"):]
            task = self.session.tasks.get(task_id)
            if task is None:
                self._send_error_json(HTTPStatus.NOT_FOUND, f"unknown task {task_id!r}")
                return
            self._send_json(HTTPStatus.OK, task_view(self.session, task))
            return
        if path.startswith("/api/"):
            self._send_error_json(HTTPStatus.NOT_FOUND, "unknown endpoint")
            return
        self._serve_static(path)

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        if path.startswith("/api/tasks/") and path.endswith("/selection"):
            task_id = path[len("/api/tasks/"):-len("/selection")]
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                self._send_error_json(HTTPStatus.BAD_REQUEST, "body must be JSON")
                return
            if not isinstance(body, dict) or not isinstance(body.get("proposal_id"), str):
                self._send_error_json(HTTPStatus.BAD_REQUEST,
                                      'body must be {"proposal_id": "..."}')
                return
            if task_id not in self.session.tasks:
                self._send_error_json(HTTPStatus.NOT_FOUND, f"unknown task {task_id!r}")
                return
            try:
                self.session.apply_selection(task_id, body["proposal_id"])
            except SelectionConflict as exc:
                self._send_error_json(HTTPStatus.CONFLICT, str(exc))
                return
            except RelabelError as exc:
                # unknown proposal, or a task that has none to offer
                self._send_error_json(HTTPStatus.NOT_FOUND, str(exc))
                return
            self.send_response(HTTPStatus.NO_CONTENT)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        self._send_error_json(HTTPStatus.NOT_FOUND, "unknown endpoint")

    def _serve_static(self, path: str):
        ui_dir = self.server.ui_dir
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(ui_dir, rel))
        if not full.startswith(os.path.realpath(ui_dir) + os.sep) \
                and full != os.path.realpath(ui_dir):
            self._send_error_json(HTTPStatus.NOT_FOUND, "not found")
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._send_error_json(HTTPStatus.NOT_FOUND, "not found")
            return
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(HTTPStatus.OK)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class RelabelServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, session: RelabelSession, address=("127.0.0.1", 0),
                 ui_dir: str | None = None):
        super().__init__(address, _Handler)
        self.session = session
        self.ui_dir = ui_dir or DEFAULT_UI_DIR


def serve(session_dir, address=("127.0.0.1", 0), ui_dir: str | None = None,
          background: bool = False) -> RelabelServer:
    """Serve a relabel session over HTTP.  With background=True the server
    runs in a daemon thread and the call returns immediately (tests use
    this); otherwise it blocks until interrupted."""
    session = RelabelSession.load(session_dir)
    server = RelabelServer(session, address, ui_dir)
    if background:
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        return server
    try:
        logger.info("serving on http://%s:%d/", *server.server_address)
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return server
