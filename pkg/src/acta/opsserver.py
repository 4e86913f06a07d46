"""Operator HTTP endpoint for a paced engine.

GET /state    -> JSON snapshot of the live session
GET /events   -> server-sent-event stream of log records (resumable via
                 Last-Event-ID)
POST /command -> one operator command per request, applied at the next event
                 boundary, acknowledged or rejected with the engine's reason

Built on the stdlib threaded HTTP server: the engine is a plain thread and
the command handshake is a synchronous queue, which needs no async stack.
"""

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

KEEPALIVE_S = 2.0


class OpsHub:
    """Fan-out of log records to SSE subscribers; attach to an Engine before
    calling run()."""

    def __init__(self, engine):
        self.engine = engine
        self._lock = threading.Lock()
        self._subscribers = []
        self._history = []
        engine_writer_hook = self._on_line
        self._engine_hook = engine_writer_hook
        engine.on_line = engine_writer_hook  # engine installs into its writer

    def _on_line(self, index, line):
        with self._lock:
            self._history.append(line)
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put((index, line))

    def subscribe(self, last_id=None):
        q = queue.Queue()
        with self._lock:
            backlog_start = 0 if last_id is None else last_id + 1
            backlog = [
                (i, line) for i, line in enumerate(self._history) if i >= backlog_start
            ]
            self._subscribers.append(q)
        return backlog, q

    def unsubscribe(self, q):
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)


def _sse_chunk(index, line):
    payload = json.dumps({"i": index, "line": line})
    return f"id: {index}\ndata: {payload}\n\n".encode()


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet server
        pass

    @property
    def hub(self):
        return self.server.hub

    def _json(self, status, obj):
        body = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        if self.path.split("?")[0] == "/state":
            self._json(200, self.hub.engine.snapshot())
        elif self.path.split("?")[0] == "/events":
            self._stream_events()
        else:
            self._json(404, {"error": "unknown path"})

    def _last_event_id(self):
        raw = self.headers.get("Last-Event-ID")
        if raw is None and "last_id=" in self.path:
            raw = self.path.split("last_id=")[1].split("&")[0]
        try:
            return int(raw) if raw is not None else None
        except ValueError:
            return None

    def _stream_events(self):
        backlog, q = self.hub.subscribe(self._last_event_id())
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        try:
            for index, line in backlog:
                self.wfile.write(_sse_chunk(index, line))
            self.wfile.flush()
            while not self.server.closing:
                try:
                    index, line = q.get(timeout=KEEPALIVE_S)
                    self.wfile.write(_sse_chunk(index, line))
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.hub.unsubscribe(q)

    def do_POST(self):
        if self.path.split("?")[0] != "/command":
            self._json(404, {"error": "unknown path"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            action = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._json(400, {"ok": False, "reason": "body must be JSON"})
            return
        ok, info = self.hub.engine.submit(action)
        if ok:
            self._json(200, {"ok": True, "info": info})
        else:
            self._json(409, {"ok": False, "reason": info})


class OpsServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, engine, port=0, host="127.0.0.1"):
        super().__init__((host, port), _Handler)
        self.hub = OpsHub(engine)
        self.closing = False

    @property
    def port(self):
        return self.server_address[1]

    def start_background(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def close(self):
        self.closing = True
        self.shutdown()
        self.server_close()


def serve_ops(engine, port=0, host="127.0.0.1"):
    """Start the ops endpoint for an engine; returns the running server."""
    server = OpsServer(engine, port=port, host=host)
    server.start_background()
    return server
