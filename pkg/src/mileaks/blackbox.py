"""Query-counted black-box access to a trained model, in-process or over HTTP.

Wire protocol (HTTP/1.1, JSON bodies):

    POST /predict  {"features": [...]}  -> 200 {"posteriors": [...], "query_id": n}
                                         -> 400 {"error": "..."}
    GET  /stats                         -> 200 {"queries": n, "input_dim": d, "num_classes": c}

Floats are written with Python's shortest round-trip repr (at most 17
significant digits), so a remote caller decodes the exact same doubles the
in-process box returns.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .core import PosteriorVector, ValidationError

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """The remote black box could not be reached or answered garbage."""


class BlackBoxModel:
    """Opaque prediction endpoint over any model with ``predict_proba``.

    Only posteriors, the input/output sizes and the query counter are
    observable. A failed query (bad dimensionality, non-finite input) does
    not count.
    """

    __slots__ = ("_call", "_count", "_lock", "input_dim", "num_classes")

    def __init__(self, model):
        predict = model.predict_proba
        self._call = lambda X: predict(X)
        self._count = 0
        self._lock = threading.Lock()
        self.input_dim = int(model.input_dim)
        self.num_classes = int(model.num_classes)

    def _check(self, features) -> np.ndarray:
        try:
            x = np.asarray(features, dtype=np.float64)
        except (TypeError, ValueError):
            raise ValidationError("features must be a list of numbers") from None
        if x.shape != (self.input_dim,):
            raise ValidationError(f"expected {self.input_dim} features, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("features must be finite")
        return x

    def query(self, features) -> PosteriorVector:
        x = self._check(features)
        post = PosteriorVector(self._call(x[None, :])[0])
        with self._lock:
            self._count += 1
        return post

    def query_with_id(self, features) -> tuple[PosteriorVector, int]:
        x = self._check(features)
        post = PosteriorVector(self._call(x[None, :])[0])
        with self._lock:
            self._count += 1
            qid = self._count
        return post, qid

    @property
    def query_count(self) -> int:
        return self._count


def query(bb, features) -> PosteriorVector:
    return bb.query(features)


def query_count(bb) -> int:
    return bb.query_count


def query_many(bb, X) -> np.ndarray:
    """One counted query per row, returned stacked; rows go through the single-point path."""
    return np.stack([bb.query(x).probs for x in np.asarray(X, dtype=np.float64)])


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    box: BlackBoxModel

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/stats":
            self._send(
                200,
                {
                    "queries": self.box.query_count,
                    "input_dim": self.box.input_dim,
                    "num_classes": self.box.num_classes,
                },
            )
        else:
            self._send(404, {"error": f"no such endpoint {self.path}"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        if self.path != "/predict":
            self._send(404, {"error": f"no such endpoint {self.path}"})
            return
        try:
            body = json.loads(raw)
            if not isinstance(body, dict) or "features" not in body:
                raise ValidationError("body must be an object with a 'features' array")
            feats = body["features"]
            if not isinstance(feats, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in feats
            ):
                raise ValidationError("'features' must be an array of numbers")
            post, qid = self.box.query_with_id(feats)
        except (ValueError, ValidationError) as exc:
            self._send(400, {"error": str(exc)})
            return
        self._send(200, {"posteriors": post.probs.tolist(), "query_id": qid})

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


def _parse_addr(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValidationError(f"address must be host:port, got {address!r}")
    return host, int(port)


class BlackBoxServer:
    """Serves one BlackBoxModel; ``address`` reflects the bound port (use port 0 for any)."""

    def __init__(self, bb: BlackBoxModel, address: str = "127.0.0.1:0"):
        handler = type("Handler", (_Handler,), {"box": bb})
        self._httpd = ThreadingHTTPServer(_parse_addr(address), handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "BlackBoxServer":
        """Serve from a background thread; a no-op if already started."""
        if self._thread is not None:
            return self
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(bb: BlackBoxModel, address: str = "127.0.0.1:0") -> BlackBoxServer:
    """Start serving in a background thread and return the running server."""
    return BlackBoxServer(bb, address).start()


def _request(url: str, body: dict | None, timeout: float):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        try:
            return exc.code, json.loads(exc.read())
        except ValueError:
            raise TransportError(f"{url}: HTTP {exc.code} with non-JSON body") from None
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise TransportError(f"{url}: {exc}") from None


def http_query(address: str, features, timeout: float = 10.0) -> PosteriorVector:
    status, payload = _request(
        f"http://{address}/predict", {"features": [float(v) for v in features]}, timeout
    )
    if status == 400:
        raise ValidationError(payload.get("error", "bad request"))
    if status != 200 or "posteriors" not in payload:
        raise TransportError(f"unexpected response {status}: {payload}")
    return PosteriorVector(np.asarray(payload["posteriors"], dtype=np.float64))


class RemoteBlackBox:
    """Client with the same surface as BlackBoxModel; the count is the server's."""

    def __init__(self, address: str, timeout: float = 10.0):
        self.address = address
        self.timeout = timeout
        stats = self._stats()
        self.input_dim = int(stats["input_dim"])
        self.num_classes = int(stats["num_classes"])

    def _stats(self) -> dict:
        status, payload = _request(f"http://{self.address}/stats", None, self.timeout)
        if status != 200:
            raise TransportError(f"/stats returned {status}")
        return payload

    def query(self, features) -> PosteriorVector:
        return http_query(self.address, features, self.timeout)

    @property
    def query_count(self) -> int:
        return int(self._stats()["queries"])
