"""Read-only HTTP service exposing the latest published catalog snapshots."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, unquote, urlsplit

from .config import PipelineConfig
from .converter import build_catalog, catalog_uri
from .emit import catalog_graph
from .errors import StateError
from .rdf import Graph, serialize_rdfxml, serialize_turtle
from .store import DatasetStore, Snapshot

log = logging.getLogger(__name__)

TURTLE = "text/turtle"
RDFXML = "application/rdf+xml"
OFFERED = (TURTLE, RDFXML)


def negotiate(accept: Optional[str], offered=OFFERED) -> Optional[str]:
    """Pick the best offered media type for an Accept header (None means 406)."""
    if not accept or not accept.strip():
        return offered[0]
    best, best_q = None, 0.0
    for part in accept.split(","):
        fields = [f.strip() for f in part.split(";")]
        mtype = fields[0].lower()
        q = 1.0
        for param in fields[1:]:
            key, _, val = param.partition("=")
            if key.strip() == "q":
                try:
                    q = float(val)
                except ValueError:
                    q = 0.0
        if q <= 0:
            continue
        for offer in offered:
            major = offer.split("/")[0]
            if mtype in (offer, "*/*", f"{major}/*"):
                # exact matches beat wildcards at equal q
                score = q + (0.001 if mtype == offer else 0.0)
                if score > best_q:
                    best, best_q = offer, score
    return best


class CatalogService:
    """Request handling independent of the HTTP server, so it can be tested directly."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.store = DatasetStore(config.output_dir)
        self._cache: dict[tuple[str, str], Snapshot] = {}
        self._lock = threading.Lock()

    def snapshot(self, endpoint_id: str) -> Optional[Snapshot]:
        name = self.store.current_name(endpoint_id)
        if name is None:
            return None
        key = (endpoint_id, name)
        with self._lock:
            snap = self._cache.get(key)
        if snap is None:
            snap = self.store.current(endpoint_id)
            if snap is None:
                return None
            with self._lock:
                # drop stale snapshots of this endpoint
                for k in [k for k in self._cache if k[0] == endpoint_id]:
                    del self._cache[k]
                self._cache[(endpoint_id, snap.name)] = snap
        return snap

    def catalog(self, endpoint_id: str) -> Graph:
        settings = self.config.endpoint(endpoint_id)
        snap = self.snapshot(endpoint_id)
        uris = snap.dataset_uris if snap else []
        return catalog_graph(build_catalog(endpoint_id, settings.catalog, uris, self.config.base_uri))

    def dataset_page(self, endpoint_id: str, page: int) -> Graph:
        size = self.config.serve.page_size
        snap = self.snapshot(endpoint_id)
        g = Graph()
        if snap is None:
            return g
        for uri in snap.dataset_uris[page * size:(page + 1) * size]:
            g.update(snap.dataset_graph(uri))
        return g

    def find_dataset(self, uri: str) -> Optional[Graph]:
        for eid in self.config.endpoint_ids:
            snap = self.snapshot(eid)
            if snap is not None and snap.has_dataset(uri):
                return snap.dataset_graph(uri)
        return None

    def health(self) -> dict:
        endpoints, runs = {}, 0
        for eid in self.config.endpoint_ids:
            try:
                snap = self.snapshot(eid)
            except StateError as exc:
                endpoints[eid] = {"error": str(exc)}
                continue
            if snap is None:
                endpoints[eid] = None
                continue
            runs += snap.index.get("runs", 0)
            endpoints[eid] = {"snapshot": snap.name, "datasets": len(snap.dataset_uris),
                              "last_run": snap.index.get("last_run")}
        return {"status": "ok", "runs": runs, "endpoints": endpoints}

    def handle(self, method: str, target: str, accept: Optional[str]) -> tuple[int, str, bytes]:
        """Returns (status, content type, body)."""
        if method not in ("GET", "HEAD"):
            return _json(405, {"error": "method not allowed"})
        parts = urlsplit(target)
        path = parts.path.rstrip("/") or "/"
        query = parse_qs(parts.query)
        segments = [unquote(s) for s in path.split("/") if s]

        if segments == ["health"]:
            return _json(200, self.health())
        if segments == ["catalogues"]:
            return _json(200, {"catalogues": [catalog_uri(self.config.base_uri, e) for e in self.config.endpoint_ids]})

        if segments and segments[0] in ("catalogues", "datasets"):
            mtype = negotiate(accept)
            if mtype is None:
                return _json(406, {"error": "not acceptable", "offered": list(OFFERED)})
            if segments[0] == "catalogues" and len(segments) in (2, 3):
                eid = segments[1]
                if eid not in self.config.endpoint_ids:
                    return _json(404, {"error": f"unknown catalogue {eid!r}"})
                if len(segments) == 2:
                    return _rdf(self.catalog(eid), mtype)
                if segments[2] == "datasets":
                    try:
                        page = int(query.get("page", ["0"])[0])
                    except ValueError:
                        return _json(400, {"error": "page must be an integer"})
                    if page < 0:
                        return _json(400, {"error": "page must be non-negative"})
                    return _rdf(self.dataset_page(eid, page), mtype)
            if segments == ["datasets"]:
                uri = query.get("uri", [None])[0]
                if not uri:
                    return _json(400, {"error": "missing uri parameter"})
                g = self.find_dataset(uri)
                if g is None:
                    return _json(404, {"error": f"unknown dataset {uri!r}"})
                return _rdf(g, mtype)
        return _json(404, {"error": f"no such resource {parts.path!r}"})


def _json(status: int, payload) -> tuple[int, str, bytes]:
    return status, "application/json", (json.dumps(payload, indent=1, sort_keys=True) + "\n").encode("utf-8")


def _rdf(graph: Graph, mtype: str) -> tuple[int, str, bytes]:
    text = serialize_turtle(graph) if mtype == TURTLE else serialize_rdfxml(graph)
    return 200, f"{mtype}; charset=utf-8", text.encode("utf-8")


def make_server(config: PipelineConfig, bind: Optional[str] = None, port: Optional[int] = None) -> ThreadingHTTPServer:
    service = CatalogService(config)

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _respond(self, head_only=False):
            try:
                status, ctype, body = service.handle("GET", self.path, self.headers.get("Accept"))
            except Exception:  # keep serving; report the failure
                log.exception("request %s failed", self.path)
                status, ctype, body = _json(500, {"error": "internal error"})
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Vary", "Accept")
            self.end_headers()
            if not head_only:
                self.wfile.write(body)

        def do_GET(self):
            self._respond()

        def do_HEAD(self):
            self._respond(head_only=True)

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    server = ThreadingHTTPServer((bind or config.serve.bind, config.serve.port if port is None else port), Handler)
    server.daemon_threads = True
    server.service = service
    return server


class ServiceThread:
    """Runs the catalog service in a background thread (tests, embedding)."""

    def __init__(self, config: PipelineConfig, bind: str = "127.0.0.1", port: int = 0):
        self.server = make_server(config, bind, port)
        self._thread = threading.Thread(target=self.server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self._thread.join(timeout=5)


def serve(config: PipelineConfig) -> None:
    server = make_server(config)
    host, port = server.server_address[:2]
    log.info("serving %d catalogue(s) on http://%s:%d", len(config.endpoints), host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
