"""A fixture OAI-PMH 2.0 repository for protocol and end-to-end tests.

Corpora are JSON documents describing records by field lists; payloads are
rendered per the record's vocabulary variant:

* ``standard``          every field as ``dc:<name>``
* ``abstract-variant``  like standard, but ``description`` becomes ``dcterms:abstract``
* ``dcterms-variant``   every field as ``dcterms:<name>``

A field name written ``dcterms:<name>`` is always rendered in the dcterms
namespace.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlsplit
from xml.sax.saxutils import escape, quoteattr

from .oaipmh import (
    DAY_GRANULARITY,
    DC_NS,
    DCTERMS_NS,
    OAI_DC_NS,
    OAI_NS,
    SECONDS_GRANULARITY,
    XSI_NS,
    format_datestamp,
    parse_datestamp,
)
from .errors import ProtocolError

log = logging.getLogger(__name__)

VARIANTS = ("standard", "abstract-variant", "dcterms-variant")
FAILURES = ("503-once", "badResumptionToken-once", "500-always")
BUNDLED_CORPORA = ("mock-tu", "mock-hu", "mock-fu")


@dataclass(frozen=True)
class FixtureRecord:
    identifier: str
    datestamp: str
    deleted: bool = False
    variant: str = "standard"
    fields: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown vocabulary variant {self.variant!r}")
        object.__setattr__(self, "fields", tuple(tuple(f) for f in self.fields))

    @property
    def stamp(self) -> datetime:
        return parse_datestamp(self.datestamp)

    def to_dict(self) -> dict:
        out = {"identifier": self.identifier, "datestamp": self.datestamp}
        if self.deleted:
            out["deleted"] = True
        else:
            out["variant"] = self.variant
            out["fields"] = [list(f) for f in self.fields]
        return out


@dataclass(frozen=True)
class FixtureCorpus:
    name: str
    records: tuple[FixtureRecord, ...]
    page_size: int = 10
    granularity: str = SECONDS_GRANULARITY
    protocol_version: str = "2.0"
    earliest_datestamp: Optional[str] = None
    set_spec: Optional[str] = None
    token_max_uses: Optional[int] = None
    failures: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "failures", tuple(self.failures))
        ids = [r.identifier for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError(f"corpus {self.name!r}: duplicate identifiers")
        stamps = [r.stamp for r in self.records]
        if any(a > b for a, b in zip(stamps, stamps[1:])):
            raise ValueError(f"corpus {self.name!r}: datestamps must be non-decreasing")
        if self.page_size < 1:
            raise ValueError("page_size must be at least 1")
        unknown = set(self.failures) - set(FAILURES)
        if unknown:
            raise ValueError(f"unknown failure injections {sorted(unknown)}")

    @property
    def digest(self) -> str:
        return hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "page_size": self.page_size,
            "granularity": self.granularity,
            "protocol_version": self.protocol_version,
            "earliest_datestamp": self.earliest_datestamp,
            "set_spec": self.set_spec,
            "token_max_uses": self.token_max_uses,
            "failures": list(self.failures),
            "records": [r.to_dict() for r in self.records],
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FixtureCorpus":
        records = tuple(
            FixtureRecord(
                r["identifier"], r["datestamp"], bool(r.get("deleted", False)),
                r.get("variant", "standard"), tuple(r.get("fields", ())),
            )
            for r in data["records"]
        )
        return cls(
            name=data["name"],
            records=records,
            page_size=int(data.get("page_size", 10)),
            granularity=data.get("granularity", SECONDS_GRANULARITY),
            protocol_version=data.get("protocol_version", "2.0"),
            earliest_datestamp=data.get("earliest_datestamp"),
            set_spec=data.get("set_spec"),
            token_max_uses=data.get("token_max_uses"),
            failures=tuple(data.get("failures", ())),
        )

    @classmethod
    def load(cls, path) -> "FixtureCorpus":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    def with_changes(self, **changes) -> "FixtureCorpus":
        data = self.to_dict()
        data.update(changes)
        return FixtureCorpus.from_dict(data)


def bundled_corpus(name: str) -> FixtureCorpus:
    text = resources.files(__package__).joinpath("fixtures", "corpora", f"{name}.json").read_text("utf-8")
    return FixtureCorpus.from_dict(json.loads(text))


def render_payload(record: FixtureRecord) -> str:
    parts = [
        f'<oai_dc:dc xmlns:oai_dc="{OAI_DC_NS}" xmlns:dc="{DC_NS}" xmlns:dcterms="{DCTERMS_NS}"'
        f' xmlns:xsi="{XSI_NS}"'
        f' xsi:schemaLocation="{OAI_DC_NS} http://www.openarchives.org/OAI/2.0/oai_dc.xsd">'
    ]
    for f in record.fields:
        name, value = f[0], f[1]
        lang = f[2] if len(f) > 2 else None
        if name.startswith("dcterms:"):
            tag = name
        elif record.variant == "dcterms-variant":
            tag = f"dcterms:{name}"
        elif record.variant == "abstract-variant" and name == "description":
            tag = "dcterms:abstract"
        else:
            tag = f"dc:{name}"
        attr = f" xml:lang={quoteattr(lang)}" if lang else ""
        parts.append(f"\n      <{tag}{attr}>{escape(value)}</{tag}>")
    parts.append("\n    </oai_dc:dc>")
    return "".join(parts)


class _BadArgument(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class MockRepository:
    """In-process OAI-PMH server over a :class:`FixtureCorpus`.

    Use as a context manager; ``url`` is the base URL and ``log`` the list of
    requests served (dicts with ``verb``, ``params`` and ``status``).
    """

    def __init__(self, corpus: FixtureCorpus, host: str = "127.0.0.1", port: int = 0):
        self._corpus = corpus
        self._lock = threading.Lock()
        self.log: list[dict] = []
        self._token_uses: dict[str, int] = {}
        self._issued = 0
        self._pending_failures = list(corpus.failures)
        self._inflight = 0
        self.max_inflight = 0
        repo = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                repo._handle(self)

            def log_message(self, fmt, *args):
                log.debug("mock %s: " + fmt, repo._corpus.name, *args)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def corpus(self) -> FixtureCorpus:
        return self._corpus

    def load(self, corpus: FixtureCorpus) -> None:
        """Swap in a new corpus; outstanding tokens for the old one become invalid."""
        with self._lock:
            self._corpus = corpus
            self._pending_failures = list(corpus.failures)

    def inject(self, *failures: str) -> None:
        with self._lock:
            self._pending_failures.extend(failures)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/oai"

    def start(self) -> "MockRepository":
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05},
            name=f"mock-{self._corpus.name}", daemon=True,
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def requests_for(self, verb: str) -> list[dict]:
        with self._lock:
            return [e for e in self.log if e["verb"] == verb]

    def reset_log(self) -> None:
        with self._lock:
            self.log.clear()

    # --- request handling -----------------------------------------------------

    def _handle(self, handler: BaseHTTPRequestHandler) -> None:
        with self._lock:
            self._inflight += 1
            self.max_inflight = max(self.max_inflight, self._inflight)
        try:
            self._dispatch(handler)
        finally:
            with self._lock:
                self._inflight -= 1

    def _dispatch(self, handler):
        query = parse_qs(urlsplit(handler.path).query, keep_blank_values=True)
        params = {k: v[0] for k, v in query.items()}
        duplicated = [k for k, v in query.items() if len(v) > 1]
        verb = params.get("verb", "")
        corpus = self._corpus
        entry = {"verb": verb, "params": params, "status": 200}

        failure = self._take_failure(verb, params)
        if failure in ("503-once", "500-always"):
            entry["status"] = 503 if failure == "503-once" else 500
            with self._lock:
                self.log.append(entry)
            handler.send_response(entry["status"])
            if failure == "503-once":
                handler.send_header("Retry-After", "0")
            handler.send_header("Content-Length", "0")
            handler.end_headers()
            return

        try:
            if duplicated:
                raise _BadArgument("badArgument", f"repeated arguments: {', '.join(duplicated)}")
            if failure == "badResumptionToken-once":
                raise _BadArgument("badResumptionToken", "the resumption token has expired")
            if verb == "Identify":
                self._check_args(params, set())
                body = self._identify(corpus, handler)
            elif verb == "ListMetadataFormats":
                self._check_args(params, {"identifier"})
                body = self._list_metadata_formats()
            elif verb == "ListRecords":
                body = self._list_records(corpus, params)
            else:
                raise _BadArgument("badVerb", f"illegal verb {verb!r}")
        except _BadArgument as exc:
            entry["error"] = exc.code
            body = f'<error code="{exc.code}">{escape(str(exc))}</error>'
            request_attrs = ""
        else:
            request_attrs = "".join(f" {k}={quoteattr(v)}" for k, v in sorted(params.items()))
        with self._lock:
            self.log.append(entry)

        now = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        xml = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<OAI-PMH xmlns="{OAI_NS}" xmlns:xsi="{XSI_NS}"'
            f' xsi:schemaLocation="{OAI_NS} http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd">\n'
            f"  <responseDate>{now}</responseDate>\n"
            f"  <request{request_attrs}>{escape(self.url)}</request>\n"
            f"  {body}\n"
            "</OAI-PMH>\n"
        ).encode("utf-8")
        handler.send_response(200)
        handler.send_header("Content-Type", "text/xml; charset=utf-8")
        handler.send_header("Content-Length", str(len(xml)))
        handler.end_headers()
        handler.wfile.write(xml)

    def _take_failure(self, verb, params):
        with self._lock:
            if "500-always" in self._pending_failures:
                return "500-always"
            if verb != "ListRecords" or "resumptionToken" not in params:
                return None
            for name in ("503-once", "badResumptionToken-once"):
                if name in self._pending_failures:
                    self._pending_failures.remove(name)
                    return name
        return None

    @staticmethod
    def _check_args(params, allowed):
        extra = set(params) - {"verb"} - allowed
        if extra:
            raise _BadArgument("badArgument", f"illegal arguments: {', '.join(sorted(extra))}")

    def _identify(self, corpus, handler):
        earliest = corpus.earliest_datestamp or (
            corpus.records[0].datestamp if corpus.records else "1970-01-01T00:00:00Z"
        )
        if corpus.granularity == DAY_GRANULARITY:
            earliest = earliest[:10]
        return (
            "<Identify>"
            f"<repositoryName>{escape(corpus.name)}</repositoryName>"
            f"<baseURL>{escape(self.url)}</baseURL>"
            f"<protocolVersion>{escape(corpus.protocol_version)}</protocolVersion>"
            "<adminEmail>admin@example.org</adminEmail>"
            f"<earliestDatestamp>{earliest}</earliestDatestamp>"
            "<deletedRecord>persistent</deletedRecord>"
            f"<granularity>{corpus.granularity}</granularity>"
            "</Identify>"
        )

    @staticmethod
    def _list_metadata_formats():
        return (
            "<ListMetadataFormats><metadataFormat>"
            "<metadataPrefix>oai_dc</metadataPrefix>"
            "<schema>http://www.openarchives.org/OAI/2.0/oai_dc.xsd</schema>"
            f"<metadataNamespace>{OAI_DC_NS}</metadataNamespace>"
            "</metadataFormat></ListMetadataFormats>"
        )

    def _parse_bound(self, value, upper, granularity):
        if len(value) == 10:
            try:
                day = parse_datestamp(value)
            except ProtocolError:
                raise _BadArgument("badArgument", f"malformed date {value!r}") from None
            return day + timedelta(days=1) - timedelta(seconds=1) if upper else day
        if granularity == DAY_GRANULARITY:
            raise _BadArgument("badArgument", "repository supports day granularity only")
        try:
            return parse_datestamp(value)
        except ProtocolError:
            raise _BadArgument("badArgument", f"malformed datestamp {value!r}") from None

    def _encode_token(self, corpus, offset, args):
        # a serial number makes every issued token distinct, so use counting
        # (token_max_uses) applies per hand-out rather than per position
        with self._lock:
            self._issued += 1
            serial = self._issued
        raw = json.dumps({"o": offset, "h": corpus.digest, "n": serial, **args}, sort_keys=True, separators=(",", ":"))
        return base64.urlsafe_b64encode(raw.encode()).decode().rstrip("=")

    def _decode_token(self, corpus, token):
        with self._lock:
            uses = self._token_uses.get(token, 0) + 1
            self._token_uses[token] = uses
        if corpus.token_max_uses is not None and uses > corpus.token_max_uses:
            raise _BadArgument("badResumptionToken", "the resumption token has expired")
        try:
            data = json.loads(base64.urlsafe_b64decode(token + "=" * (-len(token) % 4)))
            offset = int(data.pop("o"))
            digest = data.pop("h")
            data.pop("n", None)
        except (ValueError, KeyError, TypeError):
            raise _BadArgument("badResumptionToken", "the resumption token is invalid") from None
        if digest != corpus.digest:
            raise _BadArgument("badResumptionToken", "the resumption token belongs to another list")
        return offset, data

    def _list_records(self, corpus, params):
        if "resumptionToken" in params:
            self._check_args(params, {"resumptionToken"})
            offset, args = self._decode_token(corpus, params["resumptionToken"])
        else:
            self._check_args(params, {"metadataPrefix", "from", "until", "set"})
            if "metadataPrefix" not in params:
                raise _BadArgument("badArgument", "metadataPrefix is required")
            offset = 0
            args = {k: params[k] for k in ("metadataPrefix", "from", "until", "set") if k in params}
        if args.get("metadataPrefix") != "oai_dc":
            raise _BadArgument("cannotDisseminateFormat", f"unsupported format {args.get('metadataPrefix')!r}")
        if "set" in args and corpus.set_spec is None:
            raise _BadArgument("noSetHierarchy", "this repository does not support sets")

        lo = self._parse_bound(args["from"], False, corpus.granularity) if "from" in args else None
        hi = self._parse_bound(args["until"], True, corpus.granularity) if "until" in args else None
        if "from" in args and "until" in args and len(args["from"]) != len(args["until"]):
            raise _BadArgument("badArgument", "from and until have different granularities")

        def stamp(r):
            s = r.stamp
            return s.replace(hour=0, minute=0, second=0) if corpus.granularity == DAY_GRANULARITY else s

        selected = [
            r for r in corpus.records
            if (lo is None or stamp(r) >= lo)
            and (hi is None or stamp(r) <= hi)
            and ("set" not in args or args["set"] == corpus.set_spec)
        ]
        if not selected:
            raise _BadArgument("noRecordsMatch", "no records match the request")
        if offset < 0 or offset >= len(selected):
            raise _BadArgument("badResumptionToken", "the resumption token is out of range")
        page = selected[offset: offset + corpus.page_size]
        parts = ["<ListRecords>"]
        for rec in page:
            parts.append(self._record_xml(corpus, rec))
        nxt = offset + corpus.page_size
        if nxt < len(selected):
            parts.append(
                f'<resumptionToken completeListSize="{len(selected)}" cursor="{offset}">'
                f"{self._encode_token(corpus, nxt, args)}</resumptionToken>"
            )
        elif offset > 0:
            parts.append(f'<resumptionToken completeListSize="{len(selected)}" cursor="{offset}"/>')
        parts.append("</ListRecords>")
        return "\n    ".join(parts)

    @staticmethod
    def _record_xml(corpus, rec: FixtureRecord) -> str:
        stamp = rec.datestamp[:10] if corpus.granularity == DAY_GRANULARITY else format_datestamp(rec.stamp)
        set_el = f"<setSpec>{escape(corpus.set_spec)}</setSpec>" if corpus.set_spec else ""
        if rec.deleted:
            return (
                f'<record><header status="deleted"><identifier>{escape(rec.identifier)}</identifier>'
                f"<datestamp>{stamp}</datestamp>{set_el}</header></record>"
            )
        return (
            f"<record><header><identifier>{escape(rec.identifier)}</identifier>"
            f"<datestamp>{stamp}</datestamp>{set_el}</header>"
            f"<metadata>\n    {render_payload(rec)}\n    </metadata></record>"
        )
