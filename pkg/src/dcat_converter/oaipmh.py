"""OAI-PMH 2.0 harvesting client with resumption-token paging and persistent state."""

from __future__ import annotations

import email.utils
import json
import logging
import os
import tempfile
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Iterator, Optional
from urllib.parse import quote, urlsplit

import requests

from .errors import ConfigError, NetworkError, ProtocolError, StateError

log = logging.getLogger(__name__)

OAI_NS = "http://www.openarchives.org/OAI/2.0/"
OAI_DC_NS = "http://www.openarchives.org/OAI/2.0/oai_dc/"
DC_NS = "http://purl.org/dc/elements/1.1/"
DCTERMS_NS = "http://purl.org/dc/terms/"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"

for _prefix, _uri in (("oai_dc", OAI_DC_NS), ("dc", DC_NS), ("dcterms", DCTERMS_NS), ("xsi", XSI_NS)):
    ET.register_namespace(_prefix, _uri)

DAY_GRANULARITY = "YYYY-MM-DD"
SECONDS_GRANULARITY = "YYYY-MM-DDThh:mm:ssZ"


def _q(tag: str) -> str:
    return f"{{{OAI_NS}}}{tag}"


def parse_datestamp(value: str) -> datetime:
    value = value.strip()
    try:
        if len(value) == 10:
            return datetime.strptime(value, "%Y-%m-%d").replace(tzinfo=timezone.utc)
        return datetime.strptime(value, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise ProtocolError(f"malformed datestamp {value!r}") from exc


def format_datestamp(value: datetime, granularity: str = SECONDS_GRANULARITY) -> str:
    value = value.astimezone(timezone.utc)
    if granularity == DAY_GRANULARITY:
        return value.strftime("%Y-%m-%d")
    return value.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class EndpointConfig:
    id: str
    base_url: str
    metadata_prefix: str = "oai_dc"
    set_spec: Optional[str] = None
    page_timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 1.0

    def __post_init__(self):
        parts = urlsplit(self.base_url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ConfigError(f"endpoint {self.id!r}: base_url {self.base_url!r} is not an absolute HTTP(S) URL")
        if not self.metadata_prefix:
            raise ConfigError(f"endpoint {self.id!r}: metadata_prefix is empty")
        if not self.id:
            raise ConfigError("endpoint id is empty")


@dataclass
class HarvestState:
    endpoint_id: str
    last_success_datestamp: Optional[datetime] = None
    resumption_token: Optional[str] = None
    records_seen: int = 0

    def to_dict(self) -> dict:
        return {
            "endpoint_id": self.endpoint_id,
            "last_success_datestamp": (
                format_datestamp(self.last_success_datestamp) if self.last_success_datestamp else None
            ),
            "resumption_token": self.resumption_token,
            "records_seen": self.records_seen,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HarvestState":
        ds = data.get("last_success_datestamp")
        return cls(
            endpoint_id=data["endpoint_id"],
            last_success_datestamp=parse_datestamp(ds) if ds else None,
            resumption_token=data.get("resumption_token"),
            records_seen=int(data.get("records_seen", 0)),
        )


@dataclass(frozen=True)
class RawOaiRecord:
    identifier: str
    datestamp: datetime
    deleted: bool = False
    payload: Optional[str] = None

    def __post_init__(self):
        if self.deleted and self.payload is not None:
            raise ValueError("deleted records carry no payload")

    def to_dict(self) -> dict:
        return {
            "identifier": self.identifier,
            "datestamp": format_datestamp(self.datestamp),
            "deleted": self.deleted,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RawOaiRecord":
        return cls(data["identifier"], parse_datestamp(data["datestamp"]), bool(data["deleted"]), data.get("payload"))


@dataclass(frozen=True)
class RepositoryInfo:
    name: str
    protocol_version: str
    earliest_datestamp: Optional[str]
    granularity: str
    base_url: str = ""


# --- state persistence -----------------------------------------------------------


def state_path(state_dir, endpoint_id: str) -> Path:
    return Path(state_dir) / f"{quote(endpoint_id, safe='')}.json"


def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_state(state: HarvestState, state_dir) -> Path:
    path = state_path(state_dir, state.endpoint_id)
    try:
        atomic_write(path, json.dumps(state.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise StateError(f"cannot write harvest state {path}: {exc}") from exc
    return path


def load_state(endpoint_id: str, state_dir) -> HarvestState:
    """Read persisted state; a missing file means a fresh harvest.

    A file that exists but cannot be decoded raises StateError rather
    than silently starting over.
    """
    path = state_path(state_dir, endpoint_id)
    try:
        text = path.read_text("utf-8")
    except FileNotFoundError:
        return HarvestState(endpoint_id)
    except OSError as exc:
        raise StateError(f"cannot read harvest state {path}: {exc}") from exc
    try:
        state = HarvestState.from_dict(json.loads(text))
    except (ValueError, KeyError, TypeError, ProtocolError) as exc:
        raise StateError(f"harvest state {path} is corrupt: {exc}") from exc
    if state.endpoint_id != endpoint_id:
        raise StateError(f"harvest state {path} belongs to {state.endpoint_id!r}")
    return state


# --- HTTP ---------------------------------------------------------------------


def _retry_after(resp) -> Optional[float]:
    value = resp.headers.get("Retry-After")
    if not value:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        pass
    try:
        when = email.utils.parsedate_to_datetime(value)
    except (TypeError, ValueError):
        return None
    return max(0.0, (when - datetime.now(timezone.utc)).total_seconds())


class OaiClient:
    """Issues OAI-PMH requests against one endpoint, strictly one at a time."""

    def __init__(self, endpoint: EndpointConfig, session=None, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.session = session or requests.Session()
        self.sleep = sleep
        self.requests_made = 0

    def request(self, params: dict) -> ET.Element:
        ep = self.endpoint
        attempt = 0
        while True:
            self.requests_made += 1
            delay = ep.backoff_base * (2 ** attempt)
            try:
                resp = self.session.get(ep.base_url, params=params, timeout=ep.page_timeout)
            except requests.RequestException as exc:
                failure = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    return self._parse(resp.content)
                failure = f"HTTP {resp.status_code}"
                if resp.status_code < 500:
                    raise NetworkError(f"{ep.id}: {params.get('verb')} failed with {failure}")
                if resp.status_code == 503:
                    hinted = _retry_after(resp)
                    if hinted is not None:
                        delay = hinted
            if attempt >= ep.max_retries:
                raise NetworkError(f"{ep.id}: {params.get('verb')} failed after {attempt + 1} attempts ({failure})")
            log.warning("%s: %s (%s), retrying in %.2fs", ep.id, params.get("verb"), failure, delay)
            self.sleep(delay)
            attempt += 1

    def _parse(self, content: bytes) -> ET.Element:
        try:
            root = ET.fromstring(content)
        except ET.ParseError as exc:
            raise ProtocolError(f"{self.endpoint.id}: malformed OAI-PMH response: {exc}") from exc
        if root.tag != _q("OAI-PMH"):
            raise ProtocolError(f"{self.endpoint.id}: response root is {root.tag}, not OAI-PMH")
        errors = root.findall(_q("error"))
        if errors:
            code = errors[0].get("code")
            raise ProtocolError(f"{self.endpoint.id}: OAI error {code}: {(errors[0].text or '').strip()}", code)
        return root


def identify(endpoint: EndpointConfig, session=None, client: OaiClient | None = None) -> RepositoryInfo:
    client = client or OaiClient(endpoint, session)
    root = client.request({"verb": "Identify"})
    node = root.find(_q("Identify"))
    if node is None:
        raise ProtocolError(f"{endpoint.id}: Identify response lacks an Identify element")

    def text(tag, required=True):
        el = node.find(_q(tag))
        if el is None or not (el.text or "").strip():
            if required:
                raise ProtocolError(f"{endpoint.id}: Identify response lacks {tag}")
            return None
        return el.text.strip()

    version = text("protocolVersion")
    if version != "2.0":
        raise ProtocolError(f"{endpoint.id}: unsupported OAI-PMH protocol version {version!r}")
    granularity = text("granularity", required=False) or DAY_GRANULARITY
    if granularity not in (DAY_GRANULARITY, SECONDS_GRANULARITY):
        raise ProtocolError(f"{endpoint.id}: unknown granularity {granularity!r}")
    return RepositoryInfo(
        name=text("repositoryName"),
        protocol_version=version,
        earliest_datestamp=text("earliestDatestamp", required=False),
        granularity=granularity,
        base_url=text("baseURL", required=False) or endpoint.base_url,
    )


def list_metadata_formats(endpoint: EndpointConfig, session=None) -> list[str]:
    root = OaiClient(endpoint, session).request({"verb": "ListMetadataFormats"})
    return [
        (el.text or "").strip()
        for el in root.iter(_q("metadataPrefix"))
    ]


def parse_list_records(root: ET.Element) -> tuple[list[RawOaiRecord], Optional[str]]:
    container = root.find(_q("ListRecords"))
    if container is None:
        raise ProtocolError("ListRecords response lacks a ListRecords element")
    out = []
    for rec in container.findall(_q("record")):
        header = rec.find(_q("header"))
        if header is None:
            raise ProtocolError("record without header")
        ident = header.findtext(_q("identifier"))
        stamp = header.findtext(_q("datestamp"))
        if not ident or not stamp:
            raise ProtocolError("record header lacks identifier or datestamp")
        deleted = header.get("status") == "deleted"
        payload = None
        if not deleted:
            meta = rec.find(_q("metadata"))
            children = list(meta) if meta is not None else []
            if not children:
                raise ProtocolError(f"record {ident} has no metadata payload")
            payload = ET.tostring(children[0], encoding="unicode")
        out.append(RawOaiRecord(ident.strip(), parse_datestamp(stamp), deleted, payload))
    tok = container.find(_q("resumptionToken"))
    token = (tok.text or "").strip() if tok is not None else ""
    return out, token or None


class ListRecordsRun:
    """One ListRecords harvest over an endpoint.

    ``state`` is a working copy that advances as pages are handed out: when a
    page is yielded, the state already points past it, so persisting the
    state after processing a page lets an interrupted run resume there.
    """

    def __init__(
        self,
        endpoint: EndpointConfig,
        state: HarvestState,
        *,
        granularity: str = SECONDS_GRANULARITY,
        client: OaiClient | None = None,
        session=None,
        now: Callable[[], datetime] | None = None,
        max_restarts: int = 1,
    ):
        if state.endpoint_id != endpoint.id:
            raise ValueError(f"state for {state.endpoint_id!r} used with endpoint {endpoint.id!r}")
        self.endpoint = endpoint
        self.state = replace(state)
        self.granularity = granularity
        self.client = client or OaiClient(endpoint, session)
        self.now = now or (lambda: datetime.now(timezone.utc))
        self.max_restarts = max_restarts
        self.restarts = 0
        self.pages_fetched = 0
        self.completed = False
        self._previous = state.last_success_datestamp

    @property
    def from_param(self) -> Optional[str]:
        last = self._previous
        if last is None:
            return None
        if self.granularity == DAY_GRANULARITY:
            return format_datestamp(last, DAY_GRANULARITY)
        # OAI-PMH `from` is inclusive; step past the newest record already taken
        return format_datestamp(last + timedelta(seconds=1), SECONDS_GRANULARITY)

    def _initial_params(self) -> dict:
        params = {"verb": "ListRecords", "metadataPrefix": self.endpoint.metadata_prefix}
        if self.from_param:
            params["from"] = self.from_param
        if self.endpoint.set_spec:
            params["set"] = self.endpoint.set_spec
        return params

    def pages(self) -> Iterator[list[RawOaiRecord]]:
        run_start = self.now()
        token = self.state.resumption_token
        seen: dict[str, datetime] = {}
        newest: Optional[datetime] = None
        while True:
            params = {"verb": "ListRecords", "resumptionToken": token} if token else self._initial_params()
            try:
                root = self.client.request(params)
            except ProtocolError as exc:
                if exc.code == "noRecordsMatch":
                    break
                if exc.code == "badResumptionToken" and token:
                    self.state.resumption_token = None
                    if self.restarts < self.max_restarts:
                        self.restarts += 1
                        log.warning(
                            "%s: resumption token rejected, re-harvesting from %s",
                            self.endpoint.id, self.from_param or "the beginning",
                        )
                        token = None
                        continue
                raise
            self.pages_fetched += 1
            records, token = parse_list_records(root)
            page = []
            for rec in records:
                prev = seen.get(rec.identifier)
                if prev is not None and rec.datestamp <= prev:
                    continue
                seen[rec.identifier] = rec.datestamp
                page.append(rec)
                if newest is None or rec.datestamp > newest:
                    newest = rec.datestamp
            self.state.resumption_token = token
            self.state.records_seen += len(page)
            if page:
                yield page
            if not token:
                break

        self.state.resumption_token = None
        if self.granularity == DAY_GRANULARITY:
            self.state.last_success_datestamp = run_start - timedelta(days=1)
        elif newest is not None and (self._previous is None or newest > self._previous):
            self.state.last_success_datestamp = newest
        self.completed = True

    def __iter__(self) -> Iterator[RawOaiRecord]:
        for page in self.pages():
            yield from page


def list_records(endpoint: EndpointConfig, state: HarvestState, **kwargs) -> ListRecordsRun:
    """Start a ListRecords harvest; iterate the result for records, then read ``.state``."""
    return ListRecordsRun(endpoint, state, **kwargs)
