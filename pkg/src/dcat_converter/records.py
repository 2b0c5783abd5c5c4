"""Parse oai_dc metadata payloads into schema-tagged source records."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Optional

from .errors import SchemaMismatch, UnknownSchema, XmlError
from .oaipmh import DC_NS, DCTERMS_NS, OAI_DC_NS, RawOaiRecord
from .schema import SchemaDescriptor

XML_LANG = "{http://www.w3.org/XML/1998/namespace}lang"
MAX_VALUE_BYTES = 64 * 1024
ELEMENT_NAMESPACES = (DC_NS, DCTERMS_NS)


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class FieldValue:
    term_name: str
    value: str
    lang: Optional[str] = None

    def __post_init__(self):
        if not self.value.strip():
            raise ValueError("field values must be non-empty")


@dataclass(frozen=True)
class SourceRecord:
    identifier: str
    datestamp: datetime
    schema_id: str
    fields: tuple[FieldValue, ...]
    origin_endpoint: str = ""
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def values(self, term_name: str) -> list[str]:
        return [f.value for f in self.fields if f.term_name == term_name]


def _split(tag: str) -> tuple[str, str]:
    if tag.startswith("{"):
        ns, _, local = tag[1:].partition("}")
        return ns, local
    return "", tag


def _root(raw: RawOaiRecord) -> ET.Element:
    if raw.deleted or raw.payload is None:
        raise ValueError(f"record {raw.identifier} is deleted and has no payload")
    try:
        return ET.fromstring(raw.payload)
    except ET.ParseError as exc:
        raise XmlError(f"record {raw.identifier}: malformed payload: {exc}") from exc


def detect_schema(raw: RawOaiRecord, registry: Iterable[SchemaDescriptor]) -> str:
    """Pick the registered schema matching the payload's root namespace.

    An oai_dc envelope holding any dcterms element is classed as "dcterms".
    """
    root = _root(raw)
    ns, _ = _split(root.tag)
    by_ns = {s.namespace: s.id for s in registry}
    ids = set(by_ns.values())
    if ns == OAI_DC_NS:
        uses_dcterms = any(_split(el.tag)[0] == DCTERMS_NS for el in root)
        if uses_dcterms and "dcterms" in ids:
            return "dcterms"
        if "oai_dc" in ids:
            return "oai_dc"
    if ns in by_ns:
        return by_ns[ns]
    raise UnknownSchema(f"record {raw.identifier}: no registered schema for namespace {ns!r}")


def _truncate(value: str) -> tuple[str, bool]:
    data = value.encode("utf-8")
    if len(data) <= MAX_VALUE_BYTES:
        return value, False
    return data[:MAX_VALUE_BYTES].decode("utf-8", errors="ignore"), True


def parse_record(raw: RawOaiRecord, schema: SchemaDescriptor, origin_endpoint: str = "") -> SourceRecord:
    root = _root(raw)
    ns, _ = _split(root.tag)
    if ns not in (OAI_DC_NS, schema.namespace):
        raise SchemaMismatch(f"record {raw.identifier}: root namespace {ns!r} does not fit schema {schema.id!r}")
    allowed_ns = ELEMENT_NAMESPACES if schema.id == "dcterms" else (DC_NS,)

    fields, notes = [], []
    for el in root:
        if not isinstance(el.tag, str):
            continue
        el_ns, local = _split(el.tag)
        if el_ns not in allowed_ns or local not in schema:
            notes.append(f"unknown element {{{el_ns}}}{local}")
            continue
        value = normalize_ws("".join(el.itertext()))
        if not value:
            notes.append(f"empty element {local} dropped")
            continue
        value, cut = _truncate(value)
        if cut:
            notes.append(f"value of {local} truncated to {MAX_VALUE_BYTES} bytes")
        lang = el.get(XML_LANG)
        fields.append(FieldValue(local, value, normalize_ws(lang) or None if lang else None))
    return SourceRecord(raw.identifier, raw.datestamp, schema.id, tuple(fields), origin_endpoint, tuple(notes))
