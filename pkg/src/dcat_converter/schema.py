"""Vocabulary descriptors: the source and target term sets the matcher aligns."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional
from urllib.parse import urlsplit

from .errors import InvariantError, ParseError

BUILTIN_IDS = ("oai_dc", "dcterms", "dcat-ap")


def is_absolute_uri(value: str) -> bool:
    parts = urlsplit(value)
    return bool(parts.scheme) and bool(parts.netloc or parts.path)


@dataclass(frozen=True)
class TermDescriptor:
    name: str
    uri: str
    label: str
    comment: Optional[str] = None
    definition: Optional[str] = None

    def __post_init__(self):
        if not self.name or any(ch.isspace() for ch in self.name):
            raise InvariantError(f"term name {self.name!r} is empty or contains whitespace")
        if not is_absolute_uri(self.uri):
            raise InvariantError(f"term {self.name!r}: uri {self.uri!r} is not absolute")

    def to_dict(self) -> dict:
        out = {"name": self.name, "uri": self.uri, "label": self.label}
        if self.comment is not None:
            out["comment"] = self.comment
        if self.definition is not None:
            out["definition"] = self.definition
        return out


@dataclass(frozen=True)
class SchemaDescriptor:
    id: str
    namespace: str
    terms: tuple[TermDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        seen = set()
        for term in self.terms:
            if term.name in seen:
                raise InvariantError(f"schema {self.id!r}: duplicate term name {term.name!r}")
            seen.add(term.name)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    def term(self, name: str) -> TermDescriptor:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(t.name == name for t in self.terms)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "namespace": self.namespace,
            "terms": [t.to_dict() for t in self.terms],
        }


def serialize_schema(schema: SchemaDescriptor) -> str:
    return json.dumps(schema.to_dict(), indent=2, ensure_ascii=False) + "\n"


def load_schema(document: str | bytes) -> SchemaDescriptor:
    """Parse a schema-descriptor JSON document.

    Raises ParseError when the document is not JSON or lacks required
    keys, and InvariantError when the terms break descriptor invariants.
    """
    try:
        data = json.loads(document)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"schema descriptor is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("schema descriptor must be a JSON object")
    try:
        sid, namespace, raw_terms = data["id"], data["namespace"], data["terms"]
    except KeyError as exc:
        raise ParseError(f"schema descriptor missing key {exc.args[0]!r}") from exc
    if not isinstance(sid, str) or not isinstance(namespace, str) or not isinstance(raw_terms, list):
        raise ParseError("schema descriptor has wrongly typed id/namespace/terms")

    terms = []
    for i, raw in enumerate(raw_terms):
        if not isinstance(raw, dict):
            raise ParseError(f"term #{i} is not an object")
        try:
            name, uri, label = raw["name"], raw["uri"], raw["label"]
        except KeyError as exc:
            raise ParseError(f"term #{i} missing key {exc.args[0]!r}") from exc
        for key in ("name", "uri", "label", "comment", "definition"):
            if key in raw and raw[key] is not None and not isinstance(raw[key], str):
                raise ParseError(f"term #{i}: {key} must be a string")
        terms.append(TermDescriptor(name, uri, label, raw.get("comment"), raw.get("definition")))
    return SchemaDescriptor(sid, namespace, tuple(terms))


def bundled_schema_text(schema_id: str) -> str:
    return resources.files(__package__).joinpath("schemas", f"{schema_id}.json").read_text("utf-8")


@lru_cache(maxsize=None)
def _builtin(schema_id: str) -> SchemaDescriptor:
    return load_schema(bundled_schema_text(schema_id))


def builtin_schemas() -> list[SchemaDescriptor]:
    return [_builtin(sid) for sid in BUILTIN_IDS]


def get_builtin(schema_id: str) -> SchemaDescriptor:
    if schema_id not in BUILTIN_IDS:
        raise KeyError(f"no builtin schema {schema_id!r}")
    return _builtin(schema_id)


class SchemaRegistry:
    """A set of loaded descriptors keyed by id."""

    def __init__(self, schemas: Iterable[SchemaDescriptor] = ()):
        self._schemas: dict[str, SchemaDescriptor] = {}
        for schema in schemas:
            self.add(schema)

    def add(self, schema: SchemaDescriptor) -> None:
        if schema.id in self._schemas:
            raise InvariantError(f"schema id {schema.id!r} already registered")
        self._schemas[schema.id] = schema

    def __getitem__(self, schema_id: str) -> SchemaDescriptor:
        return self._schemas[schema_id]

    def __contains__(self, schema_id: str) -> bool:
        return schema_id in self._schemas

    def __iter__(self):
        return iter(self._schemas.values())

    @classmethod
    def builtin(cls) -> "SchemaRegistry":
        return cls(builtin_schemas())
