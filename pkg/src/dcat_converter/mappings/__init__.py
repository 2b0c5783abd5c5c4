"""Shipped, curator-reviewed mapping tables onto DCAT-AP.

Each ``<source>__dcat-ap.json`` is frozen output of
``apply_overrides(match_schemas(source, dcat-ap), <source>.overrides.json)``;
:func:`rebuild` regenerates it.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from ..matcher import MappingTable, MatcherConfig, apply_overrides, load_overrides, match_schemas
from ..schema import get_builtin

TARGET = "dcat-ap"
SHIPPED_SOURCES = ("oai_dc", "dcterms")


def _read(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text("utf-8")


def reviewed_overrides(source_id: str):
    return load_overrides(_read(f"{source_id}.overrides.json"))[1]


def rebuild(source_id: str, config: MatcherConfig | None = None) -> MappingTable:
    source, target = get_builtin(source_id), get_builtin(TARGET)
    table = match_schemas(source, target, config)
    return apply_overrides(table, reviewed_overrides(source_id), source, target)


@lru_cache(maxsize=None)
def builtin_mapping(source_id: str) -> MappingTable:
    if source_id not in SHIPPED_SOURCES:
        raise KeyError(f"no shipped mapping for source schema {source_id!r}")
    return MappingTable.from_json(_read(f"{source_id}__{TARGET}.json"))


def fu_abstract_overrides():
    """The per-repository override pinning dcterms:abstract to dct:description."""
    return load_overrides(_read("fu-abstract.overrides.json"))[1]
