"""Turn source records into DCAT-AP datasets using a mapping table and transform rules."""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field
from datetime import date, datetime
from typing import Iterable, Mapping, Optional
from urllib.parse import quote, urlsplit

from .errors import ConfigError, InvalidBase
from .matcher import MappingTable
from .records import SourceRecord

log = logging.getLogger(__name__)

LANG_TAG = re.compile(r"^[A-Za-z]{2,3}(-[A-Za-z0-9]{1,8})*$")
_URI_LIKE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:\S+$")

# Transform rule kinds keyed by DCAT-AP target term.
DEFAULT_RULES = {
    "title": "text",
    "description": "text",
    "keyword": "plain",
    "theme": "uri",
    "creator": "agent",
    "contributor": "agent",
    "publisher": "agent",
    "issued": "date-earliest",
    "modified": "date-latest",
    "identifier": "identifier",
    "language": "language",
    "accessRights": "single",
    "landingPage": "uri-single",
    "distribution": "distribution",
}
RULE_KINDS = frozenset(DEFAULT_RULES.values())
_LIST_FIELDS = {
    "keyword": "keywords", "theme": "themes", "creator": "creators", "contributor": "contributors",
    "publisher": "publishers", "identifier": "identifiers", "language": "languages",
}


def is_absolute_uri(value: str) -> bool:
    if not value or any(ch.isspace() for ch in value):
        return False
    parts = urlsplit(value)
    if not parts.scheme or not _URI_LIKE.match(value):
        return False
    if parts.scheme in ("http", "https"):
        return bool(parts.netloc)
    return True


def valid_lang_tag(tag: str) -> bool:
    return bool(LANG_TAG.match(tag))


@dataclass(frozen=True)
class LangText:
    value: str
    lang: Optional[str] = None


@dataclass(frozen=True)
class Agent:
    name: Optional[str] = None
    uri: Optional[str] = None

    @classmethod
    def from_value(cls, value: str) -> "Agent":
        return cls(uri=value) if is_absolute_uri(value) else cls(name=value)


@dataclass(frozen=True)
class DcatDistribution:
    access_url: Optional[str]
    format: Optional[str] = None
    media_type: Optional[str] = None
    license: Optional[str] = None


@dataclass
class DcatDataset:
    uri: str
    titles: list[LangText] = field(default_factory=list)
    descriptions: list[LangText] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)
    themes: list[str] = field(default_factory=list)
    creators: list[Agent] = field(default_factory=list)
    contributors: list[Agent] = field(default_factory=list)
    publishers: list[Agent] = field(default_factory=list)
    issued: Optional[date] = None
    modified: Optional[date] = None
    identifiers: list[str] = field(default_factory=list)
    landing_page: Optional[str] = None
    languages: list[str] = field(default_factory=list)
    access_rights: Optional[str] = None
    distributions: list[DcatDistribution] = field(default_factory=list)
    source_identifier: Optional[str] = None


@dataclass(frozen=True)
class DcatCatalog:
    uri: str
    title: str
    description: str
    publisher: Agent
    dataset_uris: tuple[str, ...] = ()
    homepage: Optional[str] = None

    def __post_init__(self):
        if len(set(self.dataset_uris)) != len(self.dataset_uris):
            raise ValueError("catalog member URIs must be unique")


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def paths(self) -> list[str]:
        return [v.path for v in self.violations]


@dataclass
class ConversionReport:
    identifier: str
    outcome: str = "converted"
    dropped_fields: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def drop(self, term: str, value: str, reason: str) -> None:
        self.dropped_fields.append({"term": term, "value": value, "reason": reason})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TransformRules:
    """Per-target rule kinds plus the optional identifier/distribution rules."""

    rules: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_RULES))
    identifier_landing_page: bool = True
    distribution_from_landing_page: bool = False

    def __post_init__(self):
        bad = {k: v for k, v in self.rules.items() if v not in RULE_KINDS}
        if bad:
            raise ConfigError(f"unknown transform rule kinds: {bad}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "TransformRules":
        rules = dict(DEFAULT_RULES)
        rules.update(data.get("rules", {}))
        return cls(
            rules=rules,
            identifier_landing_page=bool(data.get("identifier_landing_page", True)),
            distribution_from_landing_page=bool(data.get("distribution_from_landing_page", False)),
        )


def mint_uri(base: str, oai_identifier: str) -> str:
    parts = urlsplit(base)
    if not parts.scheme or not parts.netloc:
        raise InvalidBase(f"base URI {base!r} is not absolute")
    return f"{base.rstrip('/')}/datasets/{quote(oai_identifier, safe='')}"


def catalog_uri(base: str, endpoint_id: str) -> str:
    parts = urlsplit(base)
    if not parts.scheme or not parts.netloc:
        raise InvalidBase(f"base URI {base!r} is not absolute")
    return f"{base.rstrip('/')}/catalogues/{quote(endpoint_id, safe='')}"


_DATE_FORMS = (
    (re.compile(r"^(\d{4})-(\d{2})-(\d{2})$"), "day"),
    (re.compile(r"^(\d{4})-(\d{2})-(\d{2})T\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?$"), "datetime"),
    (re.compile(r"^(\d{4})-(\d{2})$"), "month"),
    (re.compile(r"^(\d{4})$"), "year"),
)


def parse_date(value: str) -> tuple[Optional[date], Optional[str]]:
    """Parse an ISO-8601 date, date-time, year-month or year.

    Returns (date, note); partial dates expand to the first day and carry
    a note. Unparseable input gives (None, None).
    """
    text = value.strip()
    for pattern, kind in _DATE_FORMS:
        m = pattern.match(text)
        if not m:
            continue
        year = int(m.group(1))
        month = int(m.group(2)) if kind != "year" else 1
        day = int(m.group(3)) if kind in ("day", "datetime") else 1
        try:
            parsed = date(year, month, day)
        except ValueError:
            return None, None
        if kind == "datetime":
            try:
                datetime.fromisoformat(text.replace("Z", "+00:00"))
            except ValueError:
                return None, None
        note = None
        if kind in ("year", "month"):
            note = f"date {text!r} expanded to {parsed.isoformat()}"
        return parsed, note
    return None, None


def validate(dataset: DcatDataset) -> ValidationResult:
    v: list[Violation] = []
    if not is_absolute_uri(dataset.uri):
        v.append(Violation("uri", f"dataset URI {dataset.uri!r} is not absolute"))
    for prop, values in (("title", dataset.titles), ("description", dataset.descriptions)):
        if not any(t.value.strip() for t in values):
            v.append(Violation(prop, f"mandatory property {prop} absent"))
        for t in values:
            if t.lang is not None and not valid_lang_tag(t.lang):
                v.append(Violation(f"{prop}.lang", f"invalid language tag {t.lang!r}"))
    for i, dist in enumerate(dataset.distributions):
        if not dist.access_url:
            v.append(Violation("distribution.access_url", f"distribution #{i} lacks access_url"))
        elif not is_absolute_uri(dist.access_url):
            v.append(Violation("distribution.access_url", f"distribution #{i} access_url is not absolute"))
        if dist.license and not is_absolute_uri(dist.license):
            v.append(Violation("distribution.license", f"distribution #{i} license is not absolute"))
    for theme in dataset.themes:
        if not is_absolute_uri(theme):
            v.append(Violation("theme", f"theme {theme!r} is not an absolute URI"))
    if dataset.landing_page and not is_absolute_uri(dataset.landing_page):
        v.append(Violation("landingPage", f"landing page {dataset.landing_page!r} is not absolute"))
    for role in ("creators", "contributors", "publishers"):
        for agent in getattr(dataset, role):
            if agent.uri is not None and not is_absolute_uri(agent.uri):
                v.append(Violation(role[:-1], f"agent URI {agent.uri!r} is not absolute"))
            if agent.uri is None and not agent.name:
                v.append(Violation(role[:-1], "agent has neither name nor URI"))
    for lang in dataset.languages:
        if not valid_lang_tag(lang):
            v.append(Violation("language", f"invalid language tag {lang!r}"))
    return ValidationResult(tuple(v))


def convert(
    record: SourceRecord,
    mapping: MappingTable,
    rules: TransformRules | None = None,
    base: str = "",
) -> tuple[Optional[DcatDataset], ConversionReport]:
    """Map one record onto a DCAT-AP dataset.

    Never raises for data problems: unmapped or rejected values are listed in
    the report's ``dropped_fields``, and a dataset that fails validation is
    not emitted (outcome "rejected").
    """
    rules = rules or TransformRules()
    report = ConversionReport(record.identifier)
    report.diagnostics.extend(record.diagnostics)
    if record.schema_id != mapping.source_schema_id:
        report.outcome = "rejected"
        report.diagnostics.append(
            f"record schema {record.schema_id!r} does not match mapping source {mapping.source_schema_id!r}"
        )
        for fv in record.fields:
            report.drop(fv.term_name, fv.value, "no mapping for record schema")
        return None, report
    try:
        uri = mint_uri(base, record.identifier)
    except InvalidBase as exc:
        report.outcome = "rejected"
        report.diagnostics.append(str(exc))
        for fv in record.fields:
            report.drop(fv.term_name, fv.value, "no dataset URI")
        return None, report

    ds = DcatDataset(uri=uri, source_identifier=record.identifier)
    targets = mapping.as_dict()
    dated: dict[str, list[tuple[date, str, str]]] = {}

    for fv in record.fields:
        target = targets.get(fv.term_name)
        if target is None:
            report.drop(fv.term_name, fv.value, "unmapped")
            continue
        kind = rules.rules.get(target)
        if kind is None:
            report.drop(fv.term_name, fv.value, f"no transform rule for target {target}")
            continue
        value = fv.value
        if kind == "text":
            lang = fv.lang
            if lang is not None and not valid_lang_tag(lang):
                report.diagnostics.append(f"invalid language tag {lang!r} on {fv.term_name} removed")
                lang = None
            (ds.titles if target == "title" else ds.descriptions).append(LangText(value, lang))
        elif kind == "plain":
            getattr(ds, _LIST_FIELDS[target]).append(value)
        elif kind == "uri":
            if is_absolute_uri(value):
                getattr(ds, _LIST_FIELDS[target]).append(value)
            else:
                report.drop(fv.term_name, value, f"{target} requires an absolute URI")
        elif kind == "agent":
            getattr(ds, _LIST_FIELDS[target]).append(Agent.from_value(value))
        elif kind in ("date-earliest", "date-latest"):
            parsed, note = parse_date(value)
            if parsed is None:
                report.drop(fv.term_name, value, f"unparseable date for {target}")
                continue
            if note:
                report.diagnostics.append(note)
            dated.setdefault(target, []).append((parsed, fv.term_name, value))
        elif kind == "identifier":
            ds.identifiers.append(value)
            if (
                rules.identifier_landing_page
                and ds.landing_page is None
                and value.lower().startswith(("http://", "https://"))
                and is_absolute_uri(value)
            ):
                ds.landing_page = value
        elif kind == "language":
            if valid_lang_tag(value):
                ds.languages.append(value)
            else:
                report.drop(fv.term_name, value, "invalid language tag")
        elif kind == "single":
            if target == "accessRights" and ds.access_rights is None:
                ds.access_rights = value
            else:
                report.drop(fv.term_name, value, f"{target} is single-valued")
        elif kind == "uri-single":
            if not is_absolute_uri(value):
                report.drop(fv.term_name, value, f"{target} requires an absolute URI")
            elif target == "landingPage" and ds.landing_page is None:
                ds.landing_page = value
            else:
                report.drop(fv.term_name, value, f"{target} is single-valued")
        elif kind == "distribution":
            if is_absolute_uri(value):
                ds.distributions.append(DcatDistribution(access_url=value))
            else:
                report.drop(fv.term_name, value, "distribution access URL must be an absolute URI")

    for target, candidates in dated.items():
        latest = rules.rules.get(target) == "date-latest"
        chosen = max(candidates, key=lambda c: c[0]) if latest else min(candidates, key=lambda c: c[0])
        setattr(ds, target, chosen[0])
        for cand in candidates:
            if cand is not chosen:
                report.drop(cand[1], cand[2], f"superseded by {'later' if latest else 'earlier'} {target} date")

    if rules.distribution_from_landing_page and ds.landing_page and not ds.distributions:
        ds.distributions.append(DcatDistribution(access_url=ds.landing_page))

    result = validate(ds)
    if not result.ok:
        report.outcome = "rejected"
        report.diagnostics.extend(v.message for v in result.violations)
        return None, report
    return ds, report


@dataclass(frozen=True)
class CatalogMeta:
    title: str
    description: str
    publisher: str
    homepage: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Mapping, where: str = "catalog") -> "CatalogMeta":
        missing = [k for k in ("title", "description", "publisher") if not data.get(k)]
        if missing:
            raise ConfigError(f"{where}: missing mandatory catalog metadata {missing}")
        return cls(data["title"], data["description"], data["publisher"], data.get("homepage"))


def build_catalog(
    endpoint_id: str,
    meta: CatalogMeta | Mapping,
    datasets: Iterable[DcatDataset | str],
    base: str,
    tombstones: Iterable[str] = (),
) -> DcatCatalog:
    if not isinstance(meta, CatalogMeta):
        meta = CatalogMeta.from_dict(meta, f"endpoint {endpoint_id!r}")
    for key in ("title", "description", "publisher"):
        if not getattr(meta, key):
            raise ConfigError(f"endpoint {endpoint_id!r}: missing mandatory catalog metadata {key!r}")
    dead = set(tombstones)
    uris, seen = [], set()
    for ds in datasets:
        uri = ds if isinstance(ds, str) else ds.uri
        if uri in dead:
            continue
        if uri in seen:
            log.warning("catalog %s: duplicate dataset %s dropped", endpoint_id, uri)
            continue
        seen.add(uri)
        uris.append(uri)
    return DcatCatalog(
        uri=catalog_uri(base, endpoint_id),
        title=meta.title,
        description=meta.description,
        publisher=Agent.from_value(meta.publisher),
        dataset_uris=tuple(sorted(uris)),
        homepage=meta.homepage,
    )
