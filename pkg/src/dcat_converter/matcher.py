"""Similarity-based schema matching from a source vocabulary onto DCAT-AP.

Each term is scored over three text channels (label, comment, definition).
The default similarity is a cosine over sparse lexical vectors: word tokens
plus character trigrams. A :class:`SimilarityProvider` can replace it, e.g.
with an embedding service reached through :class:`RemoteProvider`.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from .errors import ConfigError, ParseError, UnknownTerm
from .schema import SchemaDescriptor, TermDescriptor

CHANNELS = ("label", "comment", "definition")
METHODS = ("exact-label", "lexical", "provider", "manual")
TRIGRAM_FACTOR = 0.5
SCORE_DIGITS = 12

_CAMEL = re.compile(r"([a-z0-9])([A-Z])")
_SPLIT = re.compile(r"[^0-9A-Za-z]+")


def normalize(text: str) -> list[str]:
    """Lowercased tokens split on non-alphanumerics and camel-case humps."""
    if not text:
        return []
    text = _CAMEL.sub(r"\1 \2", text)
    return [tok for tok in _SPLIT.split(text.lower()) if tok]


class TermVector(dict):
    """Sparse feature vector. Keys are ``("tok", token)`` or ``("tri", trigram)``."""

    def tokens(self) -> dict[str, float]:
        return {k[1]: w for k, w in self.items() if k[0] == "tok"}

    def trigrams(self) -> dict[str, float]:
        return {k[1]: w for k, w in self.items() if k[0] == "tri"}

    @property
    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.values()))


def vectorize(text: str) -> TermVector:
    toks = normalize(text)
    counts: Counter = Counter()
    for tok in toks:
        counts[("tok", tok)] += 1.0
    if toks:
        padded = f" {' '.join(toks)} "
        for i in range(len(padded) - 2):
            counts[("tri", padded[i:i + 3])] += TRIGRAM_FACTOR
    return TermVector((k, w) for k, w in sorted(counts.items()) if w > 0)


def cosine(a: Mapping, b: Mapping) -> float:
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(w * b.get(k, 0.0) for k, w in a.items())
    na = math.sqrt(sum(w * w for w in a.values()))
    nb = math.sqrt(sum(w * w for w in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return min(1.0, max(0.0, dot / (na * nb)))


class SimilarityProvider(Protocol):
    method: str

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        ...


class LexicalProvider:
    method = "lexical"

    def __init__(self):
        self._cache: dict[str, TermVector] = {}

    def _vec(self, text: str) -> TermVector:
        vec = self._cache.get(text)
        if vec is None:
            vec = self._cache[text] = vectorize(text)
        return vec

    def score_pairs(self, pairs):
        return [cosine(self._vec(a), self._vec(b)) for a, b in pairs]


class RemoteProvider:
    """Scores text pairs through an HTTP service.

    Request body ``{"pairs": [[a, b], ...]}``; response ``{"scores": [...]}``
    with one score in [0, 1] per pair.
    """

    method = "provider"

    def __init__(self, url: str, timeout: float = 30.0, session=None):
        self.url = url
        self.timeout = timeout
        self._session = session

    def score_pairs(self, pairs):
        import requests

        from .errors import NetworkError

        session = self._session or requests
        try:
            resp = session.post(self.url, json={"pairs": [list(p) for p in pairs]}, timeout=self.timeout)
            resp.raise_for_status()
            scores = resp.json()["scores"]
        except requests.RequestException as exc:
            raise NetworkError(f"similarity provider failed: {exc}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"similarity provider returned a malformed body: {exc}") from exc
        if len(scores) != len(pairs):
            raise ParseError("similarity provider returned the wrong number of scores")
        return [min(1.0, max(0.0, float(s))) for s in scores]


@dataclass(frozen=True)
class MatcherConfig:
    weights: tuple[float, float, float] = (0.5, 0.2, 0.3)
    threshold: float = 0.35
    top_k: int = 5
    provider: Optional[SimilarityProvider] = field(default=None, compare=False)

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != 3:
            raise ConfigError("weights must have exactly three entries (label, comment, definition)")
        if any(w < 0 or math.isnan(w) for w in weights) or sum(weights) == 0:
            raise ConfigError(f"weights must be non-negative and not all zero: {weights}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} outside [0, 1]")
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        object.__setattr__(self, "weights", weights)

    def to_dict(self) -> dict:
        return {
            "weights": dict(zip(CHANNELS, self.weights)),
            "threshold": self.threshold,
            "top_k": self.top_k,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MatcherConfig":
        kwargs = {}
        if "weights" in data:
            w = data["weights"]
            if isinstance(w, Mapping):
                unknown = set(w) - set(CHANNELS)
                if unknown:
                    raise ConfigError(f"unknown weight channels: {sorted(unknown)}")
                defaults = dict(zip(CHANNELS, cls.weights))
                defaults.update(w)
                w = [defaults[c] for c in CHANNELS]
            kwargs["weights"] = tuple(w)
        if "threshold" in data:
            kwargs["threshold"] = float(data["threshold"])
        if "top_k" in data:
            kwargs["top_k"] = int(data["top_k"])
        if data.get("provider_url"):
            kwargs["provider"] = RemoteProvider(data["provider_url"])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class AlignmentEntry:
    source_term: str
    target_term: str
    score: float
    method: str
    channel_scores: Optional[tuple[Optional[float], Optional[float], Optional[float]]] = None
    target_uri: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.method == "exact-label" and self.score != 1.0:
            raise ValueError("exact-label entries must score 1.0")
        if self.method == "manual" and self.channel_scores is not None:
            raise ValueError("manual entries carry no channel scores")

    def to_dict(self, with_channels: bool = False) -> dict:
        out = {
            "source_term": self.source_term,
            "target_term": self.target_term,
            "score": self.score,
            "method": self.method,
        }
        if with_channels:
            out["channel_scores"] = (
                dict(zip(CHANNELS, self.channel_scores)) if self.channel_scores else None
            )
        return out


@dataclass(frozen=True)
class MappingTable:
    source_schema_id: str
    target_schema_id: str
    entries: tuple[AlignmentEntry, ...]
    unmapped: tuple[str, ...]
    # ranked candidates per source term, kept for the match report only
    candidates: Mapping[str, tuple[AlignmentEntry, ...]] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "unmapped", tuple(self.unmapped))
        names = [e.source_term for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("a source term appears more than once in entries")
        if set(names) & set(self.unmapped):
            raise ValueError("a source term is both mapped and unmapped")

    def entry_for(self, source_term: str) -> Optional[AlignmentEntry]:
        for e in self.entries:
            if e.source_term == source_term:
                return e
        return None

    def as_dict(self) -> dict[str, str]:
        return {e.source_term: e.target_term for e in self.entries}

    def covers(self, schema: SchemaDescriptor) -> bool:
        names = [e.source_term for e in self.entries] + list(self.unmapped)
        return sorted(names) == sorted(schema.names)

    def to_dict(self) -> dict:
        return {
            "source": self.source_schema_id,
            "target": self.target_schema_id,
            "entries": [e.to_dict() for e in self.entries],
            "unmapped": list(self.unmapped),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "MappingTable":
        try:
            entries = [
                AlignmentEntry(
                    e["source_term"], e["target_term"], float(e.get("score", 1.0)), e.get("method", "manual")
                )
                for e in data["entries"]
            ]
            return cls(data["source"], data["target"], tuple(entries), tuple(data.get("unmapped", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed mapping table: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "MappingTable":
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ParseError(f"mapping table is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _text(term: TermDescriptor, channel: str) -> str:
    return getattr(term, channel) or ""


def _rank_key(entry: AlignmentEntry):
    return (-entry.score, entry.target_uri, entry.target_term)


def score_term(
    source: TermDescriptor,
    targets: Sequence[TermDescriptor],
    config: MatcherConfig,
    provider: SimilarityProvider,
) -> list[AlignmentEntry]:
    """Score one source term against every target; best candidate first."""
    src_label = normalize(source.label)
    out = []
    pairs, slots = [], []
    for ti, tgt in enumerate(targets):
        if src_label and src_label == normalize(tgt.label):
            out.append(AlignmentEntry(source.name, tgt.name, 1.0, "exact-label", None, tgt.uri))
            continue
        for ci, channel in enumerate(CHANNELS):
            a, b = _text(source, channel), _text(tgt, channel)
            if a and b:
                pairs.append((a, b))
                slots.append((ti, ci))
    scores = provider.score_pairs(pairs) if pairs else []

    per_target: dict[int, list[Optional[float]]] = {}
    for (ti, ci), s in zip(slots, scores):
        per_target.setdefault(ti, [None, None, None])[ci] = s
    exact = {e.target_term for e in out}
    for ti, tgt in enumerate(targets):
        if tgt.name in exact:
            continue
        channel_scores = per_target.get(ti, [None, None, None])
        total_w = sum(w for w, s in zip(config.weights, channel_scores) if s is not None)
        if total_w > 0:
            # divide first: tiny weights would underflow in w * s
            raw = sum((w / total_w) * s for w, s in zip(config.weights, channel_scores) if s is not None)
        else:
            raw = 0.0
        score = round(min(1.0, max(0.0, raw)), SCORE_DIGITS)
        out.append(
            AlignmentEntry(source.name, tgt.name, score, provider.method, tuple(channel_scores), tgt.uri)
        )
    out.sort(key=_rank_key)
    return out


def match_schemas(
    source: SchemaDescriptor, target: SchemaDescriptor, config: MatcherConfig | None = None
) -> MappingTable:
    """Align every source term with its best target term.

    An identical normalized label short-circuits to score 1.0. Otherwise the
    best candidate wins when its score reaches the threshold; ties go to the
    lexicographically smallest target URI.
    """
    config = config or MatcherConfig()
    provider = config.provider or LexicalProvider()
    entries, unmapped, candidates = [], [], {}
    for term in source.terms:
        ranked = score_term(term, target.terms, config, provider)
        candidates[term.name] = tuple(ranked[: config.top_k])
        best = ranked[0] if ranked else None
        if best is not None and best.score > 0 and best.score >= config.threshold:
            entries.append(best)
        else:
            unmapped.append(term.name)
    return MappingTable(source.id, target.id, tuple(entries), tuple(unmapped), candidates)


@dataclass(frozen=True)
class Override:
    """A curator decision: pin ``source_term`` to ``target_term`` or remove it."""

    source_term: str
    target_term: Optional[str] = None

    @property
    def remove(self) -> bool:
        return self.target_term is None


def load_overrides(text: str) -> tuple[Optional[str], list[Override]]:
    """Parse an override file; returns (source schema id or None, overrides)."""
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"override file is not valid JSON: {exc}") from exc
    if isinstance(data, list):
        data = {"overrides": data}
    out = []
    for raw in data.get("overrides", []):
        if raw.get("remove"):
            out.append(Override(raw["source_term"]))
        elif raw.get("target_term"):
            out.append(Override(raw["source_term"], raw["target_term"]))
        else:
            raise ParseError(f"override for {raw.get('source_term')!r} needs target_term or remove")
    return data.get("source"), out


def apply_overrides(
    table: MappingTable,
    overrides: Iterable[Override],
    source: SchemaDescriptor | None = None,
    target: SchemaDescriptor | None = None,
) -> MappingTable:
    known = set(source.names) if source else {e.source_term for e in table.entries} | set(table.unmapped)
    entries = {e.source_term: e for e in table.entries}
    unmapped = list(table.unmapped)
    for ov in overrides:
        if ov.source_term not in known:
            raise UnknownTerm(f"override names unknown source term {ov.source_term!r}")
        if target is not None and ov.target_term is not None and ov.target_term not in target:
            raise UnknownTerm(f"override names unknown target term {ov.target_term!r}")
        entries.pop(ov.source_term, None)
        if ov.source_term in unmapped:
            unmapped.remove(ov.source_term)
        if ov.remove:
            unmapped.append(ov.source_term)
        else:
            uri = target.term(ov.target_term).uri if target is not None else ""
            entries[ov.source_term] = AlignmentEntry(ov.source_term, ov.target_term, 1.0, "manual", None, uri)

    order = source.names if source else [e.source_term for e in table.entries] + list(table.unmapped)
    pos = {name: i for i, name in enumerate(order)}
    new_entries = sorted(entries.values(), key=lambda e: pos.get(e.source_term, len(pos)))
    new_unmapped = sorted(unmapped, key=lambda n: pos.get(n, len(pos)))
    return replace(table, entries=tuple(new_entries), unmapped=tuple(new_unmapped))


def match_report(table: MappingTable, config: MatcherConfig) -> dict:
    return {
        "source": table.source_schema_id,
        "target": table.target_schema_id,
        "config": config.to_dict(),
        "terms": [
            {
                "source_term": name,
                "chosen": (table.entry_for(name).target_term if table.entry_for(name) else None),
                "candidates": [c.to_dict(with_channels=True) for c in cands],
            }
            for name, cands in table.candidates.items()
        ],
    }
