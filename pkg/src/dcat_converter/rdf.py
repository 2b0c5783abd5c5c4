"""A small RDF toolkit: terms, graphs, deterministic Turtle and RDF/XML output.

The Turtle parser only covers the subset the serializer writes (plus
comments, ``PREFIX`` directives and single-quoted strings); it exists so
that output can be round-tripped in tests and re-read from the store.
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union
from xml.sax.saxutils import escape as xml_escape
from xml.sax.saxutils import quoteattr

from .errors import ParseError, TooLarge

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
XSD = "http://www.w3.org/2001/XMLSchema#"
DCAT = "http://www.w3.org/ns/dcat#"
DCT = "http://purl.org/dc/terms/"
FOAF = "http://xmlns.com/foaf/0.1/"

RDF_TYPE = RDF + "type"
XSD_STRING = XSD + "string"
XSD_DATE = XSD + "date"

PREFIXES = (("dcat", DCAT), ("dct", DCT), ("foaf", FOAF), ("xsd", XSD))

# Predicates written first, in this order; anything else follows lexicographically.
PREDICATE_ORDER = (
    RDF_TYPE,
    DCT + "title",
    DCT + "description",
    DCAT + "keyword",
    DCAT + "theme",
    DCT + "creator",
    DCT + "contributor",
    DCT + "publisher",
    DCT + "issued",
    DCT + "modified",
    DCT + "identifier",
    DCAT + "landingPage",
    DCT + "language",
    DCT + "accessRights",
    DCAT + "distribution",
    DCAT + "dataset",
    FOAF + "homepage",
    FOAF + "name",
    DCAT + "accessURL",
    DCT + "format",
    DCAT + "mediaType",
    DCT + "license",
)
_PRED_RANK = {iri: i for i, iri in enumerate(PREDICATE_ORDER)}

MAX_ISO_BNODES = 12


@dataclass(frozen=True, order=True)
class IRI:
    value: str

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=True)
class BNode:
    id: str

    def __str__(self):
        return f"_:{self.id}"


def normalize_lang(tag: str) -> str:
    primary, sep, rest = tag.partition("-")
    return primary.lower() + sep + rest


@dataclass(frozen=True)
class Literal:
    lexical: str
    lang: Optional[str] = None
    datatype: Optional[str] = None

    def __post_init__(self):
        if self.lang is not None and self.datatype is not None:
            raise ValueError("a literal cannot carry both a language tag and a datatype")
        if self.lang is not None:
            object.__setattr__(self, "lang", normalize_lang(self.lang))
        if self.datatype == XSD_STRING:
            object.__setattr__(self, "datatype", None)

    def __str__(self):
        return self.lexical


Term = Union[IRI, BNode, Literal]
Triple = tuple[Union[IRI, BNode], IRI, Term]


class Graph:
    """A set of triples."""

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: set[Triple] = set()
        for t in triples:
            self.add(*t)

    def add(self, s, p, o) -> None:
        if isinstance(s, Literal):
            raise ValueError("literals cannot be subjects")
        if not isinstance(p, IRI):
            raise ValueError("predicates must be IRIs")
        self._triples.add((s, p, o))

    def update(self, other: Iterable[Triple]) -> None:
        for t in other:
            self.add(*t)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __len__(self):
        return len(self._triples)

    def __contains__(self, triple):
        return triple in self._triples

    def __eq__(self, other):
        return isinstance(other, Graph) and self._triples == other._triples

    def __repr__(self):
        return f"<Graph {len(self)} triples>"

    def triples(self, s=None, p=None, o=None) -> Iterator[Triple]:
        for t in self._triples:
            if (s is None or t[0] == s) and (p is None or t[1] == p) and (o is None or t[2] == o):
                yield t

    def objects(self, s, p) -> list[Term]:
        return [t[2] for t in self.triples(s, p)]

    def value(self, s, p) -> Optional[Term]:
        objs = sorted(self.objects(s, p), key=_object_key)
        return objs[0] if objs else None

    def subjects_of_type(self, rdf_class: str) -> list[IRI]:
        return sorted(
            (t[0] for t in self.triples(None, IRI(RDF_TYPE), IRI(rdf_class))),
            key=lambda s: (isinstance(s, BNode), str(s)),
        )

    def bnodes(self) -> set[BNode]:
        out = set()
        for s, _, o in self._triples:
            if isinstance(s, BNode):
                out.add(s)
            if isinstance(o, BNode):
                out.add(o)
        return out

    def describe(self, root) -> "Graph":
        """Triples of ``root`` plus everything reachable from it through blank nodes."""
        out, todo, seen = Graph(), [root], {root}
        while todo:
            node = todo.pop()
            for t in self.triples(node):
                out.add(*t)
                if isinstance(t[2], BNode) and t[2] not in seen:
                    seen.add(t[2])
                    todo.append(t[2])
        return out


# --- deterministic layout shared by both writers ---------------------------


def _pred_key(p: IRI):
    rank = _PRED_RANK.get(p.value)
    return (0, rank, "") if rank is not None else (1, 0, p.value)


def _ground_key(o: Term):
    if isinstance(o, IRI):
        return (0, o.value, "", "")
    if isinstance(o, Literal):
        return (1, o.lexical, o.lang or "", o.datatype or "")
    return (2, "", "", "")


def _object_key(o: Term, sigs=None):
    if isinstance(o, BNode):
        return (2, sigs.get(o, ()) if sigs else (), o.id)
    k = _ground_key(o)
    return (k[0], k[1:], "")


def _layout(graph: Graph):
    """Order subjects/predicates/objects and assign ``b0, b1, ...`` labels."""
    by_subject: dict = defaultdict(list)
    for s, p, o in graph:
        by_subject[s].append((p, o))
    sigs = {
        b: tuple(sorted((p.value,) + _ground_key(o) for p, o in by_subject.get(b, ())))
        for b in graph.bnodes()
    }

    labels: dict[BNode, str] = {}
    queue: list[BNode] = []

    def label(b: BNode):
        if b not in labels:
            labels[b] = f"b{len(labels)}"
            queue.append(b)

    def sorted_pos(subject):
        pos = sorted(by_subject[subject], key=lambda po: (_pred_key(po[0]), _object_key(po[1], sigs)))
        for _, o in pos:
            if isinstance(o, BNode):
                label(o)
        return pos

    blocks = []
    for subject in sorted((s for s in by_subject if isinstance(s, IRI)), key=lambda s: s.value):
        blocks.append((subject, sorted_pos(subject)))

    orphans = sorted((b for b in by_subject if isinstance(b, BNode)), key=lambda b: (sigs[b], b.id))
    done: set[BNode] = set()
    i = 0
    while True:
        while i < len(queue):
            b = queue[i]
            i += 1
            if b in by_subject and b not in done:
                done.add(b)
                blocks.append((b, sorted_pos(b)))
        remaining = [b for b in orphans if b not in labels]
        if not remaining:
            break
        label(remaining[0])
    return blocks, labels


# --- Turtle ------------------------------------------------------------------

_PN_LOCAL = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
_IRI_FORBIDDEN = re.compile(r'[\x00-\x20<>"{}|^`\\]')
_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t", "\b": "\\b", "\f": "\\f"}
_STRING_ESCAPE_RE = re.compile(r'[\\"\x00-\x1f\x7f]')


def _escape_string(text: str) -> str:
    def sub(m):
        ch = m.group(0)
        return _STRING_ESCAPES.get(ch) or f"\\u{ord(ch):04X}"

    return _STRING_ESCAPE_RE.sub(sub, text)


def _iri_ref(value: str) -> str:
    return "<" + _IRI_FORBIDDEN.sub(lambda m: f"\\u{ord(m.group(0)):04X}", value) + ">"


def _turtle_iri(value: str) -> str:
    for prefix, ns in PREFIXES:
        if value.startswith(ns) and _PN_LOCAL.match(value[len(ns):]):
            return f"{prefix}:{value[len(ns):]}"
    return _iri_ref(value)


def _turtle_term(term: Term, labels) -> str:
    if isinstance(term, IRI):
        return _turtle_iri(term.value)
    if isinstance(term, BNode):
        return f"_:{labels[term]}"
    out = f'"{_escape_string(term.lexical)}"'
    if term.lang:
        out += "@" + term.lang
    elif term.datatype:
        out += "^^" + _turtle_iri(term.datatype)
    return out


def serialize_turtle(graph: Graph) -> str:
    lines = [f"@prefix {prefix}: <{ns}> ." for prefix, ns in PREFIXES]
    blocks, labels = _layout(graph)
    for subject, pos in blocks:
        lines.append("")
        lines.append(_turtle_term(subject, labels))
        grouped: list[tuple[IRI, list[Term]]] = []
        for p, o in pos:
            if grouped and grouped[-1][0] == p:
                grouped[-1][1].append(o)
            else:
                grouped.append((p, [o]))
        for gi, (p, objs) in enumerate(grouped):
            verb = "a" if p.value == RDF_TYPE else _turtle_iri(p.value)
            rendered = (",\n        ").join(_turtle_term(o, labels) for o in objs)
            end = " ." if gi == len(grouped) - 1 else " ;"
            lines.append(f"    {verb} {rendered}{end}")
    return "\n".join(lines) + "\n"


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><(?:[^<>"{}|^`\\\x00-\x20]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>)
  | (?P<string>"(?:[^"\\\n\r]|\\.)*"|'(?:[^'\\\n\r]|\\.)*')
  | (?P<bnode>_:[A-Za-z0-9_](?:[A-Za-z0-9_.-]*[A-Za-z0-9_-])?)
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<pname>(?:[A-Za-z][A-Za-z0-9_-]*)?:(?:[A-Za-z0-9_](?:[A-Za-z0-9_.-]*[A-Za-z0-9_-])?)?)
  | (?P<kw>\bPREFIX\b|\ba\b)
  | (?P<punct>[.;,])
    """,
    re.VERBOSE,
)

_UNESCAPE_RE = re.compile(r"\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8}|.)", re.DOTALL)
_SIMPLE_UNESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(text: str, iri: bool = False) -> str:
    def sub(m):
        code = m.group(1)
        if code[0] in "uU" and len(code) > 1:
            cp = int(code[1:], 16)
            if cp > 0x10FFFF or 0xD800 <= cp <= 0xDFFF:
                raise ParseError(f"escape \\{code} is not a Unicode scalar value")
            return chr(cp)
        if iri or code not in _SIMPLE_UNESCAPES:
            raise ParseError(f"invalid escape sequence \\{code}")
        return _SIMPLE_UNESCAPES[code]

    return _UNESCAPE_RE.sub(sub, text)


def _tokenize(text: str):
    pos, line = 0, 1
    while pos < len(text):
        if text.startswith("@prefix", pos) and not text[pos + 7: pos + 8].isalnum():
            yield ("prefix_dir", "@prefix", line)
            pos += 7
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"line {line}: unexpected input {text[pos:pos + 20]!r}")
        kind = m.lastgroup
        value = m.group(0)
        if kind != "ws":
            if kind == "kw" and value == "PREFIX":
                kind = "prefix_dir"
            yield (kind, value, line)
        line += value.count("\n")
        pos = m.end()


def parse_turtle(text: str, bnode_scope: str = "") -> Graph:
    """Parse the Turtle subset produced by :func:`serialize_turtle`.

    ``bnode_scope`` is prepended to every blank node label, so graphs parsed
    from separate documents can be merged without label collisions.
    """
    tokens = list(_tokenize(text))
    prefixes: dict[str, str] = {}
    graph = Graph()
    i = 0

    def peek():
        return tokens[i] if i < len(tokens) else (None, None, tokens[-1][2] if tokens else 1)

    def take(kind=None):
        nonlocal i
        tok = peek()
        if tok[0] is None:
            raise ParseError("unexpected end of document")
        if kind and tok[0] != kind:
            raise ParseError(f"line {tok[2]}: expected {kind}, found {tok[1]!r}")
        i += 1
        return tok

    def resolve_pname(value, line):
        prefix, _, local = value.partition(":")
        if prefix not in prefixes:
            raise ParseError(f"line {line}: undeclared prefix {prefix!r}")
        return prefixes[prefix] + local

    def iri_term(tok):
        kind, value, line = tok
        if kind == "iri":
            return IRI(_unescape(value[1:-1], iri=True))
        if kind == "pname":
            return IRI(resolve_pname(value, line))
        raise ParseError(f"line {line}: expected an IRI, found {value!r}")

    def node(tok):
        if tok[0] == "bnode":
            return BNode(bnode_scope + tok[1][2:])
        return iri_term(tok)

    def obj():
        tok = take()
        if tok[0] == "string":
            lexical = _unescape(tok[1][1:-1])
            nxt = peek()
            if nxt[0] == "lang":
                take()
                return Literal(lexical, lang=nxt[1][1:])
            if nxt[0] == "dtype":
                take()
                return Literal(lexical, datatype=iri_term(take()).value)
            return Literal(lexical)
        return node(tok)

    while i < len(tokens):
        tok = peek()
        if tok[0] == "prefix_dir":
            sparql = tok[1] == "PREFIX"
            take()
            name = take("pname")
            if not name[1].endswith(":"):
                raise ParseError(f"line {name[2]}: malformed prefix name {name[1]!r}")
            prefixes[name[1][:-1]] = _unescape(take("iri")[1][1:-1], iri=True)
            if not sparql:
                end = take("punct")
                if end[1] != ".":
                    raise ParseError(f"line {end[2]}: prefix directive must end with '.'")
            continue

        subject = node(take())
        while True:
            vt = take()
            if vt[0] == "kw" and vt[1] == "a":
                verb = IRI(RDF_TYPE)
            else:
                verb = iri_term(vt)
            while True:
                graph.add(subject, verb, obj())
                nxt = peek()
                if nxt[1] == ",":
                    take()
                    continue
                break
            nxt = take()
            if nxt[0] != "punct":
                raise ParseError(f"line {nxt[2]}: expected '.', ';' or ',', found {nxt[1]!r}")
            if nxt[1] == ".":
                break
            if nxt[1] == ";":
                if peek()[1] == ".":
                    take()
                    break
                continue
            raise ParseError(f"line {nxt[2]}: unexpected {nxt[1]!r}")
    return graph


# --- RDF/XML -----------------------------------------------------------------

_NCNAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")
# characters XML 1.0 cannot carry at all, not even as character references
_XML_ILLEGAL = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff]")
_XML_PREFIXES = (("dcat", DCAT), ("dct", DCT), ("foaf", FOAF), ("rdf", RDF))


def _split_iri(value: str) -> tuple[str, str]:
    cut = max(value.rfind("#"), value.rfind("/"))
    ns, local = value[: cut + 1], value[cut + 1:]
    if not local or not _NCNAME.match(local):
        raise ValueError(f"predicate {value!r} cannot be written as an XML element name")
    return ns, local


def serialize_rdfxml(graph: Graph) -> str:
    blocks, labels = _layout(graph)
    known = dict((ns, prefix) for prefix, ns in _XML_PREFIXES)
    extra = sorted({_split_iri(p.value)[0] for _, pos in blocks for p, _ in pos} - set(known))
    for n, ns in enumerate(extra):
        known[ns] = f"ns{n}"

    def qname(iri: str) -> str:
        ns, local = _split_iri(iri)
        return f"{known[ns]}:{local}"

    decls = sorted((prefix, ns) for ns, prefix in known.items())
    out = ['<?xml version="1.0" encoding="utf-8"?>', "<rdf:RDF"]
    out.extend(f"   xmlns:{prefix}={quoteattr(ns)}" for prefix, ns in decls)
    out[-1] += ">"
    for subject, pos in blocks:
        if isinstance(subject, IRI):
            out.append(f"  <rdf:Description rdf:about={quoteattr(subject.value)}>")
        else:
            out.append(f'  <rdf:Description rdf:nodeID="{labels[subject]}">')
        for p, o in pos:
            name = qname(p.value)
            if isinstance(o, IRI):
                out.append(f"    <{name} rdf:resource={quoteattr(o.value)}/>")
            elif isinstance(o, BNode):
                out.append(f'    <{name} rdf:nodeID="{labels[o]}"/>')
            else:
                attr = ""
                if o.lang:
                    attr = f" xml:lang={quoteattr(o.lang)}"
                elif o.datatype:
                    attr = f" rdf:datatype={quoteattr(o.datatype)}"
                if _XML_ILLEGAL.search(o.lexical):
                    raise ValueError(f"literal {o.lexical!r} contains characters XML 1.0 cannot represent")
                text = xml_escape(o.lexical, {"\r": "&#13;"})
                out.append(f"    <{name}{attr}>{text}</{name}>")
        out.append("  </rdf:Description>")
    out.append("</rdf:RDF>")
    return "\n".join(out) + "\n"


# --- isomorphism oracle --------------------------------------------------------


def _bnode_colors(triples: list[Triple], nodes: set[BNode], rounds: int = 3) -> dict[BNode, object]:
    color = {b: 0 for b in nodes}
    for _ in range(rounds):
        feats: dict[BNode, Counter] = {b: Counter() for b in nodes}
        for s, p, o in triples:
            so = color[o] if isinstance(o, BNode) else _ground_key(o)
            ss = color[s] if isinstance(s, BNode) else _ground_key(s)
            if isinstance(s, BNode):
                feats[s][("out", p.value, isinstance(o, BNode), so)] += 1
            if isinstance(o, BNode):
                feats[o][("in", p.value, isinstance(s, BNode), ss)] += 1
        color = {b: hash((color[b], tuple(sorted(feats[b].items(), key=repr)))) for b in nodes}
    return color


def isomorphic(a: Graph, b: Graph, limit: int = MAX_ISO_BNODES) -> bool:
    """True iff some blank-node bijection maps ``a`` exactly onto ``b``.

    Exhaustive search over bijections, pruned by a ground-triple pre-check,
    colour classes and partial-triple consistency. Raises :class:`TooLarge`
    beyond ``limit`` blank nodes.
    """
    ba, bb = a.bnodes(), b.bnodes()
    if len(ba) > limit or len(bb) > limit:
        raise TooLarge(f"isomorphism oracle handles at most {limit} blank nodes")
    if len(a) != len(b) or len(ba) != len(bb):
        return False

    def ground(t):
        return not isinstance(t[0], BNode) and not isinstance(t[2], BNode)

    if {t for t in a if ground(t)} != {t for t in b if ground(t)}:
        return False
    ta = [t for t in a if not ground(t)]
    tb = set(t for t in b if not ground(t))
    if not ba:
        return True

    ca, cb = _bnode_colors(ta, ba), _bnode_colors(list(tb), bb)
    if sorted(Counter(ca.values()).items()) != sorted(Counter(cb.values()).items()):
        return False
    candidates = {x: [y for y in bb if cb[y] == ca[x]] for x in ba}
    order = sorted(ba, key=lambda x: (len(candidates[x]), x.id))
    touching: dict[BNode, list[Triple]] = defaultdict(list)
    for t in ta:
        for term in (t[0], t[2]):
            if isinstance(term, BNode):
                touching[term].append(t)

    mapping: dict[BNode, BNode] = {}
    used: set[BNode] = set()

    def image(term):
        return mapping.get(term) if isinstance(term, BNode) else term

    def consistent(x):
        for s, p, o in touching[x]:
            ms, mo = image(s), image(o)
            if ms is None or mo is None:
                continue
            if (ms, p, mo) not in tb:
                return False
        return True

    def search(k):
        if k == len(order):
            return True
        x = order[k]
        for y in candidates[x]:
            if y in used:
                continue
            mapping[x] = y
            used.add(y)
            if consistent(x) and search(k + 1):
                return True
            del mapping[x]
            used.discard(y)
        return False

    return search(0)
