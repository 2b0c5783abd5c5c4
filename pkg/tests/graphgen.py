"""Random small graphs for round-trip and isomorphism tests."""

import random

from hypothesis import strategies as st

from dcat_converter.rdf import DCAT, DCT, FOAF, RDF_TYPE, XSD, XSD_DATE, BNode, Graph, IRI, Literal

PREDICATES = [IRI(RDF_TYPE), IRI(DCT + "title"), IRI(DCT + "creator"), IRI(DCAT + "keyword"), IRI(FOAF + "name"),
              IRI("http://example.org/vocab#p"), IRI("http://example.org/vocab/with-dash_1.x")]
IRIS = [IRI("https://bop.example/datasets/oai%3Atu%3A1"), IRI("https://bop.example/catalogues/tu"),
        IRI(DCAT + "Dataset"), IRI("urn:uuid:1234"), IRI("http://example.org/a(b)"), IRI("http://example.org/é")]
LEXICALS = ["", "plain", 'quote " inside', "line\nbreak", "tab\tand\\backslash", "Müller ≤ °C", "emoji \U0001F600",
            "\x00ctrl\x1f", "'single'", "trailing space ", " sep", "1.5", "2021-05-03"]


def random_literal(rng: random.Random) -> Literal:
    text = rng.choice(LEXICALS)
    roll = rng.random()
    if roll < 0.2:
        return Literal(text, lang=rng.choice(["en", "de-AT", "EN-us"]))
    if roll < 0.35:
        return Literal(text, datatype=rng.choice([XSD_DATE, XSD + "integer", "http://example.org/dt"]))
    return Literal(text)


def random_graph(rng: random.Random, max_bnodes: int = 12, max_triples: int = 25, fill: bool = False) -> Graph:
    """With fill=True the graph uses exactly max_bnodes blank nodes."""
    n = max_bnodes if fill else rng.randint(0, max_bnodes)
    bnodes = [BNode(f"x{rng.randrange(10**6)}_{i}") for i in range(n)]
    g = Graph()
    for _ in range(rng.randint(0, max_triples)):
        subj = rng.choice(IRIS + bnodes) if bnodes else rng.choice(IRIS)
        roll = rng.random()
        if roll < 0.4:
            obj = random_literal(rng)
        elif roll < 0.7 and bnodes:
            obj = rng.choice(bnodes)
        else:
            obj = rng.choice(IRIS)
        g.add(subj, rng.choice(PREDICATES), obj)
    if fill:
        used = g.bnodes()
        for b in bnodes:
            if b not in used:
                g.add(rng.choice(IRIS), rng.choice(PREDICATES), b)
    return g


def _literal_strategy():
    lexical = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)
    return st.one_of(
        st.builds(Literal, lexical),
        st.builds(lambda t, tag: Literal(t, lang=tag), lexical, st.sampled_from(["en", "de-AT", "fr-CA"])),
        st.builds(lambda t: Literal(t, datatype=XSD_DATE), lexical),
    )


@st.composite
def graphs(draw, max_bnodes=6, max_triples=15):
    n = draw(st.integers(0, max_bnodes))
    bnodes = [BNode(f"g{i}") for i in range(n)]
    nodes = st.sampled_from(IRIS + bnodes)
    objects = st.one_of(nodes, _literal_strategy())
    triples = draw(st.lists(st.tuples(nodes, st.sampled_from(PREDICATES), objects), max_size=max_triples))
    return Graph(triples)


def relabel(g: Graph, rng: random.Random) -> Graph:
    """Same graph with shuffled blank node labels."""
    nodes = sorted(g.bnodes())
    names = [f"r{i}" for i in range(len(nodes))]
    rng.shuffle(names)
    m = {b: BNode(n) for b, n in zip(nodes, names)}
    return Graph((m.get(s, s), p, m.get(o, o) if isinstance(o, BNode) else o) for s, p, o in g)
