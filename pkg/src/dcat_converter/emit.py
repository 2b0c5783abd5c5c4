"""Bind the DCAT-AP model to RDF triples (and back, for validation of stored output)."""

from __future__ import annotations

import hashlib
from datetime import date
from typing import Iterable, Optional

from .converter import Agent, DcatCatalog, DcatDataset, DcatDistribution, LangText, is_absolute_uri
from .rdf import DCAT, DCT, FOAF, RDF_TYPE, XSD_DATE, BNode, Graph, IRI, Literal

IANA_MEDIA = "https://www.iana.org/assignments/media-types/"

A = IRI(RDF_TYPE)
T_CATALOG = IRI(DCAT + "Catalog")
T_DATASET = IRI(DCAT + "Dataset")
T_DISTRIBUTION = IRI(DCAT + "Distribution")
T_AGENT = IRI(FOAF + "Agent")

P = {
    name: IRI(ns + name)
    for ns, names in (
        (DCT, ("title", "description", "creator", "contributor", "publisher", "issued", "modified",
               "identifier", "language", "accessRights", "format", "license")),
        (DCAT, ("keyword", "theme", "landingPage", "distribution", "dataset", "accessURL", "mediaType")),
        (FOAF, ("name", "homepage")),
    )
    for name in names
}


def _bnode(owner: str, role: str, index: int) -> BNode:
    # Stable per (owner, role, position) so equal inputs give equal graphs,
    # and distinct datasets never share a blank node when graphs are merged.
    digest = hashlib.sha1(owner.encode("utf-8")).hexdigest()[:12]
    return BNode(f"n{digest}{role}{index}")


def _text(t: LangText) -> Literal:
    return Literal(t.value, lang=t.lang)


def _uri_or_text(value: str):
    return IRI(value) if is_absolute_uri(value) else Literal(value)


def _agent(g: Graph, agent: Agent, owner: str, role: str, index: int):
    node = IRI(agent.uri) if agent.uri else _bnode(owner, role, index)
    g.add(node, A, T_AGENT)
    if agent.name:
        g.add(node, P["name"], Literal(agent.name))
    return node


def dataset_graph(ds: DcatDataset) -> Graph:
    g = Graph()
    s = IRI(ds.uri)
    g.add(s, A, T_DATASET)
    for t in ds.titles:
        g.add(s, P["title"], _text(t))
    for t in ds.descriptions:
        g.add(s, P["description"], _text(t))
    for kw in ds.keywords:
        g.add(s, P["keyword"], Literal(kw))
    for theme in ds.themes:
        g.add(s, P["theme"], IRI(theme))
    for role in ("creator", "contributor", "publisher"):
        for i, agent in enumerate(getattr(ds, role + "s")):
            g.add(s, P[role], _agent(g, agent, ds.uri, role, i))
    for role in ("issued", "modified"):
        value: Optional[date] = getattr(ds, role)
        if value is not None:
            g.add(s, P[role], Literal(value.isoformat(), datatype=XSD_DATE))
    for ident in ds.identifiers:
        g.add(s, P["identifier"], Literal(ident))
    if ds.landing_page:
        g.add(s, P["landingPage"], IRI(ds.landing_page))
    for lang in ds.languages:
        g.add(s, P["language"], Literal(lang))
    if ds.access_rights:
        g.add(s, P["accessRights"], _uri_or_text(ds.access_rights))
    for i, dist in enumerate(ds.distributions):
        node = _bnode(ds.uri, "distribution", i)
        g.add(s, P["distribution"], node)
        g.add(node, A, T_DISTRIBUTION)
        if dist.access_url:
            g.add(node, P["accessURL"], IRI(dist.access_url))
        if dist.format:
            g.add(node, P["format"], Literal(dist.format))
        if dist.media_type:
            mt = dist.media_type
            if not mt.startswith(("http://", "https://")):
                mt = IANA_MEDIA + mt
            g.add(node, P["mediaType"], IRI(mt))
        if dist.license:
            g.add(node, P["license"], IRI(dist.license))
    return g


def catalog_graph(catalog: DcatCatalog) -> Graph:
    g = Graph()
    s = IRI(catalog.uri)
    g.add(s, A, T_CATALOG)
    g.add(s, P["title"], Literal(catalog.title))
    g.add(s, P["description"], Literal(catalog.description))
    g.add(s, P["publisher"], _agent(g, catalog.publisher, catalog.uri, "publisher", 0))
    if catalog.homepage:
        g.add(s, P["homepage"], IRI(catalog.homepage))
    for uri in catalog.dataset_uris:
        g.add(s, P["dataset"], IRI(uri))
    return g


def to_graph(catalog: DcatCatalog, datasets: Iterable[DcatDataset] = ()) -> Graph:
    g = catalog_graph(catalog)
    for ds in datasets:
        g.update(dataset_graph(ds))
    return g


# --- reading back ------------------------------------------------------------


def _agents(g: Graph, s, pred: IRI) -> list[Agent]:
    out = []
    for node in sorted(g.objects(s, pred), key=str):
        name = g.value(node, P["name"])
        out.append(Agent(name=name.lexical if isinstance(name, Literal) else None,
                         uri=node.value if isinstance(node, IRI) else None))
    return out


def _literals(g: Graph, s, pred: IRI) -> list[Literal]:
    return sorted((o for o in g.objects(s, pred) if isinstance(o, Literal)),
                  key=lambda o: (o.lexical, o.lang or ""))


def _date(g: Graph, s, pred: IRI) -> Optional[date]:
    lit = g.value(s, pred)
    if isinstance(lit, Literal):
        try:
            return date.fromisoformat(lit.lexical)
        except ValueError:
            return None
    return None


def datasets_from_graph(g: Graph) -> list[DcatDataset]:
    """Rebuild DcatDataset values from every dcat:Dataset subject in ``g``.

    Multi-valued properties come back in a canonical (sorted) order.
    """
    out = []
    for s in g.subjects_of_type(DCAT + "Dataset"):
        ds = DcatDataset(uri=s.value if isinstance(s, IRI) else str(s))
        ds.titles = [LangText(o.lexical, o.lang) for o in _literals(g, s, P["title"])]
        ds.descriptions = [LangText(o.lexical, o.lang) for o in _literals(g, s, P["description"])]
        ds.keywords = [o.lexical for o in _literals(g, s, P["keyword"])]
        ds.themes = sorted(str(o) for o in g.objects(s, P["theme"]))
        ds.creators = _agents(g, s, P["creator"])
        ds.contributors = _agents(g, s, P["contributor"])
        ds.publishers = _agents(g, s, P["publisher"])
        ds.issued = _date(g, s, P["issued"])
        ds.modified = _date(g, s, P["modified"])
        ds.identifiers = [o.lexical for o in _literals(g, s, P["identifier"])]
        lp = g.value(s, P["landingPage"])
        ds.landing_page = str(lp) if lp is not None else None
        ds.languages = [o.lexical for o in _literals(g, s, P["language"])]
        ar = g.value(s, P["accessRights"])
        ds.access_rights = str(ar) if ar is not None else None
        for node in sorted(g.objects(s, P["distribution"]), key=str):
            url = g.value(node, P["accessURL"])
            fmt = g.value(node, P["format"])
            mt = g.value(node, P["mediaType"])
            lic = g.value(node, P["license"])
            media = str(mt) if mt is not None else None
            if media and media.startswith(IANA_MEDIA):
                media = media[len(IANA_MEDIA):]
            ds.distributions.append(DcatDistribution(
                access_url=str(url) if url is not None else None,
                format=str(fmt) if fmt is not None else None,
                media_type=media,
                license=str(lic) if lic is not None else None,
            ))
        out.append(ds)
    return out
