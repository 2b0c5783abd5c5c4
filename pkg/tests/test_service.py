import json
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from conftest import BASE
from dcat_converter.pipeline import run_harvest
from dcat_converter.rdf import DCAT, RDF_TYPE, IRI, parse_turtle
from dcat_converter.service import CatalogService, ServiceThread, negotiate

DATASET = IRI(DCAT + "Dataset")


def dataset_subjects(text):
    g = parse_turtle(text)
    return sorted(s.value for s, _, _ in g.triples(None, IRI(RDF_TYPE), DATASET))


@pytest.fixture
def harvested(repos, make_config):
    cfg = make_config(repos, page_size=10)
    for eid in cfg.endpoint_ids:
        run_harvest(cfg, eid)
    return cfg


@pytest.mark.parametrize("accept,expected", [
    (None, "text/turtle"),
    ("", "text/turtle"),
    ("*/*", "text/turtle"),
    ("application/rdf+xml", "application/rdf+xml"),
    ("text/turtle;q=0.5, application/rdf+xml;q=0.9", "application/rdf+xml"),
    ("application/*", "application/rdf+xml"),
    ("text/*;q=0.2, */*;q=0.1", "text/turtle"),
    ("application/json", None),
    ("text/turtle;q=0", None),
    ("text/turtle;q=abc, application/rdf+xml", "application/rdf+xml"),
])
def test_negotiate(accept, expected):
    assert negotiate(accept) == expected


def test_health_before_any_run(repos, make_config):
    service = CatalogService(make_config(repos))
    status, ctype, body = service.handle("GET", "/health", None)
    health = json.loads(body)
    assert status == 200 and ctype == "application/json"
    assert health["status"] == "ok" and health["runs"] == 0
    assert health["endpoints"] == {"tu": None, "hu": None, "fu": None}


def test_empty_store_serves_empty_catalog(repos, make_config):
    service = CatalogService(make_config(repos))
    status, _, body = service.handle("GET", "/catalogues/tu", "text/turtle")
    g = parse_turtle(body.decode())
    assert status == 200 and len(g) == 6
    status, _, body = service.handle("GET", "/catalogues/tu/datasets?page=0", "text/turtle")
    assert status == 200 and dataset_subjects(body.decode()) == []


def test_catalogue_list(harvested):
    status, _, body = CatalogService(harvested).handle("GET", "/catalogues", None)
    assert json.loads(body) == {"catalogues": [f"{BASE}/catalogues/{e}" for e in ("tu", "hu", "fu")]}


def test_paging_over_http(harvested):
    with ServiceThread(harvested) as svc:
        first = requests.get(f"{svc.url}/catalogues/fu/datasets", params={"page": 0},
                             headers={"Accept": "text/turtle"}, timeout=5)
        assert first.status_code == 200 and first.headers["Content-Type"].startswith("text/turtle")
        assert len(dataset_subjects(first.text)) == 10

        seen = []
        for page in range(4):
            r = requests.get(f"{svc.url}/catalogues/fu/datasets?page={page}", timeout=5)
            seen += dataset_subjects(r.text)
        assert len(seen) == len(set(seen)) == 23
        assert seen == sorted(seen)
        catalog = parse_turtle(requests.get(f"{svc.url}/catalogues/fu", timeout=5).text)
        assert sorted(o.value for o in catalog.objects(IRI(f"{BASE}/catalogues/fu"), IRI(DCAT + "dataset"))) == seen


def test_rdfxml_over_http(harvested):
    with ServiceThread(harvested) as svc:
        r = requests.get(f"{svc.url}/catalogues/tu", headers={"Accept": "application/rdf+xml"}, timeout=5)
        assert r.status_code == 200 and r.headers["Content-Type"].startswith("application/rdf+xml")
        assert r.headers["Vary"] == "Accept"
        ET.fromstring(r.content)
        r = requests.get(f"{svc.url}/catalogues/tu", headers={"Accept": "application/json"}, timeout=5)
        assert r.status_code == 406


def test_single_dataset(harvested):
    service = CatalogService(harvested)
    snap = service.snapshot("hu")
    uri = snap.dataset_uris[0]
    status, _, body = service.handle("GET", f"/datasets?uri={requests.utils.quote(uri, safe='')}", "text/turtle")
    assert status == 200 and dataset_subjects(body.decode()) == [uri]


@pytest.mark.parametrize("target,status", [
    ("/datasets?uri=https%3A%2F%2Fnowhere.example%2Fx", 404),
    ("/datasets", 400),
    ("/catalogues/zz", 404),
    ("/catalogues/tu/datasets?page=-1", 400),
    ("/catalogues/tu/datasets?page=x", 400),
    ("/catalogues/tu/other", 404),
    ("/nothing", 404),
])
def test_errors(harvested, target, status):
    assert CatalogService(harvested).handle("GET", target, None)[0] == status


def test_method_not_allowed(harvested):
    assert CatalogService(harvested).handle("POST", "/health", None)[0] == 405


def test_deleted_dataset_is_gone(harvested):
    service = CatalogService(harvested)
    snap = service.snapshot("tu")
    dead = next(iter(snap.index["tombstones"]))
    assert service.handle("GET", "/datasets?uri=" + requests.utils.quote(dead, safe=""), None)[0] == 404


def test_health_after_runs(harvested):
    health = CatalogService(harvested).health()
    assert health["runs"] == 3
    assert {e: v["datasets"] for e, v in health["endpoints"].items()} == {"tu": 23, "hu": 23, "fu": 23}
    assert health["endpoints"]["tu"]["last_run"]["seen"] == 25


def test_service_follows_new_snapshots(harvested):
    service = CatalogService(harvested)
    assert service.snapshot("tu").name == "000001"
    run_harvest(harvested, "tu")
    assert service.snapshot("tu").name == "000002"


def test_readers_not_blocked_by_harvest(harvested):
    """While a harvest sits before publication, readers keep getting the old snapshot."""
    service = CatalogService(harvested)
    uri = service.snapshot("tu").dataset_uris[0]
    reads = []

    def hold(point):
        if point == "before-publish":
            with ThreadPoolExecutor(4) as pool:
                reads.extend(pool.map(lambda _: service.handle("GET", "/catalogues/tu", None), range(8)))
            assert service.health()["endpoints"]["tu"]["snapshot"] == "000001"

    run_harvest(harvested, "tu", abort=hold)
    assert len(reads) == 8 and all(r[0] == 200 for r in reads)
    assert all(uri in r[2].decode() for r in reads)
