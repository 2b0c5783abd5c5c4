import logging
from datetime import date, datetime, timezone

import pytest
from hypothesis import given, strategies as st

from dcat_converter.converter import (
    Agent,
    CatalogMeta,
    DcatDataset,
    DcatDistribution,
    LangText,
    TransformRules,
    build_catalog,
    catalog_uri,
    convert,
    mint_uri,
    parse_date,
    validate,
)
from dcat_converter.errors import ConfigError, InvalidBase
from dcat_converter.mappings import builtin_mapping, fu_abstract_overrides
from dcat_converter.matcher import apply_overrides
from dcat_converter.mockrepo import BUNDLED_CORPORA, bundled_corpus, render_payload
from dcat_converter.oaipmh import RawOaiRecord
from dcat_converter.records import FieldValue, SourceRecord, detect_schema, parse_record
from dcat_converter.schema import builtin_schemas, get_builtin

BASE = "https://bop.example"
STAMP = datetime(2024, 1, 1, tzinfo=timezone.utc)
OAI_DC = builtin_mapping("oai_dc")
FU_MAPPING = apply_overrides(builtin_mapping("dcterms"), fu_abstract_overrides(),
                             get_builtin("dcterms"), get_builtin("dcat-ap"))
META = {"title": "Catalogue", "description": "Datasets", "publisher": "Uni"}


def record(*fields, schema="oai_dc", ident="oai:fu:123"):
    fvs = tuple(FieldValue(*f) for f in fields)
    return SourceRecord(ident, STAMP, schema, fvs)


def placed_count(ds: DcatDataset) -> int:
    """How many source values ended up in the dataset (landing page mirrors an identifier)."""
    lists = (ds.titles, ds.descriptions, ds.keywords, ds.themes, ds.creators, ds.contributors,
             ds.publishers, ds.identifiers, ds.languages, ds.distributions)
    singles = (ds.issued, ds.modified, ds.access_rights)
    return sum(map(len, lists)) + sum(v is not None for v in singles)


# reference percent-encoder: RFC 3986 unreserved characters stay, every other UTF-8 byte becomes %XX
_UNRESERVED = set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~")


def reference_encode(text: str) -> str:
    out = []
    for ch in text:
        if ch in _UNRESERVED:
            out.append(ch)
        else:
            out.extend("%{:02X}".format(b) for b in ch.encode("utf-8"))
    return "".join(out)


def test_mint_uri_example():
    assert mint_uri(BASE, "oai:fu:123") == "https://bop.example/datasets/oai%3Afu%3A123"
    assert mint_uri(BASE, "oai:fu:123") == BASE + "/datasets/" + reference_encode("oai:fu:123")
    assert mint_uri(BASE + "/", "oai:fu:123") == mint_uri(BASE, "oai:fu:123")


@given(st.text(min_size=1))
def test_mint_uri_matches_reference(ident):
    assert mint_uri(BASE, ident) == BASE + "/datasets/" + reference_encode(ident)


@given(st.text(min_size=1), st.text(min_size=1))
def test_mint_uri_injective(a, b):
    assert (mint_uri(BASE, a) == mint_uri(BASE, b)) == (a == b)


@pytest.mark.parametrize("base", ["", "bop.example", "/datasets", "https://"])
def test_invalid_base(base):
    with pytest.raises(InvalidBase):
        mint_uri(base, "x")
    with pytest.raises(InvalidBase):
        catalog_uri(base, "x")


def test_subject_becomes_keyword():
    ds, report = convert(record(("subject", "catalysis"), ("title", "X"), ("description", "Y")), OAI_DC, base=BASE)
    assert report.outcome == "converted" and ds.keywords == ["catalysis"]
    assert ds.titles == [LangText("X")] and ds.descriptions == [LangText("Y")]
    assert ds.uri == "https://bop.example/datasets/oai%3Afu%3A123"
    assert ds.source_identifier == "oai:fu:123"


def test_abstract_needs_the_fu_override():
    rec = record(("title", "X"), ("abstract", "Z"), schema="dcterms")
    ds, report = convert(rec, FU_MAPPING, base=BASE)
    assert ds.descriptions == [LangText("Z")]
    # without the override abstract stays unmapped and the dataset lacks a description
    ds, report = convert(rec, builtin_mapping("dcterms"), base=BASE)
    assert ds is None and report.outcome == "rejected"
    assert {"term": "abstract", "value": "Z", "reason": "unmapped"} in report.dropped_fields


def test_missing_title_rejected():
    ds, report = convert(record(("description", "Y")), OAI_DC, base=BASE)
    assert ds is None and report.outcome == "rejected"
    assert "mandatory property title absent" in report.diagnostics


def test_dates_earliest_parseable_wins():
    ds, report = convert(record(("title", "X"), ("description", "Y"), ("date", "2021-05-03"), ("date", "invalid")),
                         OAI_DC, base=BASE)
    assert ds.issued == date(2021, 5, 3)
    assert [d["value"] for d in report.dropped_fields] == ["invalid"]


def test_multiple_dates_and_year_expansion():
    ds, report = convert(record(("title", "X"), ("description", "Y"), ("date", "2017-11-02T10:00:00Z"),
                                ("date", "2016")), OAI_DC, base=BASE)
    assert ds.issued == date(2016, 1, 1)
    assert report.dropped_fields == [{"term": "date", "value": "2017-11-02T10:00:00Z",
                                      "reason": "superseded by earlier issued date"}]
    assert "date '2016' expanded to 2016-01-01" in report.diagnostics


def test_latest_rule_for_modified():
    rec = record(("title", "X"), ("description", "Y"), ("modified", "2020-01-01"), ("modified", "2022-02-02"),
                 schema="dcterms")
    ds, _ = convert(rec, builtin_mapping("dcterms"), base=BASE)
    assert ds.modified == date(2022, 2, 2)


@pytest.mark.parametrize("value,expected", [
    ("2021-05-03", date(2021, 5, 3)),
    ("2021-05-03T23:10:00Z", date(2021, 5, 3)),
    ("2021-05-03T23:10:00+02:00", date(2021, 5, 3)),
    ("2021-05", date(2021, 5, 1)),
    ("1999", date(1999, 1, 1)),
    ("2021-02-30", None),
    ("2021-13", None),
    ("03.05.2021", None),
    ("", None),
])
def test_parse_date(value, expected):
    assert parse_date(value)[0] == expected


def test_identifier_url_becomes_landing_page():
    ds, _ = convert(record(("title", "X"), ("description", "Y"), ("identifier", "doi:10.1/x"),
                           ("identifier", "https://repo.example/handle/1"), ("identifier", "https://repo.example/2")),
                    OAI_DC, base=BASE)
    assert ds.landing_page == "https://repo.example/handle/1"
    assert len(ds.identifiers) == 3


def test_landing_page_rule_can_be_disabled():
    rules = TransformRules(identifier_landing_page=False)
    ds, _ = convert(record(("title", "X"), ("description", "Y"), ("identifier", "https://repo.example/1")),
                    OAI_DC, rules, BASE)
    assert ds.landing_page is None


def test_distribution_from_landing_page():
    rules = TransformRules.from_dict({"distribution_from_landing_page": True})
    ds, _ = convert(record(("title", "X"), ("description", "Y"), ("identifier", "https://repo.example/1")),
                    OAI_DC, rules, BASE)
    assert ds.distributions == [DcatDistribution("https://repo.example/1")]


def test_agents_and_lang():
    ds, report = convert(record(("title", "Titel", "de"), ("title", "Bad", "e!"), ("description", "Y"),
                                ("creator", "Müller, Anna"), ("creator", "https://orcid.org/0000-0001"),
                                ("language", "en"), ("language", "english!")), OAI_DC, base=BASE)
    assert ds.titles == [LangText("Titel", "de"), LangText("Bad")]
    assert ds.creators == [Agent(name="Müller, Anna"), Agent(uri="https://orcid.org/0000-0001")]
    assert ds.languages == ["en"]
    assert report.dropped_fields == [{"term": "language", "value": "english!", "reason": "invalid language tag"}]
    assert any("'e!'" in d for d in report.diagnostics)


def test_access_rights_single_valued():
    ds, report = convert(record(("title", "X"), ("description", "Y"), ("rights", "open access"),
                                ("rights", "https://creativecommons.org/licenses/by/4.0/")), OAI_DC, base=BASE)
    assert ds.access_rights == "open access"
    assert report.dropped_fields[0]["reason"] == "accessRights is single-valued"


def test_unmapped_terms_reported():
    ds, report = convert(record(("title", "X"), ("description", "Y"), ("type", "Text"), ("format", "text/csv")),
                         OAI_DC, base=BASE)
    assert [(d["term"], d["reason"]) for d in report.dropped_fields] == [("type", "unmapped"), ("format", "unmapped")]


def test_schema_mismatch_rejected():
    ds, report = convert(record(("title", "X"), schema="dcterms"), OAI_DC, base=BASE)
    assert ds is None and report.outcome == "rejected" and report.diagnostics
    assert report.dropped_fields[0]["term"] == "title"


def test_bad_base_rejected_not_raised():
    ds, report = convert(record(("title", "X"), ("description", "Y")), OAI_DC, base="nowhere")
    assert ds is None and report.outcome == "rejected"


def test_unknown_rule_kind():
    with pytest.raises(ConfigError):
        TransformRules(rules={"title": "shout"})


# validation


def minimal(**kw):
    return DcatDataset(uri=BASE + "/datasets/x", titles=[LangText("T")], descriptions=[LangText("D")], **kw)


def test_validate_minimal_ok():
    assert validate(minimal()).ok


def test_validate_distribution_without_access_url():
    assert validate(minimal(distributions=[DcatDistribution(None)])).paths == ["distribution.access_url"]


def test_validate_uri_fields():
    res = validate(DcatDataset(uri="datasets/x", titles=[LangText("T")], descriptions=[],
                               themes=["economy"], landing_page="www.x", creators=[Agent()]))
    assert sorted(res.paths) == ["creator", "description", "landingPage", "theme", "uri"]


# hand-written tag grammar: 2-3 letters, then "-" subtags of 1-8 alphanumerics
def reference_tag_ok(tag: str) -> bool:
    parts = tag.split("-")
    head, rest = parts[0], parts[1:]
    if not (2 <= len(head) <= 3 and all(c.isascii() and c.isalpha() for c in head)):
        return False
    return all(1 <= len(p) <= 8 and all(c.isascii() and c.isalnum() for c in p) for p in rest)


@pytest.mark.parametrize("tag,ok", [("en-US", True), ("e!", False), ("de", True), ("deu", True), ("english", False),
                                    ("en-", False), ("zh-Hant-TW", True), ("en-abcdefghi", False)])
def test_validate_language_examples(tag, ok):
    assert reference_tag_ok(tag) == ok
    assert validate(minimal(languages=[tag])).ok == ok
    assert validate(DcatDataset(uri=BASE + "/d", titles=[LangText("T", tag)], descriptions=[LangText("D")])).ok == ok


@given(st.text(alphabet="abcXYZ019-_!é ", max_size=14))
def test_validate_language_matches_reference(tag):
    assert validate(minimal(languages=[tag])).ok == reference_tag_ok(tag)


# catalogs


def test_empty_catalog():
    cat = build_catalog("tu", META, [], BASE)
    assert cat.uri == "https://bop.example/catalogues/tu" and cat.dataset_uris == ()
    assert cat.publisher == Agent(name="Uni")


def test_catalog_members_sorted_and_deduplicated(caplog):
    with caplog.at_level(logging.WARNING):
        cat = build_catalog("tu", META, [BASE + "/datasets/b", minimal(), BASE + "/datasets/b"], BASE)
    assert cat.dataset_uris == (BASE + "/datasets/b", BASE + "/datasets/x")
    assert "duplicate" in caplog.text


def test_catalog_with_25_members():
    uris = [mint_uri(BASE, f"oai:tu:{i}") for i in range(25)]
    cat = build_catalog("tu", META, list(reversed(uris)), BASE)
    assert len(cat.dataset_uris) == len(set(cat.dataset_uris)) == 25
    assert list(cat.dataset_uris) == sorted(uris)


def test_catalog_excludes_tombstones():
    cat = build_catalog("tu", META, ["https://a/1", "https://a/2"], BASE, tombstones=["https://a/1"])
    assert cat.dataset_uris == ("https://a/2",)


@pytest.mark.parametrize("missing", ["title", "description", "publisher"])
def test_catalog_metadata_mandatory(missing):
    meta = {k: v for k, v in META.items() if k != missing}
    with pytest.raises(ConfigError):
        build_catalog("tu", meta, [], BASE)
    with pytest.raises(ConfigError):
        build_catalog("tu", CatalogMeta(**{**META, missing: ""}), [], BASE)


# corpus-wide properties


def corpus_records():
    reg = builtin_schemas()
    for name in BUNDLED_CORPORA:
        for rec in bundled_corpus(name).records:
            if rec.deleted:
                continue
            raw = RawOaiRecord(rec.identifier, rec.stamp, False, render_payload(rec))
            schema_id = detect_schema(raw, reg)
            yield name, parse_record(raw, get_builtin(schema_id), name)


def mapping_for(name, schema_id):
    return FU_MAPPING if name == "mock-fu" else builtin_mapping(schema_id)


def test_corpora_convert_except_titleless():
    outcomes = {}
    for name, src in corpus_records():
        ds, report = convert(src, mapping_for(name, src.schema_id), base=BASE)
        outcomes.setdefault(name, []).append(report.outcome)
        if ds is not None:
            assert validate(ds).ok
            assert ds.keywords == src.values("subject")
        else:
            assert report.diagnostics[-1] == "mandatory property title absent"
    for name in BUNDLED_CORPORA:
        assert outcomes[name].count("converted") == 23 and outcomes[name].count("rejected") == 1


def test_no_silent_loss_on_corpora():
    for name, src in corpus_records():
        ds, report = convert(src, mapping_for(name, src.schema_id), base=BASE)
        if ds is not None:
            assert placed_count(ds) + len(report.dropped_fields) == len(src.fields), src.identifier


def test_conversion_idempotent():
    for name, src in corpus_records():
        first = convert(src, mapping_for(name, src.schema_id), base=BASE)
        second = convert(src, mapping_for(name, src.schema_id), base=BASE)
        assert first[0] == second[0] and first[1] == second[1]


_terms = st.sampled_from(get_builtin("oai_dc").names)
_values = st.one_of(
    st.text(alphabet="abc XYZ-:/.0123", min_size=1, max_size=20).filter(lambda s: s.strip()),
    st.sampled_from(["2021-05-03", "2016", "2021-13-01", "https://x.example/1", "en", "e!", "open access"]),
)
_fields = st.lists(st.tuples(_terms, _values, st.sampled_from([None, "en", "de-AT", "x!"])), max_size=15)


@given(_fields)
def test_accounting_and_validity_property(fields):
    src = record(*fields)
    ds, report = convert(src, OAI_DC, base=BASE)
    if ds is None:
        assert report.outcome == "rejected" and report.diagnostics
    else:
        assert validate(ds).ok
        assert placed_count(ds) + len(report.dropped_fields) == len(src.fields)
    assert convert(src, OAI_DC, base=BASE) == (ds, report)
