"""Harvest, parse, map, convert and publish, one endpoint at a time."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

import requests

from .config import EndpointSettings, PipelineConfig
from .converter import ConversionReport, DcatCatalog, DcatDataset, build_catalog, convert, mint_uri
from .emit import catalog_graph, dataset_graph
from .errors import ConfigError, ConverterError, SchemaMismatch, UnknownSchema, UnknownTerm, XmlError
from .mappings import builtin_mapping, rebuild
from .matcher import MappingTable, apply_overrides, load_overrides
from .oaipmh import (
    HarvestState,
    OaiClient,
    RawOaiRecord,
    format_datestamp,
    identify,
    list_records,
    load_state,
    parse_datestamp,
    save_state,
)
from .rdf import Graph, serialize_rdfxml, serialize_turtle
from .records import detect_schema, parse_record
from .schema import SchemaRegistry
from .store import DatasetStore, Snapshot, StagedSnapshot

log = logging.getLogger(__name__)
diag_log = logging.getLogger("dcat_converter.diagnostics")

ABORT_ENV = "CONVERTER_ABORT_AT"
ABORT_EXIT = 75


def env_checkpoint(point: str) -> None:
    """Test hook: exit hard at the named point when CONVERTER_ABORT_AT asks for it."""
    if os.environ.get(ABORT_ENV) == point:
        log.error("aborting at %s (%s set)", point, ABORT_ENV)
        logging.shutdown()
        os._exit(ABORT_EXIT)


@dataclass
class RunSummary:
    endpoint: str
    seen: int = 0
    converted: int = 0
    rejected: int = 0
    tombstoned: int = 0
    stale: int = 0
    live: int = 0
    duration: float = 0.0
    snapshot: Optional[str] = None
    started: str = ""
    restarts: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    summary: RunSummary
    catalog: DcatCatalog
    datasets: dict[str, DcatDataset] = field(default_factory=dict)
    reports: list[ConversionReport] = field(default_factory=list)
    snapshot: Optional[Snapshot] = None

    def graph(self) -> Graph:
        """In-memory graph of the catalog plus the datasets converted in this run."""
        g = catalog_graph(self.catalog)
        for ds in self.datasets.values():
            g.update(dataset_graph(ds))
        return g


class MappingResolver:
    """Chooses (and caches) the mapping table for each detected source schema."""

    def __init__(self, settings: EndpointSettings, config: PipelineConfig, registry: SchemaRegistry):
        self.settings = settings
        self.config = config
        self.registry = registry
        self._cache: dict[str, Optional[MappingTable]] = {}
        self._file_table = None
        if settings.mapping not in ("builtin", "auto"):
            try:
                self._file_table = MappingTable.from_json(Path(settings.mapping).read_text("utf-8"))
            except OSError as exc:
                raise ConfigError(f"endpoint {settings.id!r}: cannot read mapping {settings.mapping}: {exc}") from exc
        self._overrides = None
        if settings.overrides:
            try:
                self._overrides = load_overrides(Path(settings.overrides).read_text("utf-8"))
            except OSError as exc:
                raise ConfigError(f"endpoint {settings.id!r}: cannot read overrides {settings.overrides}: {exc}") from exc

    def __call__(self, schema_id: str) -> Optional[MappingTable]:
        if schema_id not in self._cache:
            self._cache[schema_id] = self._build(schema_id)
        return self._cache[schema_id]

    def _build(self, schema_id: str) -> Optional[MappingTable]:
        if self._file_table is not None and self._file_table.source_schema_id == schema_id:
            table = self._file_table
        elif self.settings.mapping == "auto" and schema_id in self.registry:
            table = rebuild(schema_id, self.config.matcher)
        else:
            try:
                table = builtin_mapping(schema_id)
            except KeyError:
                return None
        if self._overrides:
            source_id, overrides = self._overrides
            if source_id in (None, schema_id):
                try:
                    table = apply_overrides(table, overrides, self.registry[schema_id],
                                            self.registry[table.target_schema_id])
                except (UnknownTerm, KeyError) as exc:
                    raise ConfigError(f"endpoint {self.settings.id!r}: override file {self.settings.overrides}: {exc}") from exc
        return table


def _log_report(endpoint_id: str, report: ConversionReport) -> None:
    for note in report.diagnostics:
        diag_log.info(json.dumps(
            {"endpoint": endpoint_id, "identifier": report.identifier, "outcome": report.outcome, "diagnostic": note},
            ensure_ascii=False, sort_keys=True,
        ))


class _Batch:
    """Applies harvested records to a staged snapshot."""

    def __init__(self, settings: EndpointSettings, config: PipelineConfig, staged: StagedSnapshot,
                 registry: SchemaRegistry):
        self.settings = settings
        self.config = config
        self.staged = staged
        self.registry = registry
        self.mappings = MappingResolver(settings, config, registry)
        self.summary = RunSummary(settings.id)
        self.datasets: dict[str, DcatDataset] = {}
        self.reports: list[ConversionReport] = []
        self.raw = {r["identifier"]: r for r in (staged.base.raw_records() if staged.base else [])}

    def _is_stale(self, rec: RawOaiRecord) -> bool:
        known = self.staged.index["records"].get(rec.identifier)
        return bool(known) and parse_datestamp(known["datestamp"]) > rec.datestamp

    def apply(self, rec: RawOaiRecord) -> None:
        self.summary.seen += 1
        if self._is_stale(rec):
            # last write wins by datestamp
            self.summary.stale += 1
            return
        stamp = format_datestamp(rec.datestamp)
        uri = mint_uri(self.config.base_uri, rec.identifier)
        self.raw[rec.identifier] = rec.to_dict()
        self.datasets.pop(uri, None)
        if rec.deleted:
            self.staged.tombstone(uri, rec.identifier, stamp)
            self.staged.index["records"][rec.identifier] = {"datestamp": stamp, "outcome": "deleted", "uri": uri}
            self.summary.tombstoned += 1
            return
        ds, report = self._convert(rec)
        self.reports.append(report)
        _log_report(self.settings.id, report)
        self.staged.index["records"][rec.identifier] = {"datestamp": stamp, "outcome": report.outcome, "uri": uri}
        if ds is None:
            self.summary.rejected += 1
            # a rejected update must not leave the older version live
            self.staged.drop_dataset(uri)
            return
        self.summary.converted += 1
        self.datasets[uri] = ds
        self.staged.put_dataset(uri, rec.identifier, stamp, serialize_turtle(dataset_graph(ds)))

    def _convert(self, rec: RawOaiRecord):
        try:
            schema_id = detect_schema(rec, self.registry)
            source = parse_record(rec, self.registry[schema_id], self.settings.id)
        except (XmlError, UnknownSchema, SchemaMismatch) as exc:
            return None, ConversionReport(rec.identifier, "rejected", [], [str(exc)])
        mapping = self.mappings(schema_id)
        if mapping is None:
            report = ConversionReport(rec.identifier, "rejected", [], [f"no mapping for source schema {schema_id!r}"])
            for fv in source.fields:
                report.drop(fv.term_name, fv.value, "no mapping for record schema")
            return None, report
        return convert(source, mapping, self.config.transform, self.config.base_uri)

    def finish(self, checkpoint) -> DcatCatalog:
        staged, eid = self.staged, self.settings.id
        catalog = build_catalog(eid, self.settings.catalog, list(staged.index["datasets"]),
                                self.config.base_uri, staged.index["tombstones"])
        full = catalog_graph(catalog)
        for uri in catalog.dataset_uris:
            full.update(staged.dataset_graph(uri))
        checkpoint("after-convert")
        staged.write("catalog.ttl", serialize_turtle(catalog_graph(catalog)))
        staged.write(f"{eid}.ttl", serialize_turtle(full))
        staged.write(f"{eid}.rdf", serialize_rdfxml(full))
        staged.write(f"{eid}.reports.jsonl", "".join(
            json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for r in self.reports))
        staged.write("raw.jsonl", "".join(
            json.dumps(self.raw[k], ensure_ascii=False, sort_keys=True) + "\n" for k in sorted(self.raw)))
        self.summary.live = len(catalog.dataset_uris)
        return catalog


def _checkpoint(abort: Optional[Callable[[str], None]]):
    def hook(point: str) -> None:
        env_checkpoint(point)
        if abort is not None:
            abort(point)
    return hook


def _pick_state(endpoint_id: str, state_dir: Path, snap: Optional[Snapshot]) -> HarvestState:
    state = load_state(endpoint_id, state_dir)
    # The snapshot index carries the state it was published with; if the
    # process died before the state file was written, trust the snapshot.
    if snap is not None and snap.index.get("harvest_state"):
        published = HarvestState.from_dict(snap.index["harvest_state"])
        if published.last_success_datestamp and (
            state.last_success_datestamp is None or published.last_success_datestamp > state.last_success_datestamp
        ):
            state = published
    # snapshots are all-or-nothing, so a half-followed token chain is useless here
    state.resumption_token = None
    return state


def harvest_endpoint(
    config: PipelineConfig,
    endpoint_id: str,
    *,
    session=None,
    abort: Optional[Callable[[str], None]] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> RunResult:
    settings = config.endpoint(endpoint_id)
    store = DatasetStore(config.output_dir)
    registry = SchemaRegistry.builtin()
    checkpoint = _checkpoint(abort)
    t0 = time.monotonic()
    started = datetime.now(timezone.utc)
    with store.lock(endpoint_id):
        base = store.current(endpoint_id)
        state = _pick_state(endpoint_id, config.state_dir, base)
        session = session or requests.Session()
        client = OaiClient(settings.endpoint, session, sleep=sleep)
        info = identify(settings.endpoint, client=client)
        run = list_records(settings.endpoint, state, granularity=info.granularity, client=client)
        staged = store.begin(endpoint_id)
        try:
            batch = _Batch(settings, config, staged, registry)
            for rec in run:
                batch.apply(rec)
            catalog = batch.finish(checkpoint)
            summary = batch.summary
            summary.restarts = run.restarts
            summary.started = format_datestamp(started)
            summary.duration = round(time.monotonic() - t0, 3)
            staged.index["runs"] = staged.index.get("runs", 0) + 1
            staged.index["harvest_state"] = run.state.to_dict()
            staged.index["last_run"] = summary.to_dict()
            snap = store.publish(staged, checkpoint)
        except BaseException:
            staged.discard()
            raise
        summary.snapshot = snap.name
        save_state(run.state, config.state_dir)
    log.info("harvest %s: %s", endpoint_id, json.dumps(summary.to_dict(), sort_keys=True))
    return RunResult(summary, catalog, batch.datasets, batch.reports, snap)


def run_harvest(config: PipelineConfig, endpoint_id: str, **kwargs) -> RunSummary:
    return harvest_endpoint(config, endpoint_id, **kwargs).summary


def harvest_many(config: PipelineConfig, endpoint_ids: Iterable[str] | None = None, **kwargs) -> dict:
    """Harvest several endpoints in parallel; returns {id: RunSummary or exception}."""
    ids = list(endpoint_ids or config.endpoint_ids)
    out: dict = {}
    if not ids:
        return out
    with ThreadPoolExecutor(max_workers=len(ids)) as pool:
        futures = {eid: pool.submit(run_harvest, config, eid, **kwargs) for eid in ids}
        for eid, fut in futures.items():
            try:
                out[eid] = fut.result()
            except (ConverterError, OSError) as exc:
                out[eid] = exc
    return out


def reconvert(
    config: PipelineConfig,
    in_dir,
    out_dir,
    endpoint_ids: Iterable[str] | None = None,
    abort: Optional[Callable[[str], None]] = None,
) -> dict[str, RunResult]:
    """Re-run conversion over cached raw records without contacting any repository."""
    source = DatasetStore(in_dir)
    target = DatasetStore(out_dir)
    registry = SchemaRegistry.builtin()
    checkpoint = _checkpoint(abort)
    results = {}
    for eid in endpoint_ids or config.endpoint_ids:
        settings = config.endpoint(eid)
        snap = source.current(eid)
        if snap is None:
            log.warning("no cached records for endpoint %s in %s", eid, in_dir)
            continue
        raws = [RawOaiRecord.from_dict(r) for r in snap.raw_records()]
        raws.sort(key=lambda r: (r.datestamp, r.identifier))
        t0 = time.monotonic()
        with target.lock(eid):
            staged = target.begin(eid)
            try:
                # start from an empty index so every record is converted afresh
                for uri in list(staged.index["datasets"]):
                    staged.drop_dataset(uri)
                staged.index.update(records={}, tombstones={}, datasets={})
                staged.index["harvest_state"] = snap.index.get("harvest_state")
                batch = _Batch(settings, config, staged, registry)
                for rec in raws:
                    batch.apply(rec)
                catalog = batch.finish(checkpoint)
                batch.summary.duration = round(time.monotonic() - t0, 3)
                staged.index["runs"] = staged.index.get("runs", 0) + 1
                staged.index["last_run"] = batch.summary.to_dict()
                published = target.publish(staged, checkpoint)
            except BaseException:
                staged.discard()
                raise
        batch.summary.snapshot = published.name
        results[eid] = RunResult(batch.summary, catalog, batch.datasets, batch.reports, published)
    return results
