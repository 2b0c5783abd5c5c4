"""Command-line entry point: ``dcat-converter <subcommand> ...``.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import CONFIG_ENV, load_config
from .errors import ConverterError
from .matcher import MatcherConfig, apply_overrides, load_overrides, match_report, match_schemas
from .schema import BUILTIN_IDS, get_builtin, load_schema

log = logging.getLogger("dcat_converter.cli")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=os.environ.get(CONFIG_ENV),
                   help=f"pipeline config (TOML); defaults to ${CONFIG_ENV}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcat-converter", description="Harvest OAI-PMH metadata and publish it as DCAT-AP.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("harvest", help="harvest endpoints and publish new snapshots")
    _config_arg(p)
    p.add_argument("--endpoint", action="append", help="endpoint id (repeatable; default: all)")

    p = sub.add_parser("match", help="align a source schema onto a target schema")
    p.add_argument("--source", required=True, help="descriptor JSON file or builtin id")
    p.add_argument("--target", required=True, help="descriptor JSON file or builtin id")
    p.add_argument("--config", help="TOML file with a [matcher] table (or matcher keys at top level)")
    p.add_argument("--overrides", help="override JSON file applied after matching")
    p.add_argument("--out", required=True, help="mapping table output path")
    p.add_argument("--report", required=True, help="ranked-candidate report output path")

    p = sub.add_parser("convert", help="re-convert cached raw records without harvesting")
    _config_arg(p)
    p.add_argument("--in", dest="in_dir", required=True, help="store directory holding cached raw records")
    p.add_argument("--out", dest="out_dir", required=True, help="store directory to publish into")
    p.add_argument("--endpoint", action="append", help="endpoint id (repeatable; default: all)")

    p = sub.add_parser("validate", help="check DCAT-AP mandatory properties of a Turtle file")
    p.add_argument("--in", dest="in_file", required=True, help="Turtle file")

    p = sub.add_parser("serve", help="serve published catalogs over HTTP")
    _config_arg(p)
    p.add_argument("--bind", help="override serve.bind")
    p.add_argument("--port", type=int, help="override serve.port")

    p = sub.add_parser("mock-repo", help="run a fixture OAI-PMH repository")
    p.add_argument("--corpus", required=True, help="corpus JSON file or bundled name (mock-tu, mock-hu, mock-fu)")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8070)
    return parser


def _need_config(args):
    if not args.config:
        raise ConverterError(f"no config given (use --config or set {CONFIG_ENV})")
    return load_config(args.config)


def _schema(ref: str):
    if ref in BUILTIN_IDS and not Path(ref).exists():
        return get_builtin(ref)
    try:
        text = Path(ref).read_text("utf-8")
    except OSError as exc:
        raise ConverterError(f"cannot read schema descriptor {ref}: {exc}") from exc
    return load_schema(text)


def cmd_harvest(args) -> int:
    from .pipeline import harvest_many

    config = _need_config(args)
    ids = args.endpoint or config.endpoint_ids
    for eid in ids:
        config.endpoint(eid)
    results = harvest_many(config, ids)
    status = 0
    for eid in ids:
        res = results[eid]
        if isinstance(res, Exception):
            print(f"error: harvest {eid}: {res}", file=sys.stderr)
            status = 1
        else:
            print(json.dumps(res.to_dict(), sort_keys=True))
    return status


def cmd_match(args) -> int:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    source, target = _schema(args.source), _schema(args.target)
    mconf = MatcherConfig()
    if args.config:
        try:
            data = tomllib.loads(Path(args.config).read_text("utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConverterError(f"cannot read matcher config {args.config}: {exc}") from exc
        mconf = MatcherConfig.from_dict(data.get("matcher", data))
    table = match_schemas(source, target, mconf)
    if args.overrides:
        try:
            _, overrides = load_overrides(Path(args.overrides).read_text("utf-8"))
        except OSError as exc:
            raise ConverterError(f"cannot read overrides {args.overrides}: {exc}") from exc
        table = apply_overrides(table, overrides, source, target)
    Path(args.out).write_text(table.to_json(), encoding="utf-8")
    Path(args.report).write_text(json.dumps(match_report(table, mconf), indent=2, ensure_ascii=False) + "\n",
                                 encoding="utf-8")
    print(f"{len(table.entries)} mapped, {len(table.unmapped)} unmapped -> {args.out}")
    return 0


def cmd_convert(args) -> int:
    from .pipeline import reconvert

    config = _need_config(args)
    results = reconvert(config, args.in_dir, args.out_dir, args.endpoint)
    for res in results.values():
        print(json.dumps(res.summary.to_dict(), sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    from .converter import validate
    from .emit import datasets_from_graph
    from .rdf import parse_turtle

    try:
        text = Path(args.in_file).read_text("utf-8")
    except OSError as exc:
        raise ConverterError(f"cannot read {args.in_file}: {exc}") from exc
    datasets = datasets_from_graph(parse_turtle(text))
    bad = 0
    for ds in datasets:
        result = validate(ds)
        if not result.ok:
            bad += 1
            for v in result.violations:
                print(f"{ds.uri}\t{v.path}\t{v.message}")
    print(f"{len(datasets)} dataset(s), {bad} with violations", file=sys.stderr)
    return 1 if bad else 0


def cmd_serve(args) -> int:
    from dataclasses import replace

    from .service import serve

    config = _need_config(args)
    opts = config.serve
    if args.bind:
        opts = replace(opts, bind=args.bind)
    if args.port is not None:
        opts = replace(opts, port=args.port)
    serve(replace(config, serve=opts))
    return 0


def cmd_mock_repo(args) -> int:
    from .mockrepo import FixtureCorpus, MockRepository, bundled_corpus

    path = Path(args.corpus)
    corpus = FixtureCorpus.load(path) if path.exists() else bundled_corpus(args.corpus)
    repo = MockRepository(corpus, args.bind, args.port)
    print(f"serving {corpus.name} ({len(corpus.records)} records) at {repo.url}", flush=True)
    try:
        repo.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


COMMANDS = {
    "harvest": cmd_harvest,
    "match": cmd_match,
    "convert": cmd_convert,
    "validate": cmd_validate,
    "serve": cmd_serve,
    "mock-repo": cmd_mock_repo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConverterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
