"""Pipeline configuration read from a TOML file."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from urllib.parse import urlsplit

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .converter import CatalogMeta, TransformRules
from .errors import ConfigError
from .matcher import MatcherConfig
from .oaipmh import EndpointConfig

CONFIG_ENV = "CONVERTER_CONFIG"


@dataclass(frozen=True)
class EndpointSettings:
    endpoint: EndpointConfig
    catalog: CatalogMeta
    mapping: str = "builtin"  # "builtin", "auto", or a mapping-table JSON path
    overrides: Optional[Path] = None

    @property
    def id(self) -> str:
        return self.endpoint.id


@dataclass(frozen=True)
class ServeOptions:
    bind: str = "127.0.0.1"
    port: int = 8080
    page_size: int = 10


@dataclass(frozen=True)
class PipelineConfig:
    base_uri: str
    state_dir: Path
    output_dir: Path
    endpoints: tuple[EndpointSettings, ...] = ()
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    transform: TransformRules = field(default_factory=TransformRules)
    serve: ServeOptions = field(default_factory=ServeOptions)

    def __post_init__(self):
        parts = urlsplit(self.base_uri)
        if not parts.scheme or not parts.netloc:
            raise ConfigError(f"base_uri {self.base_uri!r} is not absolute")
        ids = [e.id for e in self.endpoints]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ConfigError(f"duplicate endpoint ids: {dupes}")
        if self.serve.page_size < 1:
            raise ConfigError("serve.page_size must be at least 1")

    def endpoint(self, endpoint_id: str) -> EndpointSettings:
        for e in self.endpoints:
            if e.id == endpoint_id:
                return e
        raise ConfigError(f"unknown endpoint {endpoint_id!r}")

    @property
    def endpoint_ids(self) -> list[str]:
        return [e.id for e in self.endpoints]


def _path(value, root: Path) -> Path:
    p = Path(os.path.expanduser(str(value)))
    return p if p.is_absolute() else root / p


def parse_config(data: dict, root: Path = Path(".")) -> PipelineConfig:
    """Build a PipelineConfig from parsed TOML; relative paths resolve against ``root``."""
    try:
        endpoints = []
        for raw in data.get("endpoints", []):
            eid = raw.get("id")
            ep = EndpointConfig(
                id=eid or "",
                base_url=raw.get("base_url", ""),
                metadata_prefix=raw.get("metadata_prefix", "oai_dc"),
                set_spec=raw.get("set"),
                page_timeout=float(raw.get("page_timeout", 30.0)),
                max_retries=int(raw.get("max_retries", 3)),
                backoff_base=float(raw.get("backoff_base", 1.0)),
            )
            mapping = raw.get("mapping", "builtin")
            if mapping not in ("builtin", "auto"):
                mapping = str(_path(mapping, root))
            overrides = raw.get("overrides")
            endpoints.append(EndpointSettings(
                endpoint=ep,
                catalog=CatalogMeta.from_dict(raw.get("catalog", {}), f"endpoint {eid!r}"),
                mapping=mapping,
                overrides=_path(overrides, root) if overrides else None,
            ))
        serve = data.get("serve", {})
        return PipelineConfig(
            base_uri=data.get("base_uri", ""),
            state_dir=_path(data.get("state_dir", "state"), root),
            output_dir=_path(data.get("output_dir", "output"), root),
            endpoints=tuple(endpoints),
            matcher=MatcherConfig.from_dict(data.get("matcher", {})),
            transform=TransformRules.from_dict(data.get("transform", {})),
            serve=ServeOptions(
                bind=str(serve.get("bind", "127.0.0.1")),
                port=int(serve.get("port", 8080)),
                page_size=int(serve.get("page_size", 10)),
            ),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text("utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {str(path)!r} not found") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {str(path)!r} is not valid TOML: {exc}") from exc
    return parse_config(data, path.resolve().parent)
