import json
import shutil
from pathlib import Path

import pytest
from hypothesis import settings

from dcat_converter.config import parse_config
from dcat_converter.mockrepo import MockRepository, bundled_corpus

HERE = Path(__file__).parent
GOLDEN = HERE / "fixtures" / "golden"
EXAMPLES = Path(__file__).resolve().parents[1] / "src" / "dcat_converter" / "examples"
NAMES = ("tu", "hu", "fu")
BASE = "https://bop.example"

# timing varies too much on shared runners for per-example deadlines
settings.register_profile("repo", deadline=None)
settings.load_profile("repo")


@pytest.fixture
def repos():
    running = {n: MockRepository(bundled_corpus(f"mock-{n}")).start() for n in NAMES}
    yield running
    for r in running.values():
        r.stop()


def config_data(repos, page_size=10, **extra):
    endpoints = []
    for n, repo in repos.items():
        ep = {
            "id": n,
            "base_url": repo.url,
            "backoff_base": 0.0,
            "catalog": {"title": f"Catalogue {n}", "description": f"Datasets from {n}", "publisher": f"Uni {n}"},
        }
        if n == "fu":
            ep["overrides"] = "fu.overrides.json"
        endpoints.append(ep)
    data = {"base_uri": BASE, "state_dir": "state", "output_dir": "store", "endpoints": endpoints,
            "serve": {"page_size": page_size}}
    data.update(extra)
    return data


def write_overrides(root: Path) -> None:
    shutil.copy(EXAMPLES / "fu.overrides.json", root / "fu.overrides.json")


@pytest.fixture
def make_config(tmp_path):
    def build(repos, root=None, **kw):
        root = Path(root or tmp_path)
        root.mkdir(parents=True, exist_ok=True)
        write_overrides(root)
        return parse_config(config_data(repos, **kw), root)
    return build


def toml_config(path: Path, repos, **kw) -> Path:
    """Write a TOML config (for CLI tests); the subset needed here is flat enough to emit by hand."""
    data = config_data(repos, **kw)
    write_overrides(path.parent)
    lines = [f'base_uri = "{data["base_uri"]}"', 'state_dir = "state"', 'output_dir = "store"',
             "", "[serve]", f'page_size = {data["serve"]["page_size"]}']
    for ep in data["endpoints"]:
        lines += ["", "[[endpoints]]"]
        for k in ("id", "base_url", "overrides"):
            if k in ep:
                lines.append(f"{k} = {json.dumps(ep[k])}")
        lines.append(f"backoff_base = {ep['backoff_base']}")
        lines.append("[endpoints.catalog]")
        for k, v in ep["catalog"].items():
            lines.append(f"{k} = {json.dumps(v)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# criterion number -> (verdict, description, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {verdict} - {title}" + (f" ({detail})" if detail else ""))
