import json
import os
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

from conftest import GOLDEN, toml_config
from dcat_converter.cli import COMMANDS, main
from dcat_converter.config import CONFIG_ENV
from dcat_converter.schema import bundled_schema_text, get_builtin

SHIPPED = Path(__file__).resolve().parents[1] / "src" / "dcat_converter" / "mappings"


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert "invalid choice" in capsys.readouterr().err


def test_missing_subcommand_and_flags(capsys):
    assert main([]) == 2
    assert main(["match", "--source", "oai_dc"]) == 2
    assert main(["serve", "--port", "eighty"]) == 2


@pytest.mark.parametrize("command", [None, *COMMANDS])
def test_help_everywhere(command, capsys):
    argv = ([command] if command else []) + ["--help"]
    assert main(argv) == 0
    assert "usage:" in capsys.readouterr().out


def test_harvest_missing_config_file(tmp_path, capsys):
    assert main(["harvest", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "not found" in capsys.readouterr().err


def test_harvest_without_any_config(monkeypatch, capsys):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert main(["harvest"]) == 1
    assert CONFIG_ENV in capsys.readouterr().err


def test_harvest_and_validate(repos, tmp_path, capsys):
    cfg = toml_config(tmp_path / "pipeline.toml", repos)
    assert main(["-q", "harvest", "--config", str(cfg)]) == 0
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [(s["endpoint"], s["seen"], s["live"]) for s in lines] == [("tu", 25, 23), ("hu", 25, 23), ("fu", 25, 23)]
    full = tmp_path / "store" / "fu" / "snapshots" / "000001" / "fu.ttl"
    assert main(["validate", "--in", str(full)]) == 0
    assert "23 dataset(s), 0 with violations" in capsys.readouterr().err


def test_config_from_environment(repos, tmp_path, monkeypatch, capsys):
    cfg = toml_config(tmp_path / "pipeline.toml", repos)
    monkeypatch.setenv(CONFIG_ENV, str(cfg))
    assert main(["-q", "harvest", "--endpoint", "hu"]) == 0
    assert json.loads(capsys.readouterr().out)["endpoint"] == "hu"


def test_harvest_unknown_endpoint(repos, tmp_path, capsys):
    cfg = toml_config(tmp_path / "pipeline.toml", repos)
    assert main(["harvest", "--config", str(cfg), "--endpoint", "zz"]) == 1


def test_harvest_failure_exit_code(repos, tmp_path, capsys):
    cfg = toml_config(tmp_path / "pipeline.toml", repos)
    repos["tu"].stop()
    assert main(["-q", "harvest", "--config", str(cfg), "--endpoint", "tu"]) == 1
    assert "harvest tu" in capsys.readouterr().err


def test_convert_offline(repos, tmp_path, capsys):
    cfg = toml_config(tmp_path / "pipeline.toml", repos)
    assert main(["-q", "harvest", "--config", str(cfg)]) == 0
    for r in repos.values():
        r.stop()
    capsys.readouterr()
    assert main(["-q", "convert", "--config", str(cfg), "--in", str(tmp_path / "store"),
                 "--out", str(tmp_path / "again")]) == 0
    assert [json.loads(line)["live"] for line in capsys.readouterr().out.splitlines()] == [23, 23, 23]
    a = (tmp_path / "store" / "hu" / "snapshots" / "000001" / "hu.ttl").read_bytes()
    b = (tmp_path / "again" / "hu" / "snapshots" / "000001" / "hu.ttl").read_bytes()
    assert a == b


def test_match_partitions_fifteen_terms(tmp_path):
    out, report = tmp_path / "m.json", tmp_path / "r.json"
    assert main(["match", "--source", "oai_dc", "--target", "dcat-ap", "--out", str(out), "--report", str(report)]) == 0
    table = json.loads(out.read_text())
    mapped = [e["source_term"] for e in table["entries"]]
    assert len(mapped) + len(table["unmapped"]) == 15
    assert set(mapped).isdisjoint(table["unmapped"])
    assert set(mapped) | set(table["unmapped"]) == set(get_builtin("oai_dc").names)
    ranked = json.loads(report.read_text())
    assert len(ranked["terms"]) == 15


def test_match_with_overrides_reproduces_shipped_table(tmp_path):
    # descriptors given as files this time
    src, tgt = tmp_path / "oai_dc.json", tmp_path / "dcat.json"
    src.write_text(bundled_schema_text("oai_dc"))
    tgt.write_text(bundled_schema_text("dcat-ap"))
    out = tmp_path / "m.json"
    assert main(["match", "--source", str(src), "--target", str(tgt), "--overrides",
                 str(SHIPPED / "oai_dc.overrides.json"), "--out", str(out), "--report", str(tmp_path / "r.json")]) == 0
    assert out.read_bytes() == (SHIPPED / "oai_dc__dcat-ap.json").read_bytes()


def test_match_threshold_from_config(tmp_path):
    conf = tmp_path / "m.toml"
    conf.write_text("[matcher]\nthreshold = 0.99\n")
    out = tmp_path / "m.json"
    assert main(["match", "--source", "oai_dc", "--target", "dcat-ap", "--config", str(conf), "--out", str(out),
                 "--report", str(tmp_path / "r.json")]) == 0
    # only exact-label pairs survive a 0.99 threshold
    table = json.loads(out.read_text())
    assert all(e["source_term"] == e["target_term"] for e in table["entries"])


def test_match_bad_source(tmp_path, capsys):
    assert main(["match", "--source", str(tmp_path / "missing.json"), "--target", "dcat-ap",
                 "--out", str(tmp_path / "m"), "--report", str(tmp_path / "r")]) == 1


def test_validate_reports_violations(tmp_path, capsys):
    text = (GOLDEN / "hu-dataset-2.ttl").read_text()
    bad = tmp_path / "bad.ttl"
    bad.write_text("\n".join(line for line in text.splitlines() if "dct:description" not in line) + "\n")
    assert main(["validate", "--in", str(GOLDEN / "hu-dataset-2.ttl")]) == 0
    assert main(["validate", "--in", str(bad)]) == 1
    assert "mandatory property description absent" in capsys.readouterr().out
    assert main(["validate", "--in", str(tmp_path / "missing.ttl")]) == 1


def test_validate_parse_error(tmp_path):
    broken = tmp_path / "broken.ttl"
    broken.write_text("<https://a/> <https://b/> \"x\"")
    assert main(["validate", "--in", str(broken)]) == 1


def _wait_for(url, proc, timeout=10):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise AssertionError(proc.stderr.read())
        try:
            return requests.get(url, timeout=1)
        except requests.ConnectionError:
            time.sleep(0.05)
    raise AssertionError(f"{url} never came up")


def test_mock_repo_and_serve_subprocesses(tmp_path):
    repo_port, svc_port = free_port(), free_port()
    env = dict(os.environ, PYTHONUNBUFFERED="1")
    repo = subprocess.Popen([sys.executable, "-m", "dcat_converter", "mock-repo", "--corpus", "mock-tu",
                             "--port", str(repo_port)], stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
                            env=env)
    try:
        r = _wait_for(f"http://127.0.0.1:{repo_port}/oai?verb=Identify", repo)
        assert "<repositoryName>mock-tu</repositoryName>" in r.text
        cfg = tmp_path / "pipeline.toml"
        cfg.write_text(f'base_uri = "https://bop.example"\nstate_dir = "state"\noutput_dir = "store"\n\n'
                       f'[[endpoints]]\nid = "tu"\nbase_url = "http://127.0.0.1:{repo_port}/oai"\n'
                       f'[endpoints.catalog]\ntitle = "T"\ndescription = "D"\npublisher = "P"\n')
        done = subprocess.run([sys.executable, "-m", "dcat_converter", "-q", "harvest", "--config", str(cfg)],
                              capture_output=True, text=True, env=env, timeout=60)
        assert done.returncode == 0, done.stderr
        svc = subprocess.Popen([sys.executable, "-m", "dcat_converter", "serve", "--config", str(cfg),
                                "--port", str(svc_port)], stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
                               env=env)
        try:
            health = _wait_for(f"http://127.0.0.1:{svc_port}/health", svc).json()
            assert health["endpoints"]["tu"]["datasets"] == 23
        finally:
            svc.terminate()
            svc.wait(10)
    finally:
        repo.terminate()
        repo.wait(10)
