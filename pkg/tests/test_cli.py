from __future__ import annotations

import json
import os

import pytest
from click.testing import CliRunner

from lakecat.cli import main

from dumpgen import write_artefacts_dump


@pytest.fixture
def runner(tmp_path):
    r = CliRunner()
    base = [
        "--local",
        "--data", str(tmp_path / "catalog"),
        "--lake-root", str(tmp_path / "lake"),
    ]

    def invoke(*args, principal="admin", expect=0):
        result = r.invoke(main, base + ["--principal", principal] + list(args))
        if result.exception and not isinstance(result.exception, SystemExit):
            raise result.exception
        assert result.exit_code == expect, result.output
        return result

    return invoke, tmp_path


def test_health_local(runner):
    invoke, _ = runner
    result = invoke("health")
    assert "ok" in result.output


def test_ingest_file_prints_qualified_name(runner, tmp_path):
    invoke, _ = runner
    payload = tmp_path / "object-168.txt"
    payload.write_bytes(b"x" * 100)
    result = invoke(
        "ingest", "file", str(payload),
        "--prefix", "hdfs://lin02.udl.org:9000/HyperThesau/Artefacts",
    )
    assert result.output.strip().endswith(
        "hdfs://lin02.udl.org:9000/HyperThesau/Artefacts/object-168.txt"
    )


def test_search_lists_tagged_table(runner, tmp_path):
    invoke, _ = runner
    dump = write_artefacts_dump(tmp_path / "artefacts.sql")
    invoke("ingest", "table", str(dump), "--source", "artefacts")
    spec = tmp_path / "join.json"
    spec.write_text(json.dumps({
        "kind": "join",
        "inputs": [
            {"table": "objects"},
            {"table": "musee", "key": "id", "left": "id_musee"},
            {"table": "location", "key": "id", "left": "id_location"},
        ],
        "output": "objects_origin",
    }))
    invoke("transform", str(spec))
    invoke("classification", "define", "enriched")
    found = invoke("--json", "search", "name:objects_origin")
    entity_id = json.loads(found.output)["hits"][0]["entity_id"]
    invoke("tag", entity_id, "enriched")
    result = invoke("search", "classification:enriched")
    assert "lake://artefacts/objects_origin" in result.output
    assert "total: 1" in result.output


def test_term_entities_expand_two_rows(runner, tmp_path):
    invoke, _ = runner
    doc = tmp_path / "thesaurus.json"
    doc.write_text(json.dumps({
        "thesaurus_id": "fr", "title": "Artefacts", "language": "fr",
        "categories": [{"label": "armement", "children": [{"term": "bouclier"}]}],
        "relations": [],
    }, ensure_ascii=False), encoding="utf-8")
    invoke("thesaurus", "import", str(doc))
    zh = tmp_path / "zh.json"
    zh.write_text(json.dumps({
        "thesaurus_id": "zh", "title": "考古学", "language": "zh",
        "categories": [{"label": "武器", "children": [{"term": "盾"}]}],
        "relations": [
            {"from": ["zh", ["武器", "盾"]], "to": ["fr", ["armement", "bouclier"]],
             "relation": "synonym"},
        ],
    }, ensure_ascii=False), encoding="utf-8")
    invoke("thesaurus", "import", str(zh))
    bouclier_id = json.loads(invoke("--json", "term", "find", "bouclier").output)[0]["term_id"]
    for name, qn in (("bibliographie", "lake://artefacts/bibliographie"),
                     ("204docannexe.csv", "lake://raw/204docannexe.csv")):
        record = tmp_path / f"{name}.json"
        record.write_text(json.dumps({
            "type_name": "hdfs_path",
            "qualified_name": qn,
            "attributes": {"qualifiedName": qn, "name": name, "path": qn.rsplit("/", 1)[0]},
        }))
        created = invoke("--json", "entity", "create", str(record))
        entity_id = json.loads(created.output)["entity_id"]
        invoke("associate", entity_id, bouclier_id)
    out = invoke("term", "entities", "bouclier")
    assert "bibliographie" in out.output and "204docannexe.csv" in out.output
    expanded = invoke("term", "entities", "盾", "--expand")
    rows = [l for l in expanded.output.splitlines() if "lake://" in l]
    assert len(rows) == 2
    direct = invoke("term", "entities", "盾")
    assert "(no results)" in direct.output


def test_exit_codes(runner, tmp_path):
    invoke, _ = runner
    invoke("entity", "show", "missing", expect=1)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"type_name": "ghost", "qualified_name": "x", "attributes": {}}))
    invoke("entity", "create", str(bad), expect=1)


def test_quality_via_cli(runner, tmp_path):
    invoke, _ = runner
    src = tmp_path / "rows.csv"
    src.write_text("id,name\n1,a\n1,a\n2,b\n3,\n")
    invoke("ingest", "table", str(src), "--source", "misc")
    found = invoke("--json", "search", "name:rows")
    entity_id = json.loads(found.output)["hits"][0]["entity_id"]
    result = invoke("quality", entity_id)
    assert "duplicate_rows: 1" in result.output
    assert "25.0" in result.output


def test_lineage_via_cli(runner, tmp_path):
    invoke, _ = runner
    src = tmp_path / "base.csv"
    src.write_text("id\n1\n2\n")
    invoke("ingest", "table", str(src), "--source", "misc")
    spec = tmp_path / "copy.json"
    spec.write_text(json.dumps({"kind": "select", "input": "base", "output": "copy"}))
    invoke("transform", str(spec))
    found = invoke("--json", "search", "name:copy")
    entity_id = json.loads(found.output)["hits"][0]["entity_id"]
    result = invoke("lineage", entity_id, "--direction", "up")
    assert "->" in result.output and "process" in result.output


def test_watch_once_with_state_file(runner, tmp_path):
    invoke, _ = runner
    watched = tmp_path / "watched"
    watched.mkdir()
    (watched / "a.txt").write_text("alpha")
    (watched / "b.txt").write_text("beta")
    config = tmp_path / "watch.json"
    config.write_text(json.dumps({
        "root": str(watched), "globs": ["*.txt"], "interval_ms": 50,
        "principal": "pliu", "prefix": "lake://raw",
    }))
    state = tmp_path / "watch-state.json"
    result = invoke("watch", "--config", str(config), "--once", "--state-file", str(state))
    assert "published 2 change(s)" in result.output
    page = invoke("--json", "search", "type:hdfs_path")
    assert json.loads(page.output)["total"] == 2
    # a delete between runs tombstones the entity thanks to the state file
    (watched / "b.txt").unlink()
    result = invoke("watch", "--config", str(config), "--once", "--state-file", str(state))
    assert "published 1 change(s)" in result.output
    page = invoke("--json", "search", "type:hdfs_path")
    hits = json.loads(page.output)
    assert hits["total"] == 1
    assert hits["hits"][0]["qualified_name"] == "lake://raw/a.txt"


def test_admin_cli(runner, tmp_path):
    invoke, _ = runner
    invoke("admin", "principal", "create", "pliu", "--groups", "artefacts")
    invoke("admin", "role", "create", "archaeologists", "--members", "artefacts")
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({
        "role": "archaeologists",
        "resource": {"kind": "api-action", "pattern": "search"},
        "actions": ["read"],
        "effect": "allow",
    }))
    invoke("admin", "policy", "put", str(policy))
    listed = invoke("--json", "admin", "policy", "list")
    policies = json.loads(listed.output)
    assert any(p["role"] == "archaeologists" for p in policies)
    # pliu may now search (empty catalog, zero hits) but not administrate
    invoke("search", "type:table", principal="pliu")
    invoke("admin", "role", "create", "x", principal="pliu", expect=1)
