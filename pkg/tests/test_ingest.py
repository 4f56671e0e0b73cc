from __future__ import annotations

import datetime as dt
import json
import os
import threading

import pytest

from lakecat.catalog import Catalog
from lakecat.errors import (
    ConfigInvalid,
    IngestParseError,
    PathOutsideRoot,
    QueueFull,
)
from lakecat.ingest import (
    EventBus,
    HookEvent,
    WatchSpec,
    Watcher,
    apply_hook,
    file_event_to_hook,
    infer_column_kind,
    ingest_table,
    parse_cell,
    parse_sql_dump,
)

from conftest import LISTING1
from dumpgen import write_artefacts_dump

PREFIX = "hdfs://lin02.udl.org:9000/HyperThesau/Artefacts"


def make_listing1_file(root) -> None:
    target = root / "object-168.txt"
    target.write_bytes(b"x" * 36763)
    when = dt.datetime(2020, 12, 29, 12, 0, tzinfo=dt.timezone.utc).timestamp()
    os.utime(target, (when, when))
    return target


# --- hook construction ---------------------------------------------------------


def test_listing1_envelope_exact(tmp_path):
    target = make_listing1_file(tmp_path)
    hook = file_event_to_hook(target, tmp_path, "pliu", PREFIX, group="artefacts")
    assert hook.to_envelope() == LISTING1
    # field order is the canonical hook order, byte for byte
    entry = json.loads(hook.envelope_json())["entities"][0]
    raw_entry = hook.to_envelope()["entities"][0]
    assert list(raw_entry) == ["typeName", "createdBy", "attributes"]
    assert list(raw_entry["attributes"]) == list(LISTING1["entities"][0]["attributes"])
    assert entry == LISTING1["entities"][0]


def test_zero_byte_file(tmp_path):
    target = tmp_path / "empty.bin"
    target.touch()
    hook = file_event_to_hook(target, tmp_path, "u", "lake://raw")
    attrs = hook.entries[0]["attributes"]
    assert attrs["fileSize"] == 0 and attrs["isFile"] is True
    assert attrs["qualifiedName"] == "lake://raw/empty.bin"


def test_directory_matches_stat(tmp_path):
    sub = tmp_path / "box"
    sub.mkdir()
    (sub / "inner.txt").write_text("x")
    hook = file_event_to_hook(sub, tmp_path, "u", "lake://raw")
    attrs = hook.entries[0]["attributes"]
    stat = sub.stat()
    assert attrs["isFile"] is False
    assert attrs["fileSize"] == stat.st_size
    assert (
        attrs["creation_time"]
        == dt.datetime.fromtimestamp(stat.st_mtime, tz=dt.timezone.utc).date().isoformat()
    )


def test_path_outside_root_rejected(tmp_path):
    outside = tmp_path.parent / "elsewhere.txt"
    outside.write_text("x")
    with pytest.raises(PathOutsideRoot):
        file_event_to_hook(outside, tmp_path / "root-not-here", "u", "lake://raw")


# --- bus ------------------------------------------------------------------------


@pytest.fixture
def bus_cat(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    bus = EventBus(cat, journal_dir=tmp_path / "bus")
    bus.start()
    yield cat, bus, tmp_path
    bus.stop()
    cat.close()


def _hook_for(tmp_path, name: str, content: bytes = b"abc") -> HookEvent:
    target = tmp_path / name
    target.write_bytes(content)
    return file_event_to_hook(target, tmp_path, "pliu", "lake://raw")


def test_publish_is_async_then_visible(bus_cat):
    cat, bus, tmp = bus_cat
    hook = _hook_for(tmp, "a.txt")
    bus.publish(hook)
    bus.drain()
    entity = cat.entity_by_qualified_name("lake://raw/a.txt")
    assert entity is not None and entity.attributes["fileSize"] == 3
    assert cat.storage_path(entity.entity_id) == "raw/a.txt"


def test_same_delivery_twice_one_entity(bus_cat):
    cat, bus, tmp = bus_cat
    hook = _hook_for(tmp, "b.txt")
    bus.publish(hook)
    bus.publish(HookEvent(entries=hook.entries, delivery_id=hook.delivery_id,
                          storage_paths=hook.storage_paths))
    bus.drain()
    assert sum(1 for e in cat.active_entities()) == 1
    # redeliveries of an applied delivery stay no-ops even after later changes
    assert apply_hook(cat, hook) == 0


def test_update_hook_patches_existing(bus_cat):
    cat, bus, tmp = bus_cat
    bus.publish(_hook_for(tmp, "c.txt", b"12"))
    bus.drain()
    bus.publish(_hook_for(tmp, "c.txt", b"1234"))
    bus.drain()
    entity = cat.entity_by_qualified_name("lake://raw/c.txt")
    assert entity.attributes["fileSize"] == 4
    assert len(cat.active_entities()) == 1


def test_many_publishes_count_oracle(bus_cat):
    cat, bus, tmp = bus_cat
    n = 10_000
    entries = []
    for i in range(n):
        entries.append(
            {
                "typeName": "hdfs_path",
                "createdBy": "gen",
                "attributes": {
                    "qualifiedName": f"lake://raw/bulk/{i}.txt",
                    "name": f"{i}.txt",
                    "path": "lake://raw/bulk",
                },
            }
        )
        bus.publish(HookEvent(entries=[entries[-1]], source="test"))
    bus.drain()
    assert len(cat.active_entities()) == n


def test_queue_full_backpressure(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    bus = EventBus(cat, journal_dir=None, maxsize=2)
    hook = _hook_for(tmp_path, "x.txt")
    bus.publish(hook)
    bus.publish(HookEvent(entries=hook.entries))
    with pytest.raises(QueueFull):
        bus.publish(HookEvent(entries=hook.entries))
    cat.close()


def test_journal_recovery_applies_pending(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    bus = EventBus(cat, journal_dir=tmp_path / "bus")
    hook = _hook_for(tmp_path, "crashy.txt")
    bus.publish(hook)  # journaled but never consumed: simulated crash
    assert len(list((tmp_path / "bus").glob("*.json"))) == 1
    recovered = EventBus(cat, journal_dir=tmp_path / "bus")
    recovered.start()
    recovered.drain()
    recovered.stop()
    assert cat.entity_by_qualified_name("lake://raw/crashy.txt") is not None
    assert list((tmp_path / "bus").glob("*.json")) == []
    cat.close()


def test_invalid_entries_skipped_not_fatal(bus_cat):
    cat, bus, tmp = bus_cat
    bad = HookEvent(
        entries=[
            {"typeName": "hdfs_path", "createdBy": "u", "attributes": {"qualifiedName": ""}},
            {"typeName": "nope", "createdBy": "u", "attributes": {"qualifiedName": "lake://x"}},
            {
                "typeName": "hdfs_path",
                "createdBy": "u",
                "attributes": {
                    "qualifiedName": "lake://raw/good.txt",
                    "name": "good.txt",
                    "path": "lake://raw",
                },
            },
        ]
    )
    bus.publish(bad)
    bus.drain()
    assert cat.entity_by_qualified_name("lake://raw/good.txt") is not None
    assert len(cat.active_entities()) == 1


# --- watcher -------------------------------------------------------------------------


def test_watcher_convergence(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    bus = EventBus(cat, journal_dir=None)
    bus.start()
    root = tmp_path / "watched"
    root.mkdir()
    watcher = Watcher(WatchSpec(root=root, globs=["*.txt"], principal="pliu", prefix="lake://raw"))
    for name in ("one.txt", "two.txt", "three.txt"):
        (root / name).write_text(name)
    (root / "ignored.bin").write_text("nope")
    for event in watcher.scan():
        bus.publish(event)
    bus.drain()
    txt_files = {f"lake://raw/{p.name}" for p in root.glob("*.txt")}
    assert {e.qualified_name for e in cat.active_entities()} == txt_files
    # update + delete between polls
    (root / "one.txt").write_text("bigger content")
    (root / "two.txt").unlink()
    for event in watcher.scan():
        bus.publish(event)
    bus.drain()
    live = {e.qualified_name: e for e in cat.active_entities()}
    assert set(live) == {"lake://raw/one.txt", "lake://raw/three.txt"}
    assert live["lake://raw/one.txt"].attributes["fileSize"] == len("bigger content")
    tomb = cat.entity_by_qualified_name("lake://raw/two.txt")
    assert tomb is None  # active index no longer lists it
    bus.stop()
    cat.close()


def test_create_and_delete_between_polls_nets_nothing(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    bus = EventBus(cat, journal_dir=None)
    bus.start()
    root = tmp_path / "watched"
    root.mkdir()
    watcher = Watcher(WatchSpec(root=root, globs=["*"], principal="u", prefix="lake://raw"))
    watcher.scan()
    ghost = root / "ghost.txt"
    ghost.write_text("now you see me")
    ghost.unlink()
    for event in watcher.scan():
        bus.publish(event)
    bus.drain()
    assert cat.active_entities() == []
    bus.stop()
    cat.close()


def test_watcher_background_loop(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    bus = EventBus(cat, journal_dir=None)
    bus.start()
    root = tmp_path / "watched"
    root.mkdir()
    watcher = Watcher(WatchSpec(root=root, globs=["*"], interval_ms=20, principal="u", prefix="lake://raw"))
    stop = threading.Event()
    thread = threading.Thread(target=watcher.run, args=(bus, stop), daemon=True)
    thread.start()
    (root / "live.txt").write_text("x")
    for _ in range(100):
        bus.drain()
        if cat.entity_by_qualified_name("lake://raw/live.txt"):
            break
        threading.Event().wait(0.02)
    stop.set()
    thread.join(timeout=2)
    assert cat.entity_by_qualified_name("lake://raw/live.txt") is not None
    bus.stop()
    cat.close()


def test_watch_spec_validation(tmp_path):
    with pytest.raises(ConfigInvalid):
        WatchSpec(root=tmp_path / "missing")
    with pytest.raises(ConfigInvalid):
        WatchSpec(root=tmp_path, interval_ms=0)


# --- tabular ingestion -------------------------------------------------------------


@pytest.fixture
def tab_cat(tmp_path):
    cat = Catalog(tmp_path / "cat", snapshot_every=None)
    cat.ensure_builtin_types()
    yield cat, tmp_path / "lake"
    cat.close()


def test_sql_dump_32_tables(tab_cat, tmp_path):
    cat, lake = tab_cat
    dump = write_artefacts_dump(tmp_path / "artefacts.sql")
    results = ingest_table(cat, lake, "artefacts", dump, "pliu")
    assert len(results) == 32
    tables = {r["descriptor"].table_name for r in results}
    assert {"objects", "musee", "location"} <= tables
    objects = next(r for r in results if r["descriptor"].table_name == "objects")
    assert objects["descriptor"].columns[0] == ("id", "int")
    assert objects["descriptor"].row_count == 5
    assert objects["entity"].attributes["row_count"] == 5
    assert objects["process"].kind == "ingestion"
    assert (lake / "artefacts" / "objects.csv").exists()


def test_header_only_delimited_file(tab_cat, tmp_path):
    cat, lake = tab_cat
    src = tmp_path / "empty.csv"
    src.write_text("id,name\n")
    result = ingest_table(cat, lake, "misc", src, "u")[0]
    assert result["descriptor"].row_count == 0
    assert result["entity"].attributes["row_count"] == 0


def test_inference_matches_try_parse_oracle(tmp_path):
    """Oracle: a column has kind K iff every non-null value parses as K, in
    the fixed specificity order."""
    columns = {
        "ints": ["1", "2", "NULL", "-3"],
        "floats": ["1.5", "2", ""],
        "bools": ["true", "FALSE", "True"],
        "dates": ["2020-12-29", "2021-01-05"],
        "strings": ["x", "2", "true"],
        "allnull": ["", "NULL"],
    }
    expect = {"ints": "int", "floats": "float", "bools": "boolean",
              "dates": "date", "strings": "string", "allnull": "string"}
    for name, values in columns.items():
        got = infer_column_kind(values)
        assert got == expect[name]
        non_null = [v for v in values if v not in ("", "NULL")]
        for kind in ("int", "float", "boolean", "date"):
            all_parse = all(parse_cell(v, kind) is not None for v in non_null)
            if kind == got:
                assert all_parse or not non_null
            if not all_parse:
                assert got != kind


def test_sql_dump_rejects_other_statements(tmp_path):
    bad = tmp_path / "bad.sql"
    bad.write_text("CREATE TABLE t (id INT);\nDROP TABLE t;\n")
    with pytest.raises(IngestParseError) as err:
        parse_sql_dump(bad)
    assert "DROP" in str(err.value)


def test_sql_quoting_and_nulls(tmp_path):
    dump = tmp_path / "q.sql"
    dump.write_text(
        "CREATE TABLE t (id INT, label VARCHAR(20));\n"
        "INSERT INTO t VALUES (1, 'l''arc'), (2, NULL);\n"
    )
    [(name, header, kinds, rows)] = parse_sql_dump(dump)
    assert rows == [["1", "l'arc"], ["2", ""]]


def test_duplicate_table_ingest_rejected(tab_cat, tmp_path):
    cat, lake = tab_cat
    src = tmp_path / "t.csv"
    src.write_text("id\n1\n")
    ingest_table(cat, lake, "misc", src, "u")
    from lakecat.errors import DuplicateQualifiedName

    with pytest.raises(DuplicateQualifiedName):
        ingest_table(cat, lake, "misc", src, "u")
