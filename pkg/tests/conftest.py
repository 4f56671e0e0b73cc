from __future__ import annotations

import json

import pytest

from lakecat.catalog import Catalog

# The canonical HDFS-hook envelope the ingestion path must reproduce exactly.
LISTING1 = {
    "entities": [
        {
            "typeName": "hdfs_path",
            "createdBy": "pliu",
            "attributes": {
                "qualifiedName": "hdfs://lin02.udl.org:9000/HyperThesau/Artefacts/object-168.txt",
                "name": "object-168.txt",
                "path": "hdfs://lin02.udl.org:9000/HyperThesau/Artefacts",
                "user": "pliu",
                "group": "artefacts",
                "creation_time": "2020-12-29",
                "owner": "pliu",
                "numberOfReplicas": 0,
                "fileSize": 36763,
                "isFile": True,
            },
        }
    ]
}

HDFS_PATH_TYPE = {
    "type_name": "hdfs_path",
    "version": 1,
    "attributes": [
        {"name": "qualifiedName", "type": "string", "required": True},
        {"name": "name", "type": "string", "required": True},
        {"name": "path", "type": "string", "required": True},
        {"name": "user", "type": "string"},
        {"name": "group", "type": "string"},
        {"name": "creation_time", "type": "date"},
        {"name": "owner", "type": "string"},
        {"name": "numberOfReplicas", "type": "int"},
        {"name": "fileSize", "type": "int"},
        {"name": "isFile", "type": "boolean"},
    ],
}


def listing1_attributes() -> dict:
    return json.loads(json.dumps(LISTING1["entities"][0]["attributes"]))


@pytest.fixture
def cat(tmp_path) -> Catalog:
    catalog = Catalog(tmp_path / "catalog", snapshot_every=None)
    yield catalog
    catalog.close()


@pytest.fixture
def hdfs_cat(cat: Catalog) -> Catalog:
    cat.register_type_dict(HDFS_PATH_TYPE)
    return cat


def create_listing1_entity(catalog: Catalog):
    attrs = listing1_attributes()
    return catalog.create_entity(
        "hdfs_path", attrs["qualifiedName"], attrs, actor="pliu"
    )


# one pass/fail line per acceptance criterion at the end of the run
_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::", 1)[1]
        _acceptance_results[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _acceptance_results.items():
        terminalreporter.write_line(f"{outcome}  {name}")
