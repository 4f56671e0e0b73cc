"""Command-line client for the catalog service.

Talks HTTP to a running server by default; ``--local`` runs the whole stack
in-process against local directories (handy for tests and single-user desks).
Exit codes: 0 success, 1 user error (4xx), 2 server/connection error.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx

from .gateway import PRINCIPAL_HEADER, ServerConfig, create_app


class Client:
    def __init__(self, server: str | None, local_cfg: ServerConfig | None, principal: str):
        self.principal = principal
        self._server = server
        self._local_cfg = local_cfg
        self._testclient = None

    def __enter__(self):
        if self._local_cfg is not None:
            from fastapi.testclient import TestClient

            self._testclient = TestClient(create_app(self._local_cfg))
            self._testclient.__enter__()
        return self

    def __exit__(self, *exc):
        if self._testclient is not None:
            self._testclient.__exit__(*exc)

    def request(self, method: str, path: str, **kwargs):
        headers = kwargs.pop("headers", {})
        headers[PRINCIPAL_HEADER] = self.principal
        try:
            if self._testclient is not None:
                response = self._testclient.request(method, path, headers=headers, **kwargs)
            else:
                response = httpx.request(
                    method, f"{self._server}{path}", headers=headers, timeout=60, **kwargs
                )
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach server: {exc}", err=True)
            sys.exit(2)
        try:
            payload = response.json()
        except json.JSONDecodeError:
            payload = {}
        if response.status_code >= 500:
            _bail(payload, 2)
        if response.status_code >= 400:
            _bail(payload, 1)
        return payload


def _bail(payload: dict, code: int):
    error = payload.get("error", {})
    click.echo(
        f"error [{error.get('code', 'unknown')}]: {error.get('message', 'request failed')}",
        err=True,
    )
    sys.exit(code)


def emit(ctx: click.Context, data, table_keys: list[str] | None = None):
    if ctx.obj["json"]:
        click.echo(json.dumps(data, indent=2, ensure_ascii=False))
        return
    if isinstance(data, list):
        rows = [d if isinstance(d, dict) else {"value": d} for d in data]
        if not rows:
            click.echo("(no results)")
            return
        keys = table_keys or list(rows[0])
        widths = {k: max(len(k), *(len(str(r.get(k, ""))) for r in rows)) for k in keys}
        click.echo("  ".join(k.ljust(widths[k]) for k in keys))
        for r in rows:
            click.echo("  ".join(str(r.get(k, "")).ljust(widths[k]) for k in keys))
    elif isinstance(data, dict):
        for k, v in data.items():
            if isinstance(v, (dict, list)):
                v = json.dumps(v, ensure_ascii=False)
            click.echo(f"{k}: {v}")
    else:
        click.echo(str(data))


@click.group()
@click.option("--server", default="http://127.0.0.1:8400", envvar="LAKE_SERVER", show_default=True)
@click.option("--local", is_flag=True, help="Run embedded against local directories.")
@click.option("--data", type=click.Path(path_type=Path), default=Path("./lake-data"),
              help="Catalog directory for --local mode.")
@click.option("--lake-root", type=click.Path(path_type=Path), default=Path("./lake-storage"),
              help="Managed storage directory for --local mode.")
@click.option("--principal", default="admin", envvar="LAKE_PRINCIPAL", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx, server, local, data, lake_root, principal, as_json):
    """lake: metadata catalog client."""
    ctx.ensure_object(dict)
    ctx.obj["json"] = as_json
    local_cfg = ServerConfig(data_dir=data, lake_root=lake_root) if local else None
    ctx.obj["client_factory"] = lambda: Client(None if local else server, local_cfg, principal)


def _client(ctx) -> Client:
    return ctx.obj["client_factory"]()


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--data", type=click.Path(path_type=Path))
@click.option("--lake-root", type=click.Path(path_type=Path))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8400, type=int)
@click.option("--security-file", type=click.Path(exists=True, path_type=Path))
@click.option("--bootstrap-admin", default="admin")
def serve(config_path, data, lake_root, host, port, security_file, bootstrap_admin):
    """Run the HTTP service."""
    from .gateway import serve as run_server

    if config_path:
        cfg = ServerConfig.from_file(config_path)
    else:
        if not data or not lake_root:
            raise click.UsageError("--data and --lake-root (or --config) are required")
        cfg = ServerConfig(
            data_dir=data,
            lake_root=lake_root,
            host=host,
            port=port,
            security_file=security_file,
            bootstrap_admin=bootstrap_admin,
        )
    click.echo(f"serving on http://{cfg.host}:{cfg.port}")
    run_server(cfg)


@main.command()
@click.pass_context
def health(ctx):
    """Check the server is up."""
    with _client(ctx) as c:
        emit(ctx, c.request("GET", "/health"))


# -- types ----------------------------------------------------------------------


@main.group()
def types():
    """Entity type registry."""


@types.command("register")
@click.argument("spec_file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def types_register(ctx, spec_file):
    with _client(ctx) as c:
        body = json.loads(spec_file.read_text(encoding="utf-8"))
        emit(ctx, c.request("POST", "/api/v1/types", json=body)["data"])


@types.command("show")
@click.argument("name")
@click.option("--version", type=int)
@click.pass_context
def types_show(ctx, name, version):
    with _client(ctx) as c:
        params = {"version": version} if version else {}
        emit(ctx, c.request("GET", f"/api/v1/types/{name}", params=params)["data"])


# -- entities --------------------------------------------------------------------


@main.group()
def entity():
    """Data entities."""


@entity.command("create")
@click.argument("record_file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def entity_create(ctx, record_file):
    with _client(ctx) as c:
        body = json.loads(record_file.read_text(encoding="utf-8"))
        emit(ctx, c.request("POST", "/api/v1/entities", json=body)["data"])


@entity.command("show")
@click.argument("entity_id")
@click.pass_context
def entity_show(ctx, entity_id):
    with _client(ctx) as c:
        emit(ctx, c.request("GET", f"/api/v1/entities/{entity_id}")["data"])


@entity.command("update")
@click.argument("entity_id")
@click.option("--set", "assignments", multiple=True, help="attr=json-value (repeatable)")
@click.pass_context
def entity_update(ctx, entity_id, assignments):
    patch = {}
    for item in assignments:
        key, _, raw = item.partition("=")
        if not key or not _:
            raise click.UsageError(f"--set needs attr=value, got {item!r}")
        try:
            patch[key] = json.loads(raw)
        except json.JSONDecodeError:
            patch[key] = raw
    with _client(ctx) as c:
        emit(
            ctx,
            c.request("PATCH", f"/api/v1/entities/{entity_id}", json={"attributes": patch})["data"],
        )


@entity.command("delete")
@click.argument("entity_id")
@click.pass_context
def entity_delete(ctx, entity_id):
    with _client(ctx) as c:
        emit(ctx, c.request("DELETE", f"/api/v1/entities/{entity_id}")["data"])


# -- search -----------------------------------------------------------------------


@main.command()
@click.argument("query")
@click.option("--page-size", default=50, type=int)
@click.option("--cursor")
@click.option("--explain", is_flag=True)
@click.pass_context
def search(ctx, query, page_size, cursor, explain):
    """Search the catalog with the query language."""
    with _client(ctx) as c:
        if explain:
            plan = c.request("GET", "/api/v1/search/explain", params={"q": query})["data"]
            click.echo(plan["plan"])
            return
        params = {"q": query, "page_size": page_size}
        if cursor:
            params["cursor"] = cursor
        data = c.request("GET", "/api/v1/search", params=params)["data"]
        if ctx.obj["json"]:
            emit(ctx, data)
        else:
            emit(ctx, data["hits"], ["qualified_name", "type_name", "entity_id"])
            click.echo(f"total: {data['total']}")
            if data.get("cursor"):
                click.echo(f"cursor: {data['cursor']}")


# -- classifications -----------------------------------------------------------------


@main.group()
def classification():
    """User-defined classifications."""


@classification.command("define")
@click.argument("name")
@click.option("--description", default="")
@click.option("--parent")
@click.pass_context
def classification_define(ctx, name, description, parent):
    with _client(ctx) as c:
        body = {"name": name, "description": description, "parent": parent}
        emit(ctx, c.request("POST", "/api/v1/classifications", json=body)["data"])


@main.command()
@click.argument("entity_id")
@click.argument("name")
@click.pass_context
def tag(ctx, entity_id, name):
    """Tag an entity with a classification."""
    with _client(ctx) as c:
        emit(ctx, c.request("POST", f"/api/v1/entities/{entity_id}/classifications/{name}")["data"])


@main.command()
@click.argument("entity_id")
@click.argument("name")
@click.pass_context
def untag(ctx, entity_id, name):
    """Remove a classification from an entity."""
    with _client(ctx) as c:
        emit(ctx, c.request("DELETE", f"/api/v1/entities/{entity_id}/classifications/{name}")["data"])


# -- thesauri --------------------------------------------------------------------------


@main.group()
def thesaurus():
    """Thesaurus management."""


@thesaurus.command("import")
@click.argument("doc_file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def thesaurus_import(ctx, doc_file):
    with _client(ctx) as c:
        body = json.loads(doc_file.read_text(encoding="utf-8"))
        emit(ctx, c.request("POST", "/api/v1/thesauri", json=body)["data"])


@thesaurus.command("tree")
@click.argument("thesaurus_id")
@click.pass_context
def thesaurus_tree(ctx, thesaurus_id):
    with _client(ctx) as c:
        data = c.request("GET", f"/api/v1/thesauri/{thesaurus_id}/tree")["data"]
        click.echo(json.dumps(data, indent=2, ensure_ascii=False))


@main.group()
def term():
    """Terms and relations."""


@term.command("find")
@click.argument("label")
@click.pass_context
def term_find(ctx, label):
    with _client(ctx) as c:
        emit(ctx, c.request("GET", "/api/v1/terms", params={"label": label})["data"],
             ["term_id", "label", "thesaurus_id"])


@term.command("relate")
@click.argument("term_a")
@click.argument("term_b")
@click.option("--kind", type=click.Choice(["synonym", "antonym", "related"]), required=True)
@click.pass_context
def term_relate(ctx, term_a, term_b, kind):
    with _client(ctx) as c:
        body = {"to": term_b, "relation": kind}
        emit(ctx, c.request("POST", f"/api/v1/terms/{term_a}/relations", json=body)["data"])


@term.command("entities")
@click.argument("label")
@click.option("--expand", is_flag=True, help="Follow synonym relations.")
@click.pass_context
def term_entities(ctx, label, expand):
    with _client(ctx) as c:
        terms = c.request("GET", "/api/v1/terms", params={"label": label})["data"]
        if not terms:
            click.echo(f"no term labeled {label!r}", err=True)
            sys.exit(1)
        seen: dict[str, dict] = {}
        for t in terms:
            hits = c.request(
                "GET",
                f"/api/v1/terms/{t['term_id']}/entities",
                params={"expand": str(expand).lower()},
            )["data"]
            for h in hits:
                seen[h["entity_id"]] = h
        emit(ctx, sorted(seen.values(), key=lambda h: h["qualified_name"]),
             ["qualified_name", "name", "type_name"])


@main.command()
@click.argument("entity_id")
@click.argument("term_id")
@click.pass_context
def associate(ctx, entity_id, term_id):
    """Associate an entity with a thesaurus term."""
    with _client(ctx) as c:
        emit(ctx, c.request("POST", f"/api/v1/entities/{entity_id}/terms/{term_id}")["data"])


# -- lineage -----------------------------------------------------------------------------


@main.command()
@click.argument("entity_id")
@click.option("--direction", type=click.Choice(["up", "down"]), default="up", show_default=True)
@click.option("--hops", type=int)
@click.pass_context
def lineage(ctx, entity_id, direction, hops):
    """Show the provenance subgraph around an entity."""
    with _client(ctx) as c:
        params = {"direction": direction}
        if hops is not None:
            params["hops"] = hops
        data = c.request("GET", f"/api/v1/lineage/{entity_id}", params=params)["data"]
        if ctx.obj["json"]:
            emit(ctx, data)
        else:
            emit(ctx, data["nodes"], ["id", "kind", "name"])
            for edge in data["edges"]:
                click.echo(f"{edge['from']} -> {edge['to']}")


@main.group()
def process():
    """Lineage process records."""


@process.command("record")
@click.argument("spec_file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def process_record(ctx, spec_file):
    with _client(ctx) as c:
        body = json.loads(spec_file.read_text(encoding="utf-8"))
        emit(ctx, c.request("POST", "/api/v1/processes", json=body)["data"])


# -- processing ----------------------------------------------------------------------------


@main.command()
@click.argument("spec_file", type=click.Path(exists=True, path_type=Path))
@click.option("--wait/--no-wait", default=True, help="Wait until the output is registered.")
@click.pass_context
def transform(ctx, spec_file, wait):
    """Run a select/join transform from a spec file."""
    with _client(ctx) as c:
        body = json.loads(spec_file.read_text(encoding="utf-8"))
        data = c.request("POST", "/api/v1/transform", json=body)["data"]
        if wait:
            _wait_for_entity(c, data["output"])
        emit(ctx, data)


def _wait_for_entity(c: Client, qualified_name: str, timeout: float = 30.0):
    quoted = qualified_name.replace('"', '\\"')
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        page = c.request(
            "GET", "/api/v1/search", params={"q": f'qualifiedName = "{quoted}"'}
        )["data"]
        if page["total"]:
            return
        time.sleep(0.1)
    click.echo(f"warning: {qualified_name} not visible after {timeout}s", err=True)


@main.command()
@click.argument("entity_id")
@click.pass_context
def quality(ctx, entity_id):
    """Run a data-quality report over a table's rows."""
    with _client(ctx) as c:
        data = c.request("POST", f"/api/v1/quality/{entity_id}")["data"]
        if ctx.obj["json"]:
            emit(ctx, data)
        else:
            emit(ctx, {k: v for k, v in data.items() if k != "columns"})
            emit(ctx, data["columns"],
                 ["name", "kind", "null_count", "null_pct", "type_violations", "violation_pct"])


# -- ingestion --------------------------------------------------------------------------------


@main.group()
def ingest():
    """Move data into the lake."""


@ingest.command("file")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--prefix", required=True, help="Qualified-name prefix for the entity.")
@click.option("--path", "rel_path", default="", help="Relative path under the prefix.")
@click.option("--group", default="")
@click.option("--wait/--no-wait", default=True)
@click.pass_context
def ingest_file(ctx, path, prefix, rel_path, group, wait):
    with _client(ctx) as c:
        with open(path, "rb") as fh:
            data = c.request(
                "POST",
                "/api/v1/data",
                files={"file": (path.name, fh)},
                data={"prefix": prefix, "path": rel_path, "group": group},
            )["data"]
        if wait:
            _wait_for_entity(c, data["qualified_name"])
        click.echo(data["qualified_name"])


@ingest.command("table")
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--source", required=True, help="Logical source name (qualified-name segment).")
@click.pass_context
def ingest_table_cmd(ctx, path, source):
    with _client(ctx) as c:
        with open(path, "rb") as fh:
            data = c.request(
                "POST",
                "/api/v1/ingest/tables",
                files={"file": (path.name, fh)},
                data={"source": source},
            )["data"]
        emit(ctx, data, ["table", "qualified_name", "row_count"])


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Watcher config JSON (root, globs, interval_ms, principal, prefix).")
@click.option("--once", is_flag=True, help="Run a single scan instead of polling forever.")
@click.option("--state-file", type=click.Path(path_type=Path),
              help="Persist the directory snapshot so --once runs detect deletes.")
@click.pass_context
def watch(ctx, config_path, once, state_file):
    """Poll a directory and publish file changes through the hook route."""
    from .ingest import WatchSpec, Watcher

    spec = WatchSpec.from_dict(json.loads(config_path.read_text(encoding="utf-8")))
    watcher = Watcher(spec)
    if state_file and state_file.exists():
        watcher.load_state(json.loads(state_file.read_text(encoding="utf-8")))
    with _client(ctx) as c:

        def push() -> int:
            count = 0
            for event in watcher.scan():
                c.request(
                    "POST",
                    "/api/v1/hooks/events",
                    json=event.to_envelope(),
                    headers={"X-Delivery-Id": event.delivery_id, "X-Hook-Op": event.op},
                )
                count += 1
            if state_file:
                state_file.write_text(json.dumps(watcher.dump_state()), encoding="utf-8")
            return count

        if once:
            click.echo(f"published {push()} change(s)")
            return
        click.echo(f"watching {spec.root} every {spec.interval_ms}ms; Ctrl-C to stop")
        try:
            while True:
                push()
                time.sleep(spec.interval_ms / 1000.0)
        except KeyboardInterrupt:
            pass


@main.group()
def data():
    """Raw data payloads."""


@data.command("download")
@click.argument("entity_id")
@click.option("-o", "--output", type=click.Path(path_type=Path), required=True)
@click.pass_context
def data_download(ctx, entity_id, output):
    client = _client(ctx)
    with client as c:
        headers = {PRINCIPAL_HEADER: c.principal}
        try:
            if c._testclient is not None:
                response = c._testclient.get(f"/api/v1/data/{entity_id}", headers=headers)
            else:
                response = httpx.get(
                    f"{c._server}/api/v1/data/{entity_id}", headers=headers, timeout=60
                )
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach server: {exc}", err=True)
            sys.exit(2)
        if response.status_code >= 400:
            try:
                _bail(response.json(), 1 if response.status_code < 500 else 2)
            except json.JSONDecodeError:
                sys.exit(2)
        output.write_bytes(response.content)
        click.echo(f"wrote {len(response.content)} bytes to {output}")


# -- admin ---------------------------------------------------------------------------------------


@main.group()
def admin():
    """Security administration."""


@admin.group("principal")
def admin_principal():
    pass


@admin_principal.command("create")
@click.argument("name")
@click.option("--groups", default="", help="Comma-separated group names.")
@click.pass_context
def admin_principal_create(ctx, name, groups):
    with _client(ctx) as c:
        body = {"name": name, "groups": [g for g in groups.split(",") if g]}
        emit(ctx, c.request("POST", "/api/v1/admin/principals", json=body)["data"])


@admin.group("role")
def admin_role():
    pass


@admin_role.command("create")
@click.argument("name")
@click.option("--members", default="", help="Comma-separated principal or group names.")
@click.pass_context
def admin_role_create(ctx, name, members):
    with _client(ctx) as c:
        body = {"name": name, "members": [m for m in members.split(",") if m]}
        emit(ctx, c.request("POST", "/api/v1/admin/roles", json=body)["data"])


@admin.group("policy")
def admin_policy():
    pass


@admin_policy.command("put")
@click.argument("policy_file", type=click.Path(exists=True, path_type=Path))
@click.pass_context
def admin_policy_put(ctx, policy_file):
    with _client(ctx) as c:
        body = json.loads(policy_file.read_text(encoding="utf-8"))
        emit(ctx, c.request("POST", "/api/v1/admin/policies", json=body)["data"])


@admin_policy.command("list")
@click.pass_context
def admin_policy_list(ctx):
    with _client(ctx) as c:
        emit(ctx, c.request("GET", "/api/v1/admin/policies")["data"])


@admin_policy.command("revoke")
@click.argument("policy_id")
@click.pass_context
def admin_policy_revoke(ctx, policy_id):
    with _client(ctx) as c:
        emit(ctx, c.request("DELETE", f"/api/v1/admin/policies/{policy_id}")["data"])


if __name__ == "__main__":
    main()
