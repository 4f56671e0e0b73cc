"""HTTP JSON service exposing the catalog, plus its startup wiring.

Every route answers ``{"ok": true, "data": ...}`` or
``{"error": {"code": ..., "message": ...}}``; error codes are the library's
stable exception codes. The principal arrives in the ``X-Lake-Principal``
header (trusted at desk scale; this is NOT production authentication) and
every mutating route records it as the actor.

Hook posts and transforms answer 202: their catalog effects land via the bus.
"""

from __future__ import annotations

import json
import re
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, File, Form, Header, Query, Request, UploadFile
from fastapi.responses import JSONResponse, Response

from . import processing
from .catalog import Catalog
from .errors import AccessDenied, CatalogError, ConfigInvalid
from .ingest import EventBus, HookEvent, file_event_to_hook, ingest_table
from .medal import parse_iso_date

API = "/api/v1"
PRINCIPAL_HEADER = "X-Lake-Principal"

_STATUS_BY_CODE = {
    "not-found": 404,
    "unknown-type": 404,
    "unknown-parent": 404,
    "unknown-thesaurus": 404,
    "unknown-term": 404,
    "unknown-entity": 404,
    "unknown-table": 404,
    "unknown-column": 404,
    "unknown-index": 404,
    "no-data": 404,
    "duplicate-type": 409,
    "duplicate-qualified-name": 409,
    "duplicate-classification": 409,
    "duplicate-thesaurus": 409,
    "duplicate-relation": 409,
    "duplicate-label": 409,
    "duplicate-output": 409,
    "duplicate-principal": 409,
    "duplicate-role": 409,
    "duplicate-policy": 409,
    "access-denied": 403,
    "unauthorized": 401,
    "queue-full": 429,
    "storage-failure": 500,
    "corrupt-log": 500,
    "corrupt-snapshot": 500,
}


class Unauthorized(CatalogError):
    code = "unauthorized"


@dataclass
class ServerConfig:
    data_dir: Path
    lake_root: Path
    host: str = "127.0.0.1"
    port: int = 8400
    security_file: Path | None = None
    bootstrap_admin: str | None = "admin"
    register_builtins: bool = True
    journal: bool = True
    snapshot_every: int | None = 10_000
    fsync: bool = False

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.lake_root = Path(self.lake_root)
        if self.port < 0 or self.port > 65535:
            raise ConfigInvalid(f"port {self.port} out of range")

    @classmethod
    def from_file(cls, path: Path | str) -> ServerConfig:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot load config {path}: {exc}") from exc
        known = {
            "data_dir", "lake_root", "host", "port", "security_file",
            "bootstrap_admin", "register_builtins", "journal", "snapshot_every", "fsync",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        for required in ("data_dir", "lake_root"):
            if required not in raw:
                raise ConfigInvalid(f"config needs {required}")
        if raw.get("security_file"):
            raw["security_file"] = Path(raw["security_file"])
        return cls(**raw)


_DDMMYYYY = re.compile(r"(\d{2})/(\d{2})/(\d{4})\Z")


def normalize_date_inputs(catalog: Catalog, type_name: str, attributes: dict) -> dict:
    """Rewrite DD/MM/YYYY values of date-declared attributes to ISO-8601.

    Normalization happens here at the gateway; the catalog only ever stores
    ISO forms.
    """
    try:
        etype = catalog.get_type(type_name)
    except CatalogError:
        return attributes
    out = dict(attributes)
    for spec in etype.attributes:
        value = out.get(spec.name)
        if spec.attr_type.kind == "date" and isinstance(value, str):
            m = _DDMMYYYY.match(value.strip())
            if m:
                day, month, year = m.groups()
                out[spec.name] = f"{year}-{month}-{day}"
    return out


def principal_of(x_lake_principal: str | None = Header(default=None)) -> str:
    if not x_lake_principal:
        raise Unauthorized(f"{PRINCIPAL_HEADER} header is required")
    return x_lake_principal


def create_app(config: ServerConfig) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        catalog = Catalog(
            config.data_dir,
            fsync=config.fsync,
            snapshot_every=config.snapshot_every,
        )
        config.lake_root.mkdir(parents=True, exist_ok=True)
        if config.register_builtins:
            catalog.ensure_builtin_types()
        if config.bootstrap_admin:
            catalog.bootstrap_admin(config.bootstrap_admin)
        if config.security_file:
            try:
                doc = json.loads(Path(config.security_file).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigInvalid(f"bad security file: {exc}") from exc
            catalog.bootstrap_security(doc)
        bus = EventBus(
            catalog,
            journal_dir=(config.lake_root / "bus" / "pending") if config.journal else None,
        )
        bus.start()
        app.state.catalog = catalog
        app.state.bus = bus
        app.state.lake_root = config.lake_root
        try:
            yield
        finally:
            bus.drain()
            bus.stop()
            catalog.close()

    app = FastAPI(title="lakecat", lifespan=lifespan)
    # the curator SPA may be served from any origin; the principal header is
    # the only credential and must survive preflight
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*", PRINCIPAL_HEADER],
    )

    @app.exception_handler(CatalogError)
    async def catalog_error_handler(request: Request, exc: CatalogError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(
            status_code=status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    def ok(data, status: int = 200) -> JSONResponse:
        return JSONResponse(status_code=status, content={"ok": True, "data": data})

    def cat() -> Catalog:
        return app.state.catalog

    def gate(principal: str, action_id: str, verb: str, touched=()):
        verdict = cat().two_stage_check(principal, action_id, verb, touched)
        if not verdict.allowed:
            raise AccessDenied(
                f"{verdict.reason}"
                + (f" on {verdict.resource}" if verdict.resource else ""),
                stage=verdict.stage,
            )

    @app.get("/health")
    def health():
        return {"ok": True}

    # -- types ------------------------------------------------------------------

    @app.post(f"{API}/types")
    def register_type(body: dict, principal: str = Depends(principal_of)):
        gate(principal, "types.register", "create")
        return ok(cat().register_type_dict(body), status=201)

    @app.get(f"{API}/types/{{name}}")
    def get_type(name: str, version: int | None = None, principal: str = Depends(principal_of)):
        gate(principal, "types.get", "read")
        return ok(cat().get_type(name, version).to_dict())

    # -- entities ----------------------------------------------------------------

    def entity_card(entity) -> dict:
        c = cat()
        terms = sorted(c.terms_of(entity.entity_id))
        return {
            **entity.to_dict(),
            "classifications": sorted(c.memberships_of(entity.entity_id)),
            "terms": [
                {"term_id": t, "label": c.state.terms[t].label, "thesaurus_id": c.state.terms[t].thesaurus_id}
                for t in terms
                if t in c.state.terms
            ],
            "links": [l.to_dict() for l in c.links_for(entity.entity_id)],
        }

    @app.post(f"{API}/entities")
    def create_entity(body: dict, principal: str = Depends(principal_of)):
        qn = body.get("qualified_name") or body.get("attributes", {}).get("qualifiedName")
        gate(principal, "entities.create", "create", [qn] if qn else ())
        attributes = normalize_date_inputs(cat(), body.get("type_name", ""), body.get("attributes", {}))
        entity = cat().create_entity(
            body.get("type_name", ""),
            qn or "",
            attributes,
            principal,
            type_version=body.get("type_version"),
        )
        return ok(entity_card(entity), status=201)

    @app.get(f"{API}/entities/{{entity_id}}")
    def get_entity(entity_id: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.get", "read", [entity.qualified_name])
        return ok(entity_card(entity))

    @app.patch(f"{API}/entities/{{entity_id}}")
    def update_entity(entity_id: str, body: dict, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.update", "update", [entity.qualified_name])
        patch = normalize_date_inputs(cat(), entity.type_name, body.get("attributes", body))
        return ok(entity_card(cat().update_entity(entity_id, patch, principal)))

    @app.delete(f"{API}/entities/{{entity_id}}")
    def delete_entity(entity_id: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.delete", "delete", [entity.qualified_name])
        return ok(cat().delete_entity(entity_id, principal).to_dict())

    # -- search ---------------------------------------------------------------------

    @app.get(f"{API}/search")
    def search(
        q: str,
        cursor: str | None = None,
        page_size: int = Query(default=50, ge=1, le=10_000),
        principal: str = Depends(principal_of),
    ):
        gate(principal, "search", "read")
        return ok(cat().search(q, principal, page_size=page_size, cursor=cursor).to_dict())

    @app.get(f"{API}/search/explain")
    def explain(q: str, principal: str = Depends(principal_of)):
        gate(principal, "search", "read")
        return ok({"plan": cat().explain(q)})

    # -- classifications ---------------------------------------------------------------

    @app.post(f"{API}/classifications")
    def define_classification(body: dict, principal: str = Depends(principal_of)):
        gate(principal, "classifications.define", "create")
        c = cat().define_classification(
            body.get("name", ""), body.get("description", ""), body.get("parent")
        )
        return ok(c.to_dict(), status=201)

    @app.get(f"{API}/classifications")
    def list_classifications(principal: str = Depends(principal_of)):
        gate(principal, "classifications.list", "read")
        return ok([c.to_dict() for c in cat().state.classifications.values()])

    @app.post(f"{API}/entities/{{entity_id}}/classifications/{{name}}")
    def tag(entity_id: str, name: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.tag", "tag", [entity.qualified_name])
        return ok(sorted(cat().tag(entity_id, name, principal)))

    @app.delete(f"{API}/entities/{{entity_id}}/classifications/{{name}}")
    def untag(entity_id: str, name: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.tag", "tag", [entity.qualified_name])
        return ok(sorted(cat().untag(entity_id, name, principal)))

    # -- links ------------------------------------------------------------------------

    @app.post(f"{API}/links")
    def create_link(body: dict, principal: str = Depends(principal_of)):
        gate(principal, "links.create", "create")
        link = cat().create_link(
            body.get("from", ""), body.get("to", ""), body.get("label", ""), body.get("metadata")
        )
        return ok(link.to_dict(), status=201)

    @app.get(f"{API}/entities/{{entity_id}}/links")
    def entity_links(entity_id: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.get", "read", [entity.qualified_name])
        return ok([l.to_dict() for l in cat().links_for(entity_id)])

    # -- thesauri ----------------------------------------------------------------------

    @app.post(f"{API}/thesauri")
    def import_thesaurus(body: dict, principal: str = Depends(principal_of)):
        gate(principal, "thesauri.import", "create")
        thesaurus, report = cat().import_thesaurus(body)
        return ok({"thesaurus": thesaurus.to_dict(), "report": report}, status=201)

    @app.get(f"{API}/thesauri")
    def list_thesauri(principal: str = Depends(principal_of)):
        gate(principal, "thesauri.tree", "read")
        return ok([t.to_dict() for t in cat().state.thesauri.values()])

    @app.get(f"{API}/thesauri/{{thesaurus_id}}/tree")
    def thesaurus_tree(thesaurus_id: str, principal: str = Depends(principal_of)):
        gate(principal, "thesauri.tree", "read")
        return ok(cat().export_thesaurus(thesaurus_id))

    @app.get(f"{API}/terms")
    def find_terms(label: str, principal: str = Depends(principal_of)):
        gate(principal, "terms.entities", "read")
        c = cat()
        return ok(
            [c.state.terms[t].to_dict() for t in sorted(c.term_ids_for_label(label))]
        )

    @app.post(f"{API}/terms/{{term_id}}/relations")
    def relate_terms(term_id: str, body: dict, principal: str = Depends(principal_of)):
        gate(principal, "terms.relate", "associate")
        a, b, kind = cat().relate_terms(term_id, body.get("to", ""), body.get("relation", ""))
        return ok({"from": a, "to": b, "relation": kind}, status=201)

    @app.post(f"{API}/entities/{{entity_id}}/terms/{{term_id}}")
    def associate(entity_id: str, term_id: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "entities.associate", "associate", [entity.qualified_name])
        cat().associate(entity_id, term_id)
        return ok(sorted(cat().terms_of(entity_id)))

    @app.get(f"{API}/terms/{{term_id}}/entities")
    def term_entities(term_id: str, expand: bool = False, principal: str = Depends(principal_of)):
        gate(principal, "terms.entities", "read")
        c = cat()
        ids = c.entities_for_term(term_id, expand_synonyms=expand)
        summaries = []
        for eid in sorted(ids):
            entity = c.state.entities.get(eid)
            if entity is None or not entity.active:
                continue
            if c.check(principal, "read", ("entity", entity.qualified_name)).allowed:
                summaries.append(
                    {
                        "entity_id": entity.entity_id,
                        "qualified_name": entity.qualified_name,
                        "type_name": entity.type_name,
                        "name": entity.display_name(),
                    }
                )
        return ok(summaries)

    # -- lineage ----------------------------------------------------------------------

    @app.get(f"{API}/lineage/{{entity_id}}")
    def lineage(
        entity_id: str,
        direction: str = "up",
        hops: int | None = None,
        principal: str = Depends(principal_of),
    ):
        entity = cat().get_entity(entity_id)
        gate(principal, "lineage.read", "read", [entity.qualified_name])
        if direction not in ("up", "down"):
            raise CatalogError("direction must be up or down")
        walk = cat().upstream if direction == "up" else cat().downstream
        return ok(walk(entity_id, hops).to_wire())

    @app.post(f"{API}/processes")
    def record_process(body: dict, principal: str = Depends(principal_of)):
        c = cat()
        touched = [
            c.get_entity(eid).qualified_name
            for eid in list(body.get("inputs", [])) + list(body.get("outputs", []))
            if eid in c.state.entities
        ]
        gate(principal, "processes.record", "create", touched)
        process = c.record_process(
            body.get("name", ""),
            body.get("kind", "custom"),
            body.get("inputs", []),
            body.get("outputs", []),
            principal,
            body.get("parameters", {}),
        )
        return ok(process.to_dict(), status=201)

    # -- processing ---------------------------------------------------------------------

    @app.post(f"{API}/transform")
    def transform(body: dict, principal: str = Depends(principal_of)):
        result = processing.transform(
            cat(), app.state.lake_root, body, principal, bus=app.state.bus
        )
        return ok(
            {
                "output": result.output_qualified_name,
                "row_count": result.row_count,
                "columns": [{"name": n, "kind": k} for n, k in result.columns],
                "delivery_id": result.delivery_id,
            },
            status=202,
        )

    @app.post(f"{API}/quality/{{entity_id}}")
    def quality(entity_id: str, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "quality.run", "read", [entity.qualified_name])
        report = processing.quality_report(cat(), app.state.lake_root, entity_id, principal)
        return ok(report.to_dict())

    @app.post(f"{API}/normalize/{{entity_id}}")
    def normalize(entity_id: str, body: dict, principal: str = Depends(principal_of)):
        entity = cat().get_entity(entity_id)
        gate(principal, "normalize.run", "create", [entity.qualified_name])
        output, process = processing.normalize_encoding(
            cat(), app.state.lake_root, entity_id, body.get("encoding", ""), principal
        )
        return ok({"output": output.to_dict(), "process": process.to_dict()}, status=201)

    # -- hooks and data ---------------------------------------------------------------

    @app.post(f"{API}/hooks/events")
    def hook_events(
        body: dict,
        principal: str = Depends(principal_of),
        x_delivery_id: str | None = Header(default=None),
        x_hook_op: str = Header(default="upsert"),
    ):
        gate(principal, "hooks.publish", "create")
        entries = body.get("entities")
        if not isinstance(entries, list) or not entries:
            raise CatalogError("hook envelope needs a non-empty entities list")
        if x_hook_op not in ("upsert", "delete"):
            raise CatalogError("X-Hook-Op must be upsert or delete")
        normalized = [
            {**e, "attributes": normalize_date_inputs(cat(), e.get("typeName", ""), e.get("attributes", {}))}
            for e in entries
        ]
        hook = HookEvent(
            entries=normalized,
            delivery_id=x_delivery_id or uuid.uuid4().hex,
            source=f"api:{principal}",
            op=x_hook_op,
        )
        receipt = app.state.bus.publish(hook)
        return ok(receipt, status=202)

    @app.post(f"{API}/data")
    def upload(
        file: UploadFile = File(...),
        prefix: str = Form(default="lake://raw"),
        path: str = Form(default=""),
        group: str = Form(default=""),
        principal: str = Depends(principal_of),
    ):
        relpath = path.strip("/") or file.filename or "upload.bin"
        gate(principal, "data.upload", "create", [f"{prefix}/{relpath}"])
        target = app.state.lake_root / "raw" / relpath
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(file.file.read())
        hook = file_event_to_hook(
            target,
            app.state.lake_root / "raw",
            principal,
            prefix,
            group=group or None,
            source=f"upload:{principal}",
        )
        receipt = app.state.bus.publish(hook)
        qualified_name = hook.entries[0]["attributes"]["qualifiedName"]
        return ok({**receipt, "qualified_name": qualified_name}, status=202)

    @app.get(f"{API}/data/{{entity_id}}")
    def download(entity_id: str, principal: str = Depends(principal_of)):
        c = cat()
        entity = c.get_entity(entity_id)
        gate(principal, "data.download", "read", [entity.qualified_name])
        relpath = c.storage_path(entity_id)
        if relpath is None:
            raise CatalogError("entity has no managed bytes")
        target = app.state.lake_root / relpath
        if not target.exists():
            raise CatalogError("managed bytes are missing")
        return Response(
            content=target.read_bytes(),
            media_type="application/octet-stream",
            headers={"Content-Disposition": f'attachment; filename="{target.name}"'},
        )

    @app.post(f"{API}/ingest/tables")
    def ingest_tables(
        file: UploadFile = File(...),
        source: str = Form(...),
        principal: str = Depends(principal_of),
    ):
        gate(principal, "ingest.tables", "create")
        staging = app.state.lake_root / "staging" / (file.filename or "upload")
        staging.parent.mkdir(parents=True, exist_ok=True)
        staging.write_bytes(file.file.read())
        results = ingest_table(cat(), app.state.lake_root, source, staging, principal)
        return ok(
            [
                {
                    "table": r["descriptor"].table_name,
                    "qualified_name": r["entity"].qualified_name,
                    "row_count": r["descriptor"].row_count,
                    "columns": [{"name": n, "kind": k} for n, k in r["descriptor"].columns],
                }
                for r in results
            ],
            status=201,
        )

    # -- security admin -----------------------------------------------------------------

    @app.post(f"{API}/admin/principals")
    def create_principal(body: dict, principal: str = Depends(principal_of)):
        p = cat().create_principal(body.get("name", ""), body.get("groups", []), principal)
        return ok(p.to_dict(), status=201)

    @app.post(f"{API}/admin/principals/{{name}}/groups")
    def assign_group(name: str, body: dict, principal: str = Depends(principal_of)):
        return ok(cat().assign_group(name, body.get("group", ""), principal).to_dict())

    @app.post(f"{API}/admin/roles")
    def create_role(body: dict, principal: str = Depends(principal_of)):
        role = cat().create_role(body.get("name", ""), body.get("members", []), principal)
        return ok(role.to_dict(), status=201)

    @app.get(f"{API}/admin/policies")
    def list_policies(principal: str = Depends(principal_of)):
        verdict = cat().check(principal, "admin", ("api-action", "admin"))
        if not verdict.allowed:
            raise AccessDenied(verdict.reason, stage=1)
        return ok([p.to_dict() for p in cat().state.policies.values()])

    @app.post(f"{API}/admin/policies")
    def put_policy(body: dict, principal: str = Depends(principal_of)):
        resource = body.get("resource", {})
        policy = cat().put_policy(
            body.get("role", ""),
            resource.get("kind", ""),
            resource.get("pattern", ""),
            body.get("actions", []),
            body.get("effect", ""),
            principal,
            policy_id=body.get("policy_id"),
        )
        return ok(policy.to_dict(), status=201)

    @app.delete(f"{API}/admin/policies/{{policy_id}}")
    def revoke_policy(policy_id: str, principal: str = Depends(principal_of)):
        cat().revoke_policy(policy_id, principal)
        return ok({"revoked": policy_id})

    @app.get(f"{API}/admin/check")
    def admin_check(
        subject: str,
        action: str,
        kind: str,
        resource: str,
        principal: str = Depends(principal_of),
    ):
        verdict = cat().check(principal, "admin", ("api-action", "admin"))
        if not verdict.allowed:
            raise AccessDenied(verdict.reason, stage=1)
        return ok(cat().check(subject, action, (kind, resource)).to_dict())

    return app


def serve(config: ServerConfig) -> None:
    """Run the service until interrupted; raises BindFailure when the port is taken."""
    import uvicorn

    from .errors import BindFailure

    app = create_app(config)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    except OSError as exc:
        raise BindFailure(f"cannot bind {config.host}:{config.port}: {exc}") from exc
