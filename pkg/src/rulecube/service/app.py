"""HTTP/JSON API over an in-memory model registry.

Reads run concurrently; mutations serialize per model through the
session lock and bump ``model_version``.  Mutation requests may carry
the version they were computed against; a stale version is rejected
with 409 so clients never silently overwrite concurrent changes.

Persistence is file-based: with a models directory configured, model
documents (``<id>.json``) and their data layer (``<id>.data.csv``) are
loaded at startup and rewritten after mutations.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from fastapi import Body, FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .. import modelio
from ..engine import WriteBackError
from ..formula import FormulaError
from ..model import (
    AddressError,
    DefinitionError,
    ModelError,
    UnknownDimensionError,
    UnknownMemberError,
)
from ..modelio import DataFormatError
from ..session import CellWrite, ModelSession, VersionConflictError
from ..trace import TraceError
from ..views import ViewError, ViewSpec
from . import schemas as s


class UnknownModelError(ModelError):
    def __init__(self, model_id: str):
        super().__init__(f"unknown model {model_id!r}")


class ModelRegistry:
    """Process-wide model store; optionally mirrored to a directory."""

    def __init__(self, models_dir: str | Path | None = None):
        self.sessions: dict[str, ModelSession] = {}
        self.models_dir = Path(models_dir) if models_dir else None
        self._counter = 0

    def scan(self) -> None:
        if self.models_dir is None or not self.models_dir.is_dir():
            return
        for path in sorted(self.models_dir.glob("*.json")):
            session = ModelSession.from_path(path)
            data_file = path.with_suffix(".data.csv")
            if data_file.exists():
                session.load_csv(
                    data_file.read_text(encoding="utf-8"), data_file.name, "long"
                )
            session.calc()
            self.sessions[session.id] = session

    def add(self, session: ModelSession) -> None:
        self.sessions[session.id] = session
        self.persist(session)

    def next_id(self, name: str) -> str:
        slug = re.sub(r"[^a-z0-9]+", "-", name.casefold()).strip("-") or "model"
        if slug not in self.sessions:
            return slug
        while True:
            self._counter += 1
            candidate = f"{slug}-{self._counter}"
            if candidate not in self.sessions:
                return candidate

    def get(self, model_id: str) -> ModelSession:
        try:
            return self.sessions[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None

    def persist(self, session: ModelSession) -> None:
        if self.models_dir is None:
            return
        self.models_dir.mkdir(parents=True, exist_ok=True)
        modelio.save_model(
            session.structure, session.rules, self.models_dir / f"{session.id}.json"
        )
        (self.models_dir / f"{session.id}.data.csv").write_text(
            session.export_data("data"), encoding="utf-8"
        )


_STATUS = {
    UnknownModelError: 404,
    UnknownMemberError: 404,
    UnknownDimensionError: 404,
    VersionConflictError: 409,
    WriteBackError: 422,
    ViewError: 422,
    TraceError: 422,
    DefinitionError: 422,
    DataFormatError: 422,
    FormulaError: 422,
    AddressError: 422,
}


def _error_response(exc: ModelError) -> JSONResponse:
    status = 422
    for klass, code in _STATUS.items():
        if isinstance(exc, klass):
            status = code
            break
    return JSONResponse(
        status_code=status,
        content=s.ErrorBody(
            code=type(exc).__name__, message=str(exc), detail=None
        ).model_dump(),
    )


def _rule_out(rule) -> s.RuleOut:
    return s.RuleOut(
        sequence=rule.sequence,
        name=rule.name,
        dimension=rule.dimension,
        target=rule.target,
        formula="=" + rule.text,
        enabled=rule.enabled,
        filters={d: list(m) for d, m in rule.filters},
        folder=list(rule.folder),
    )


def _calc_out(report, version: int) -> s.CalcReportOut:
    return s.CalcReportOut(
        cells_written=report.cells_written,
        total_written=report.total_written,
        overwrites=report.overwrites,
        skipped_pinned=report.skipped_pinned,
        duration_ms=report.duration_ms,
        model_version=version,
    )


def _trace_node_out(session: ModelSession, node) -> s.TraceNodeOut:
    names = dict(zip((d.name for d in session.structure.dimensions), node.names))
    return s.TraceNodeOut(
        label=node.label,
        address=names,
        value=node.value.value,
        error=node.value.error,
        rule=node.rule.name if node.rule else None,
        rule_formula=node.rule.text if node.rule else None,
        has_children=node.rule is not None,
        children=[_trace_node_out(session, c) for c in node.children],
    )


def create_app(registry: ModelRegistry | None = None, max_body_bytes: int = 50_000_000) -> FastAPI:
    registry = registry or ModelRegistry()
    registry.scan()
    app = FastAPI(title="rulecube", version="0.1.0")
    app.state.registry = registry
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ModelError)
    async def model_error_handler(request: Request, exc: ModelError):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content=s.ErrorBody(
                code="malformed_body", message="malformed request body", detail=str(exc)
            ).model_dump(),
        )

    @app.middleware("http")
    async def limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > max_body_bytes:
            return JSONResponse(
                status_code=413,
                content=s.ErrorBody(
                    code="body_too_large",
                    message=f"request body exceeds {max_body_bytes} bytes",
                ).model_dump(),
            )
        return await call_next(request)

    # -- model lifecycle --

    @app.get("/models", response_model=list[s.ModelSummaryOut])
    def list_models():
        return [
            s.ModelSummaryOut(id=x.id, name=x.structure.name, model_version=x.version)
            for x in registry.sessions.values()
        ]

    @app.post("/models", response_model=s.ModelCreatedOut, status_code=201)
    def create_model(document: dict = Body(...)):
        structure, rules = modelio.parse_model_document(document)
        session = ModelSession(structure, rules, registry.next_id(structure.name))
        session.calc()
        registry.add(session)
        return s.ModelCreatedOut(
            id=session.id,
            name=structure.name,
            model_version=session.version,
            total_cells=structure.total_cells,
        )

    @app.get("/models/{model_id}/structure", response_model=s.StructureOut)
    def get_structure(model_id: str):
        session = registry.get(model_id)
        masks = session.rules.leaf_masks(session.structure)
        dims = []
        for pos, dim in enumerate(session.structure.dimensions):
            members = [
                s.MemberOut(
                    name=m.name,
                    aliases=list(m.aliases),
                    parent=m.parent,
                    format=m.format,
                    has_children=bool(dim.children_ord[i]),
                    leaf=bool(masks[pos][i]),
                    depth=dim.depth(i),
                )
                for i, m in enumerate(dim.members)
            ]
            dims.append(s.DimensionOut(name=dim.name, members=members))
        return s.StructureOut(
            id=session.id,
            name=session.structure.name,
            model_version=session.version,
            dimensions=dims,
        )

    @app.get("/models/{model_id}/stats", response_model=s.StatsOut)
    def get_stats(model_id: str):
        session = registry.get(model_id)
        stats = session.stats()
        return s.StatsOut(
            id=session.id,
            name=session.structure.name,
            model_version=session.version,
            total_cells=stats.total_cells,
            input_cells=stats.input_cells,
            calculated_cells=stats.calculated_cells,
            rules=len(session.rules),
        )

    @app.get("/models/{model_id}/lint", response_model=s.LintOut)
    def get_lint(model_id: str):
        session = registry.get(model_id)
        findings = [
            s.LintFindingOut(
                kind=f.kind,
                message=f.message,
                dimension=f.dimension,
                member=f.member,
                rule=f.rule,
            )
            for f in session.lint()
        ]
        return s.LintOut(model_version=session.version, findings=findings)

    # -- data and calculation --

    @app.post("/models/{model_id}/data", response_model=s.LoadReportOut)
    async def load_data(
        model_id: str,
        request: Request,
        format: str = Query("long", pattern="^(long|wide)$"),
        source_id: str = Query("upload"),
        spread: str | None = Query(None),
        model_version: int | None = Query(None),
    ):
        session = registry.get(model_id)
        text = (await request.body()).decode("utf-8")
        report = session.load_csv(text, source_id, format, spread, model_version)
        registry.persist(session)
        return s.LoadReportOut(
            source_id=report.source_id,
            rows_total=report.rows_total,
            rows_loaded=report.rows_loaded,
            rows_rejected=report.rows_rejected,
            rejected=report.rejected,
            warnings=report.warnings,
            cells_written=report.cells_written,
            model_version=session.version,
        )

    @app.post("/models/{model_id}/calc", response_model=s.CalcReportOut)
    def calc(model_id: str, model_version: int | None = Query(None)):
        session = registry.get(model_id)
        report = session.calc(model_version)
        return _calc_out(report, session.version)

    # -- views --

    @app.post("/models/{model_id}/view", response_model=s.ViewGridOut)
    def view(model_id: str, spec: s.ViewSpecIn):
        session = registry.get(model_id)
        grid = session.view(
            ViewSpec.from_document(
                {
                    "pages": spec.pages,
                    "rows": spec.rows,
                    "cols": spec.cols,
                    "expand": spec.expand,
                    "member_selection": spec.member_selection,
                }
            )
        )
        return s.ViewGridOut(
            model_version=session.version,
            pages=list(grid.pages),
            row_dims=list(grid.row_dims),
            col_dims=list(grid.col_dims),
            row_headers=[list(h) for h in grid.row_headers],
            col_headers=[list(h) for h in grid.col_headers],
            row_depths=[list(d) for d in grid.row_depths],
            values=[list(r) for r in grid.values],
            errors=[list(r) for r in grid.errors],
            flags=[[list(f) for f in row] for row in grid.flags],
        )

    # -- write-back --

    @app.put("/models/{model_id}/cells", response_model=s.CalcReportOut)
    def put_cells(model_id: str, body: s.CellsPutIn):
        session = registry.get(model_id)
        writes = [
            CellWrite(address=c.address, value=c.value, mode=c.mode) for c in body.cells
        ]
        report = session.write_cells(writes, body.source_id, body.model_version)
        registry.persist(session)
        return _calc_out(report, session.version)

    # -- rules --

    @app.get("/models/{model_id}/rules", response_model=s.RulesOut)
    def get_rules(model_id: str):
        session = registry.get(model_id)
        return s.RulesOut(
            model_version=session.version,
            rules=[_rule_out(r) for r in session.rules],
        )

    @app.patch("/models/{model_id}/rules", response_model=s.RulesPatchOut)
    def patch_rules(model_id: str, body: s.RulesPatchIn):
        session = registry.get(model_id)
        try:
            report = session.patch_rules(body.reorder, body.set_enabled, body.model_version)
        except (KeyError, ValueError) as e:
            raise ViewError(str(e)) from e
        registry.persist(session)
        return s.RulesPatchOut(
            model_version=session.version,
            rules=[_rule_out(r) for r in session.rules],
            report=_calc_out(report, session.version),
        )

    # -- diagnostics --

    @app.post("/models/{model_id}/trace", response_model=s.TraceOut)
    def trace(model_id: str, body: s.TraceIn):
        session = registry.get(model_id)
        node = session.trace(body.address, body.rule, body.label)
        address = session.structure.address_from_names(body.address)
        applicable = session.rules.applicable(address)
        return s.TraceOut(
            model_version=session.version,
            node=_trace_node_out(session, node),
            applicable_rules=[
                s.ApplicableRuleOut(
                    name=r.name,
                    sequence=r.sequence,
                    formula=r.text,
                    winner=r is applicable[-1],
                )
                for r in applicable
            ],
        )

    @app.get("/models/{model_id}/docs")
    def get_docs(model_id: str, format: str = Query("text", pattern="^(text|csv)$")):
        session = registry.get(model_id)
        if format == "csv":
            return Response(content=session.docs_csv(), media_type="text/csv")
        return PlainTextResponse(session.docs())

    @app.get("/models/{model_id}/audit", response_model=s.AuditOut)
    def get_audit(model_id: str):
        session = registry.get(model_id)
        dim_names = [d.name for d in session.structure.dimensions]
        entries = []
        for report in session.audit():
            entries.append(
                s.AuditEntryOut(
                    address=dict(zip(dim_names, report.names)),
                    stored=report.stored.value,
                    stored_error=report.stored.error,
                    readings=[
                        s.AuditReadingOut(
                            rule=r.rule_name,
                            sequence=r.sequence,
                            value=r.value.value,
                            error=r.value.error,
                            agrees=r.agrees,
                            winner=r.winner,
                        )
                        for r in report.readings
                    ],
                )
            )
        return s.AuditOut(model_version=session.version, disagreements=entries)

    @app.get("/models/{model_id}/export")
    def export_data(
        model_id: str, include: str = Query("data", pattern="^(data|calculated|all)$")
    ):
        session = registry.get(model_id)
        return Response(content=session.export_data(include), media_type="text/csv")

    @app.get("/models/{model_id}/ledger")
    def export_ledger(model_id: str):
        session = registry.get(model_id)
        return Response(content=session.ledger(), media_type="text/csv")

    return app
