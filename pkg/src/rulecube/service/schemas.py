"""Pydantic request/response models for the HTTP API.

Addresses always travel as member names keyed by dimension name, never
as ordinals, so clients survive member reordering.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    code: str
    message: str
    detail: Optional[str] = None


class MemberOut(BaseModel):
    name: str
    aliases: list[str] = []
    parent: Optional[str] = None
    format: Optional[str] = None
    has_children: bool = False
    leaf: bool = True          # no enabled rule targets this member
    depth: int = 0


class DimensionOut(BaseModel):
    name: str
    members: list[MemberOut]


class StructureOut(BaseModel):
    id: str
    name: str
    model_version: int
    dimensions: list[DimensionOut]


class StatsOut(BaseModel):
    id: str
    name: str
    model_version: int
    total_cells: int
    input_cells: int
    calculated_cells: int
    rules: int


class ModelCreatedOut(BaseModel):
    id: str
    name: str
    model_version: int
    total_cells: int


class ModelSummaryOut(BaseModel):
    id: str
    name: str
    model_version: int


class LoadReportOut(BaseModel):
    source_id: str
    rows_total: int
    rows_loaded: int
    rows_rejected: int
    rejected: list[tuple[int, str]]
    warnings: list[str]
    cells_written: int
    model_version: int


class CalcReportOut(BaseModel):
    cells_written: dict[str, int]
    total_written: int
    overwrites: int
    skipped_pinned: int
    duration_ms: float
    model_version: int


class ViewSpecIn(BaseModel):
    pages: dict[str, str] = {}
    rows: list[str] = []
    cols: list[str] = []
    expand: dict[str, list[str]] = {}
    member_selection: dict[str, list[str]] = {}


class ViewGridOut(BaseModel):
    model_version: int
    pages: list[tuple[str, str]]
    row_dims: list[str]
    col_dims: list[str]
    row_headers: list[list[str]]
    col_headers: list[list[str]]
    row_depths: list[list[int]]
    values: list[list[float]]
    errors: list[list[Optional[str]]]
    flags: list[list[list[str]]]


class CellWriteIn(BaseModel):
    address: dict[str, str]
    value: Optional[float] = None
    mode: str = "data"  # data | override | clear


class CellsPutIn(BaseModel):
    cells: list[CellWriteIn]
    source_id: str = "write-back"
    model_version: Optional[int] = None


class RuleOut(BaseModel):
    sequence: int
    name: str
    dimension: str
    target: str
    formula: str
    enabled: bool
    filters: dict[str, list[str]] = {}
    folder: list[str] = []


class RulesOut(BaseModel):
    model_version: int
    rules: list[RuleOut]


class RulesPatchIn(BaseModel):
    reorder: Optional[list[str]] = None
    set_enabled: Optional[dict[str, bool]] = None
    model_version: Optional[int] = None


class RulesPatchOut(BaseModel):
    model_version: int
    rules: list[RuleOut]
    report: CalcReportOut


class TraceIn(BaseModel):
    address: dict[str, str]
    rule: Optional[str] = None
    label: str = "L1"


class ApplicableRuleOut(BaseModel):
    name: str
    sequence: int
    formula: str
    winner: bool


class TraceNodeOut(BaseModel):
    label: str
    address: dict[str, str]
    value: float
    error: Optional[str] = None
    rule: Optional[str] = None
    rule_formula: Optional[str] = None
    has_children: bool = False
    children: list["TraceNodeOut"] = []


class TraceOut(BaseModel):
    model_version: int
    node: TraceNodeOut
    applicable_rules: list[ApplicableRuleOut]


class AuditReadingOut(BaseModel):
    rule: str
    sequence: int
    value: float
    error: Optional[str] = None
    agrees: bool
    winner: bool


class AuditEntryOut(BaseModel):
    address: dict[str, str]
    stored: float
    stored_error: Optional[str] = None
    readings: list[AuditReadingOut]


class AuditOut(BaseModel):
    model_version: int
    disagreements: list[AuditEntryOut]


class LintFindingOut(BaseModel):
    kind: str
    message: str
    dimension: Optional[str] = None
    member: Optional[str] = None
    rule: Optional[str] = None


class LintOut(BaseModel):
    model_version: int
    findings: list[LintFindingOut]
