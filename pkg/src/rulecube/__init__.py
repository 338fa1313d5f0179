"""rulecube: a dimensional rule-calculation engine.

Build a model structure (ordered dimensions of named members with
ragged hierarchies), attach an ordered list of member-level rules in a
spreadsheet-like formula language, load data, and materialize every
cell of the dense cube with per-cell provenance.  Later rules take
precedence on contested cells; trace and audit tools explain and verify
the result.
"""

from .cube import CellValue, Cube, Provenance
from .engine import (
    CalcReport,
    Finding,
    WriteBackError,
    apply_rules,
    clear_override,
    coverage_lint,
    override_cell,
    rule_scope,
    write_back,
)
from .formula import BindError, EvalContext, ParseError, bind, evaluate, parse, to_text
from .model import (
    AddressError,
    DefinitionError,
    Dimension,
    Member,
    ModelError,
    ModelStats,
    ModelStructure,
    UnknownDimensionError,
    UnknownMemberError,
    build_structure,
)
from .modelio import (
    DataFormatError,
    LoadReport,
    dumps_model,
    export_cell_ledger,
    export_long_csv,
    load_long_csv,
    load_model,
    load_wide_csv,
    loads_long_csv,
    loads_model,
    loads_wide_csv,
    save_model,
)
from .rules import Rule, RuleSet, bind_rule, stats
from .session import CellWrite, ModelSession, VersionConflictError
from .trace import (
    DecompositionReport,
    TraceNode,
    applicable_rules,
    decomposition_check,
    export_docs,
    export_docs_csv,
    model_audit,
    parent_child_pairs,
    trace,
    trace_export,
    trace_path,
)
from .views import ViewGrid, ViewSpec, grid_csv, materialize_view, visible_members

__version__ = "0.1.0"
