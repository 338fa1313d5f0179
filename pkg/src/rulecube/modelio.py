"""Model documents and data files.

* Model file: JSON (``format_version`` 1) holding the ordered dimensions,
  members (name / aliases / parent / optional display format) and the
  ordered rule list.  ``save_model(load_model(x))`` is a fixpoint after
  one canonical formatting pass.
* Data files: RFC-4180 CSV with a mandatory header row, in long format
  (one member column per dimension plus ``Value``) or wide format (one
  dimension spread across columns).  Exports begin with a
  ``format_version,1`` row, which the loaders also accept and skip, so
  export -> import -> export is byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import formula
from .cube import DATA, EMPTY, RULE, Cube
from .formula import FormulaError
from .model import (
    DefinitionError,
    Dimension,
    Member,
    ModelError,
    ModelStructure,
    UnknownMemberError,
)
from .rules import Rule, RuleSet, bind_rule

FORMAT_VERSION = 1


class DataFormatError(ModelError):
    """A load file violates the schema (bad header, wrong version)."""


@dataclass
class LoadReport:
    """Per-file load outcome; loaded + rejected = total rows."""

    source_id: str
    rows_total: int = 0
    rows_loaded: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (line, reason)
    warnings: list[str] = field(default_factory=list)
    cells_written: int = 0

    @property
    def rows_rejected(self) -> int:
        return len(self.rejected)

    @property
    def clean(self) -> bool:
        return not self.rejected


# ---------------------------------------------------------------------------
# Model documents


def parse_model_document(doc: Mapping) -> tuple[ModelStructure, RuleSet]:
    """Build a validated structure and bound rule set from a parsed document."""
    if not isinstance(doc, Mapping):
        raise DefinitionError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DefinitionError(f"unsupported format_version {version!r} (expected 1)")
    name = doc.get("name") or "model"
    dims_doc = doc.get("dimensions")
    if not isinstance(dims_doc, list) or not dims_doc:
        raise DefinitionError("model document needs a non-empty 'dimensions' list")
    dimensions = []
    for d in dims_doc:
        members = []
        for m in d.get("members", []):
            if isinstance(m, str):
                members.append(Member(m))
            else:
                members.append(
                    Member(
                        name=m["name"],
                        aliases=tuple(m.get("aliases", ())),
                        parent=m.get("parent"),
                        format=m.get("format"),
                    )
                )
        dimensions.append(Dimension(d["name"], members))
    structure = ModelStructure(name, dimensions)

    rules = []
    for position, r in enumerate(doc.get("rules", []), start=1):
        rule_name = r.get("name") or f"rule {position}"
        try:
            rules.append(
                bind_rule(
                    structure,
                    name=rule_name,
                    dimension=r["dimension"],
                    target=r["target"],
                    formula_text=r["formula"],
                    enabled=bool(r.get("enabled", True)),
                    filters=r.get("filters") or {},
                    folder=tuple(r.get("folder", ())),
                )
            )
        except (FormulaError, ModelError, KeyError) as e:
            raise DefinitionError(f"rule {position} ({rule_name!r}): {e}") from e
    return structure, RuleSet(rules)


def loads_model(text: str) -> tuple[ModelStructure, RuleSet]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DefinitionError(f"model file is not valid JSON: {e}") from e
    return parse_model_document(doc)


def load_model(path: str | Path) -> tuple[ModelStructure, RuleSet]:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def model_document(structure: ModelStructure, rules: RuleSet) -> dict:
    """Canonical document form (optional fields omitted when empty)."""
    dims = []
    for dim in structure.dimensions:
        members = []
        for m in dim.members:
            entry: dict = {"name": m.name}
            if m.aliases:
                entry["aliases"] = list(m.aliases)
            if m.parent is not None:
                entry["parent"] = m.parent
            if m.format is not None:
                entry["format"] = m.format
            members.append(entry)
        dims.append({"name": dim.name, "members": members})
    rules_doc = []
    for r in rules:
        entry = {
            "name": r.name,
            "dimension": r.dimension,
            "target": r.target,
            "formula": "=" + r.text,
        }
        if not r.enabled:
            entry["enabled"] = False
        if r.filters:
            entry["filters"] = {d: list(m) for d, m in r.filters}
        if r.folder:
            entry["folder"] = list(r.folder)
        rules_doc.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "name": structure.name,
        "dimensions": dims,
        "rules": rules_doc,
    }


def dumps_model(structure: ModelStructure, rules: RuleSet) -> str:
    return json.dumps(model_document(structure, rules), indent=2, ensure_ascii=False) + "\n"


def save_model(structure: ModelStructure, rules: RuleSet, path: str | Path) -> None:
    Path(path).write_text(dumps_model(structure, rules), encoding="utf-8")


# ---------------------------------------------------------------------------
# CSV helpers


def _parse_value(text: str) -> float:
    cleaned = text.strip().replace(",", "").replace("$", "")
    if not cleaned:
        raise ValueError("empty value")
    return float(cleaned)


def _read_rows(text: str) -> list[list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows and rows[0] and rows[0][0].strip().casefold() == "format_version":
        version = rows[0][1].strip() if len(rows[0]) > 1 else ""
        if version != str(FORMAT_VERSION):
            raise DataFormatError(f"unsupported data format_version {version!r}")
        rows = rows[1:]
    return rows


def _writer(buffer: io.StringIO) -> "csv.writer":
    return csv.writer(buffer, lineterminator="\n")


def _format_value(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# Long format


def loads_long_csv(
    cube: Cube, rules: RuleSet, text: str, source_id: str
) -> LoadReport:
    """Load long-format rows: one member column per dimension plus Value.

    Rows are rejected (with line number and reason) for unknown members,
    non-numeric values and non-input-eligible addresses; accepted rows
    commit together after the whole file is read.  No recalculation is
    triggered.
    """
    structure = cube.structure
    report = LoadReport(source_id=source_id)
    rows = _read_rows(text)
    if not rows:
        raise DataFormatError("missing header row")
    header = rows[0]
    line_offset = 1  # header line number

    column_dim: dict[int, int] = {}
    value_col: int | None = None
    for col, title in enumerate(header):
        folded = title.strip().casefold()
        if folded == "value":
            if value_col is not None:
                raise DataFormatError("duplicate Value column")
            value_col = col
            continue
        try:
            column_dim[col] = structure.dim_index(title)
        except ModelError:
            raise DataFormatError(f"unknown column {title.strip()!r} in header") from None
    if value_col is None:
        raise DataFormatError("header must contain a Value column")
    missing = set(range(structure.ndim)) - set(column_dim.values())
    if missing:
        names = ", ".join(structure.dimensions[p].name for p in sorted(missing))
        raise DataFormatError(f"header is missing dimension column(s): {names}")
    if len(set(column_dim.values())) != len(column_dim):
        raise DataFormatError("a dimension appears in two header columns")

    masks = rules.leaf_masks(structure)
    staged: list[tuple[int, float]] = []
    seen: dict[int, int] = {}
    for i, row in enumerate(rows[1:]):
        line = line_offset + 1 + i
        report.rows_total += 1
        if not any(cell.strip() for cell in row):
            report.rejected.append((line, "blank row"))
            continue
        if len(row) != len(header):
            report.rejected.append(
                (line, f"expected {len(header)} fields, got {len(row)}")
            )
            continue
        address = [0] * structure.ndim
        try:
            for col, pos in column_dim.items():
                address[pos] = structure.dimensions[pos].resolve(row[col])
        except UnknownMemberError as e:
            report.rejected.append((line, str(e)))
            continue
        bad = next(
            (
                pos
                for pos, (mask, ordinal) in enumerate(zip(masks, address))
                if not mask[ordinal]
            ),
            None,
        )
        if bad is not None:
            dim = structure.dimensions[bad]
            report.rejected.append(
                (
                    line,
                    f"aggregate member not loadable: "
                    f"{dim.name}={dim.member_name(address[bad])} is a rule target",
                )
            )
            continue
        try:
            value = _parse_value(row[value_col])
        except ValueError:
            report.rejected.append((line, f"non-numeric value {row[value_col]!r}"))
            continue
        if not np.isfinite(value):
            report.rejected.append((line, f"non-finite value {row[value_col]!r}"))
            continue
        linear = structure.linear_index(address)
        if linear in seen:
            report.warnings.append(
                f"line {line} overwrites line {seen[linear]} "
                f"at {'/'.join(structure.member_names(address))} (last one wins)"
            )
        seen[linear] = line
        staged.append((linear, value))
        report.rows_loaded += 1

    src = cube.source_index(source_id)
    for linear, value in staged:
        cube.set_data(linear, value, src)
    report.cells_written = len({linear for linear, _ in staged})
    return report


def load_long_csv(
    cube: Cube, rules: RuleSet, path: str | Path, source_id: str | None = None
) -> LoadReport:
    path = Path(path)
    return loads_long_csv(
        cube, rules, path.read_text(encoding="utf-8"), source_id or path.name
    )


# ---------------------------------------------------------------------------
# Wide format


def _infer_spread(
    structure: ModelStructure, headers: Sequence[str], pinned: set[int]
) -> int:
    candidates: set[int] = set()
    for title in headers:
        hits = {
            pos
            for pos, dim in enumerate(structure.dimensions)
            if dim.try_resolve(title) is not None
        }
        if not hits:
            raise DataFormatError(
                f"column {title.strip()!r} is neither a dimension nor a member"
            )
        if len(hits) > 1:
            names = ", ".join(sorted(structure.dimensions[p].name for p in hits))
            raise DataFormatError(
                f"column {title.strip()!r} resolves in several dimensions ({names}); "
                "name the spread dimension explicitly"
            )
        candidates |= hits
    if len(candidates) != 1:
        names = ", ".join(sorted(structure.dimensions[p].name for p in candidates))
        raise DataFormatError(
            f"spread columns mix members of several dimensions ({names})"
        )
    spread = candidates.pop()
    if spread in pinned:
        raise DataFormatError(
            f"dimension {structure.dimensions[spread].name!r} is both a pin column "
            "and the spread dimension"
        )
    return spread


def loads_wide_csv(
    cube: Cube,
    rules: RuleSet,
    text: str,
    source_id: str,
    spread_dimension: str | None = None,
) -> LoadReport:
    """Load wide-format rows: pin columns plus one column per member of
    the spread dimension.  A row is atomic: one bad cell rejects it."""
    structure = cube.structure
    report = LoadReport(source_id=source_id)
    rows = _read_rows(text)
    if not rows:
        raise DataFormatError("missing header row")
    header = rows[0]

    pin_cols: dict[int, int] = {}
    member_cols: list[tuple[int, str]] = []
    for col, title in enumerate(header):
        try:
            pos = structure.dim_index(title)
        except ModelError:
            member_cols.append((col, title))
            continue
        if pos in pin_cols.values():
            raise DataFormatError(f"dimension {title.strip()!r} pinned twice")
        pin_cols[col] = pos
    if not member_cols:
        raise DataFormatError("no spread member columns in header")

    if spread_dimension is not None:
        spread = structure.dim_index(spread_dimension)
        if spread in pin_cols.values():
            raise DataFormatError(
                f"dimension {spread_dimension!r} is both a pin column and the spread dimension"
            )
    else:
        spread = _infer_spread(
            structure, [t for _, t in member_cols], set(pin_cols.values())
        )
    spread_dim = structure.dimensions[spread]
    spread_members: list[tuple[int, int]] = []  # (column, member ordinal)
    for col, title in member_cols:
        ordinal = spread_dim.try_resolve(title)
        if ordinal is None:
            raise DataFormatError(
                f"column {title.strip()!r} is not a member of {spread_dim.name!r}"
            )
        spread_members.append((col, ordinal))

    missing = set(range(structure.ndim)) - set(pin_cols.values()) - {spread}
    if missing:
        names = ", ".join(structure.dimensions[p].name for p in sorted(missing))
        raise DataFormatError(f"header is missing dimension column(s): {names}")

    masks = rules.leaf_masks(structure)
    staged: list[tuple[int, float]] = []
    seen: dict[int, int] = {}
    for i, row in enumerate(rows[1:]):
        line = 2 + i
        report.rows_total += 1
        if not any(cell.strip() for cell in row):
            report.rejected.append((line, "blank row"))
            continue
        if len(row) != len(header):
            report.rejected.append(
                (line, f"expected {len(header)} fields, got {len(row)}")
            )
            continue
        base = [0] * structure.ndim
        try:
            for col, pos in pin_cols.items():
                base[pos] = structure.dimensions[pos].resolve(row[col])
        except UnknownMemberError as e:
            report.rejected.append((line, str(e)))
            continue
        cells: list[tuple[int, float]] = []
        problem: str | None = None
        for col, ordinal in spread_members:
            raw = row[col]
            if not raw.strip():
                continue
            address = list(base)
            address[spread] = ordinal
            bad = next(
                (
                    pos
                    for pos, (mask, o) in enumerate(zip(masks, address))
                    if not mask[o]
                ),
                None,
            )
            if bad is not None:
                dim = structure.dimensions[bad]
                problem = (
                    f"aggregate member not loadable: "
                    f"{dim.name}={dim.member_name(address[bad])} is a rule target"
                )
                break
            try:
                value = _parse_value(raw)
            except ValueError:
                problem = f"non-numeric value {raw!r} in column {header[col].strip()!r}"
                break
            if not np.isfinite(value):
                problem = f"non-finite value {raw!r} in column {header[col].strip()!r}"
                break
            cells.append((structure.linear_index(address), value))
        if problem is not None:
            report.rejected.append((line, problem))
            continue
        for linear, _ in cells:
            if linear in seen:
                report.warnings.append(
                    f"line {line} overwrites line {seen[linear]} "
                    f"at {'/'.join(structure.member_names(structure.address_of(linear)))}"
                )
            seen[linear] = line
        staged.extend(cells)
        report.rows_loaded += 1

    src = cube.source_index(source_id)
    for linear, value in staged:
        cube.set_data(linear, value, src)
    report.cells_written = len({linear for linear, _ in staged})
    return report


def load_wide_csv(
    cube: Cube,
    rules: RuleSet,
    path: str | Path,
    source_id: str | None = None,
    spread_dimension: str | None = None,
) -> LoadReport:
    path = Path(path)
    return loads_wide_csv(
        cube,
        rules,
        path.read_text(encoding="utf-8"),
        source_id or path.name,
        spread_dimension,
    )


# ---------------------------------------------------------------------------
# Exports


def _filter_mask(
    structure: ModelStructure, filters: Mapping[str, Sequence[str]] | None
) -> np.ndarray | None:
    """Boolean mask over linear indices for per-dimension member filters."""
    if not filters:
        return None
    keep = np.ones(structure.shape, dtype=bool)
    for dim_name, members in filters.items():
        pos = structure.dim_index(dim_name)
        dim = structure.dimensions[pos]
        axis_mask = np.zeros(dim.size, dtype=bool)
        for m in members:
            axis_mask[dim.resolve(m)] = True
        shape = [1] * structure.ndim
        shape[pos] = dim.size
        keep &= axis_mask.reshape(shape)
    return keep.reshape(-1)


def export_long_csv(
    cube: Cube,
    filters: Mapping[str, Sequence[str]] | None = None,
    include: str = "data",
) -> str:
    """Long-format export.

    ``include`` selects the data layer (``data``, exactly re-importable),
    rule-calculated cells (``calculated``) or every non-empty cell
    (``all``).  Values print in shortest round-trip decimal form.
    """
    structure = cube.structure
    if include == "data":
        selected = cube.base_tag == DATA
        values = cube.base_values
        errors = None
    elif include == "calculated":
        selected = cube.state.tag == RULE
        values = cube.state.values
        errors = cube.state.errors
    elif include == "all":
        selected = cube.state.tag != EMPTY
        values = cube.state.values
        errors = cube.state.errors
    else:
        raise ValueError(f"include must be data|calculated|all, got {include!r}")
    mask = _filter_mask(structure, filters)
    if mask is not None:
        selected = selected & mask

    buffer = io.StringIO()
    writer = _writer(buffer)
    writer.writerow(["format_version", FORMAT_VERSION])
    writer.writerow([d.name for d in structure.dimensions] + ["Value"])
    for linear in np.flatnonzero(selected):
        address = structure.address_of(int(linear))
        if errors is not None and errors[linear]:
            rendered = cube.state.cell(int(linear)).display()
        else:
            rendered = _format_value(values[linear])
        writer.writerow(list(structure.member_names(address)) + [rendered])
    return buffer.getvalue()


def export_cell_ledger(cube: Cube, rules: RuleSet) -> str:
    """One row per non-empty cell: address, value, provenance and, for
    rule cells, the producing rule's name and formula in member terms."""
    structure = cube.structure
    state = cube.state
    by_sequence = {r.sequence: r for r in rules}
    buffer = io.StringIO()
    writer = _writer(buffer)
    writer.writerow(["format_version", FORMAT_VERSION])
    writer.writerow(
        [d.name for d in structure.dimensions] + ["Value", "Provenance", "Rule", "Formula"]
    )
    for linear in np.flatnonzero(state.tag != EMPTY):
        linear = int(linear)
        address = structure.address_of(linear)
        cell = state.cell(linear)
        prov = cube.provenance_at(address)
        rule_name = ""
        rule_text = ""
        if prov.tag == RULE:
            rule = by_sequence.get(prov.rule_sequence or 0)
            if rule is not None:
                rule_name = rule.name
                rule_text = rule.text
        writer.writerow(
            list(structure.member_names(address))
            + [cell.display(), prov.display(), rule_name, rule_text]
        )
    return buffer.getvalue()
