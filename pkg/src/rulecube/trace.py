"""Trace-precedence drill-down, decomposition audit and model documentation.

A trace explains one cell: which rules apply there, which one won, and
the operand cells the chosen rule read.  Drilling is free to follow any
applicable rule, not just the winner; the decomposition audit flags
cells where a non-winning rule's reading would disagree (the
precedence-sensitive cells, typically ratios under additive rollups).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import formula
from .cube import ERR_NONE, RULE, CellValue, Cube
from .engine import _eval_vec
from .formula import EvalContext, MemberRef, iter_refs, ref_address
from .model import ModelError, ModelStructure
from .modelio import FORMAT_VERSION
from .rules import Rule, RuleSet

REL_TOL = 1e-9
ABS_TOL = 1e-12


class TraceError(ModelError):
    """The requested drill is invalid (rule not applicable at the cell)."""


@dataclass
class TraceNode:
    """One step of a drill: a cell, its value, the rule explaining it."""

    label: str
    address: tuple[int, ...]
    names: tuple[str, ...]
    value: CellValue
    rule: Rule | None                    # rule explaining this node (None = leaf/data)
    children: list["TraceNode"] = field(default_factory=list)

    @property
    def rule_text(self) -> str:
        return self.rule.text if self.rule else ""


def applicable_rules(rules: RuleSet, address: Sequence[int]) -> list[Rule]:
    """Enabled rules whose scope contains the address, in sequence order;
    the last one is the winner."""
    return rules.applicable(address)


def _context(cube: Cube, address: Sequence[int]) -> EvalContext:
    state = cube.state
    return EvalContext(cube.structure, state.values, state.errors, tuple(address))


def trace(
    cube: Cube,
    rules: RuleSet,
    address: Sequence[int] | Mapping[str, str],
    chosen_rule: str | None = None,
    label: str = "L1",
) -> TraceNode:
    """Trace one cell with one level of operand children.

    ``chosen_rule`` may name any applicable rule (default: the winner).
    Children are the expression's member references instantiated at the
    address, in left-to-right appearance order; data/empty cells have no
    rule and no children.
    """
    structure = cube.structure
    if isinstance(address, Mapping):
        address = structure.address_from_names(address)
    address = tuple(address)
    applicable = rules.applicable(address)
    if chosen_rule is None:
        rule = applicable[-1] if applicable else None
    else:
        rule = next((r for r in applicable if r.name == chosen_rule), None)
        if rule is None:
            raise TraceError(
                f"rule {chosen_rule!r} is not applicable at "
                f"{'/'.join(structure.member_names(address))}"
            )
    node = TraceNode(
        label=label,
        address=address,
        names=structure.member_names(address),
        value=cube.value_at(address),
        rule=rule,
    )
    if rule is None:
        return node
    for position, ref in enumerate(iter_refs(rule.expression), start=1):
        child_address = ref_address(ref, address)
        child_rules = rules.applicable(child_address)
        node.children.append(
            TraceNode(
                label=f"{label}.{position}",
                address=child_address,
                names=structure.member_names(child_address),
                value=cube.value_at(child_address),
                rule=child_rules[-1] if child_rules else None,
            )
        )
    return node


def trace_path(
    cube: Cube,
    rules: RuleSet,
    address: Sequence[int] | Mapping[str, str],
    picks: Sequence[int] = (),
    rule_choices: Sequence[str | None] | None = None,
) -> list[TraceNode]:
    """Drill a path of 1-based operand picks; returns the drilled nodes.

    ``rule_choices[i]`` optionally names the rule to drill node ``i``
    with (index 0 is the root); the default at every step is the
    winning rule at that node's address.
    """
    choices = list(rule_choices or [])
    root = trace(cube, rules, address, choices[0] if choices else None)
    nodes = [root]
    current = root
    for step, pick in enumerate(picks, start=1):
        if not 1 <= pick <= len(current.children):
            raise TraceError(
                f"drill step {step}: pick {pick} out of range 1..{len(current.children)}"
            )
        child = current.children[pick - 1]
        chosen = choices[step] if step < len(choices) else None
        current = trace(cube, rules, child.address, chosen, label=child.label)
        nodes.append(current)
    return nodes


def trace_export(structure: ModelStructure, nodes: Sequence[TraceNode]) -> str:
    """CSV export of a drill: one block per drilled node (parent row then
    child rows), blank row between blocks."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["format_version", FORMAT_VERSION])
    writer.writerow(["Level"] + [d.name for d in structure.dimensions] + ["Value", "Rule"])
    for index, node in enumerate(nodes):
        if index:
            writer.writerow([])
        for row_node in (node, *node.children):
            writer.writerow(
                [row_node.label]
                + list(row_node.names)
                + [row_node.value.display(), row_node.rule_text]
            )
    return buffer.getvalue()


def parse_label(label: str) -> tuple[int, ...]:
    """Operand picks encoded in a level label ("L1.2.4" -> (2, 4))."""
    parts = label.split(".")
    if not parts or parts[0] != "L1":
        raise ValueError(f"label must start with 'L1': {label!r}")
    return tuple(int(p) for p in parts[1:])


# ---------------------------------------------------------------------------
# Decomposition audit


def _agrees(recomputed: CellValue, stored: CellValue) -> bool:
    if recomputed.is_error or stored.is_error:
        return recomputed.error == stored.error
    return math.isclose(recomputed.value, stored.value, rel_tol=REL_TOL, abs_tol=ABS_TOL)


@dataclass(frozen=True)
class RuleReading:
    rule_name: str
    sequence: int
    value: CellValue
    agrees: bool
    winner: bool


@dataclass(frozen=True)
class DecompositionReport:
    address: tuple[int, ...]
    names: tuple[str, ...]
    stored: CellValue
    readings: tuple[RuleReading, ...]

    @property
    def disagreements(self) -> tuple[RuleReading, ...]:
        return tuple(r for r in self.readings if not r.agrees)


def decomposition_check(
    cube: Cube, rules: RuleSet, address: Sequence[int] | Mapping[str, str]
) -> DecompositionReport:
    """Recompute one cell under every applicable rule, reading current
    cube values, and compare each reading with the stored value."""
    structure = cube.structure
    if isinstance(address, Mapping):
        address = structure.address_from_names(address)
    address = tuple(address)
    stored = cube.value_at(address)
    applicable = rules.applicable(address)
    ctx = _context(cube, address)
    readings = []
    for rule in applicable:
        value = formula.evaluate(rule.expression, ctx)
        readings.append(
            RuleReading(
                rule_name=rule.name,
                sequence=rule.sequence,
                value=value,
                agrees=_agrees(value, stored),
                winner=rule is applicable[-1],
            )
        )
    return DecompositionReport(address, structure.member_names(address), stored, tuple(readings))


def model_audit(cube: Cube, rules: RuleSet) -> list[DecompositionReport]:
    """Disagreeing decompositions across the whole cube.

    Only cells with at least two applicable rules can be flagged; for
    each such cell every applicable rule's reading is compared against
    the stored value at the audit tolerance (rel 1e-9, abs 1e-12).
    """
    structure = cube.structure
    state = cube.state
    shape = structure.shape
    vals_nd = state.values.reshape(shape)
    errs_nd = state.errors.reshape(shape)

    coverage = np.zeros(shape, dtype=np.int16)
    flagged = np.zeros(shape, dtype=bool)
    enabled = rules.enabled()
    for rule in enabled:
        sel = rule.selections(structure)
        ix = np.ix_(*sel)
        coverage[ix] += 1
        rv, re_ = _eval_vec(rule.expression, vals_nd, errs_nd, sel)
        scope_shape = tuple(len(s) for s in sel)
        rv = np.broadcast_to(np.asarray(rv, dtype=np.float64), scope_shape)
        re_ = np.broadcast_to(np.asarray(re_, dtype=np.int8), scope_shape)
        sv = vals_nd[ix]
        se = errs_nd[ix]
        close = np.abs(rv - sv) <= np.maximum(
            REL_TOL * np.maximum(np.abs(rv), np.abs(sv)), ABS_TOL
        )
        agree = np.where((re_ != ERR_NONE) | (se != ERR_NONE), re_ == se, close)
        block = flagged[ix]
        flagged[ix] = block | ~agree

    flagged &= coverage >= 2
    reports = []
    for linear in np.flatnonzero(flagged.reshape(-1)):
        reports.append(decomposition_check(cube, rules, structure.address_of(int(linear))))
    return reports


# ---------------------------------------------------------------------------
# Documentation export


def export_docs(structure: ModelStructure, rules: RuleSet) -> str:
    """Plain-text model documentation: per dimension the parent/child
    table (1-based child ordinal, parent ordinal, 0 = no parent), then
    the ordered rule listing grouped by folder."""
    out = io.StringIO()
    out.write(f"MODEL: {structure.name}\n")
    for dim in structure.dimensions:
        out.write(f"\n{dim.name}\n")
        out.write("Dimension Members\tChild\tParent\n")
        for ordinal, member in enumerate(dim.members):
            parent = dim.parent_ord[ordinal]
            out.write(f"{member.name}\t{ordinal + 1}\t{0 if parent is None else parent + 1}\n")
    out.write("\nRules\n")
    current_folder: tuple[str, ...] | None = None
    for rule in rules:
        folder = rule.folder or ("Main",)
        if folder != current_folder:
            out.write(" - ".join(folder) + "\n")
            current_folder = folder
        flag = "" if rule.enabled else " (disabled)"
        out.write(f"{rule.sequence}\t{rule.name}{flag}\t= {rule.text}\n")
    return out.getvalue()


def export_docs_csv(structure: ModelStructure, rules: RuleSet) -> str:
    """CSV form of the documentation export."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["format_version", FORMAT_VERSION])
    writer.writerow(["Section", "Dimension", "Member", "Child", "Parent"])
    for dim in structure.dimensions:
        for ordinal, member in enumerate(dim.members):
            parent = dim.parent_ord[ordinal]
            writer.writerow(
                [
                    "hierarchy",
                    dim.name,
                    member.name,
                    ordinal + 1,
                    0 if parent is None else parent + 1,
                ]
            )
    writer.writerow([])
    writer.writerow(["Section", "Sequence", "Folder", "Rule", "Enabled", "Formula"])
    for rule in rules:
        writer.writerow(
            [
                "rule",
                rule.sequence,
                " - ".join(rule.folder or ("Main",)),
                rule.name,
                str(rule.enabled).lower(),
                "= " + rule.text,
            ]
        )
    return buffer.getvalue()


def parent_child_pairs(structure: ModelStructure, dimension: str) -> list[tuple[str, int, int]]:
    """(member, child ordinal, parent ordinal) rows for one dimension."""
    dim = structure.dimension(dimension)
    rows = []
    for ordinal, member in enumerate(dim.members):
        parent = dim.parent_ord[ordinal]
        rows.append((member.name, ordinal + 1, 0 if parent is None else parent + 1))
    return rows
