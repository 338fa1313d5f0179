"""Rule application over the cube: scope expansion, sequential precedence,
write-back, overrides and rule-coverage lint.

Each enabled rule is evaluated over its whole scope against a read
snapshot taken at the start of that rule (gather-before-scatter), so
results are independent of iteration order within a rule and later
rules overwrite earlier ones on contested cells.  Evaluation is
vectorized per rule with numpy; the scalar evaluator in
:mod:`rulecube.formula` follows the identical operation order, so both
paths agree bit-for-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .cube import DATA, EMPTY, ERR_DIV0, ERR_NONE, OVERRIDE, RULE, CalcState, Cube
from .formula import Binary, Expr, FuncCall, MemberRef, Negate, NumberLit
from .model import ModelError, ModelStructure
from .rules import Rule, RuleSet


class WriteBackError(ModelError):
    """A write targeted a cell that rules control (use an override)."""


@dataclass
class CalcReport:
    """Outcome of one calculation pass."""

    cells_written: dict[str, int] = field(default_factory=dict)  # rule name -> cells
    overwrites: int = 0          # writes that hit a cell already written this pass
    skipped_pinned: int = 0
    duration_ms: float = 0.0

    @property
    def total_written(self) -> int:
        return sum(self.cells_written.values())

    @property
    def rule_cells(self) -> int:
        """Distinct cells carrying RULE provenance after the pass."""
        return self.total_written - self.overwrites


def rule_scope(rule: Rule, structure: ModelStructure) -> Iterator[tuple[int, ...]]:
    """Addresses the rule writes, lexicographic by dimension order."""
    selections = [s.tolist() for s in rule.selections(structure)]
    return structure.iter_addresses(selections)


# ---------------------------------------------------------------------------
# Vectorized expression evaluation over one rule scope


def _gather(
    ref: MemberRef,
    vals_nd: np.ndarray,
    errs_nd: np.ndarray,
    sel: list[np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    src = list(sel)
    src[ref.dim] = np.array([ref.member], dtype=np.intp)  # type: ignore[index]
    for pos, member in ref.bound_overrides or ():
        src[pos] = np.array([member], dtype=np.intp)
    ix = np.ix_(*src)
    return vals_nd[ix], errs_nd[ix]


def _first_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a != ERR_NONE, a, b)


def _normalize(v: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e = np.where((e == ERR_NONE) & ~np.isfinite(v), np.int8(ERR_DIV0), e)
    v = np.where(e != ERR_NONE, 0.0, v)
    return v, e


def _eval_vec(
    expr: Expr,
    vals_nd: np.ndarray,
    errs_nd: np.ndarray,
    sel: list[np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(expr, NumberLit):
        v = np.float64(expr.value)
        return np.asarray(v), np.asarray(np.int8(ERR_NONE))
    if isinstance(expr, MemberRef):
        return _gather(expr, vals_nd, errs_nd, sel)
    if isinstance(expr, Negate):
        v, e = _eval_vec(expr.child, vals_nd, errs_nd, sel)
        return _normalize(-v, e)
    if isinstance(expr, Binary):
        lv, le = _eval_vec(expr.left, vals_nd, errs_nd, sel)
        rv, re_ = _eval_vec(expr.right, vals_nd, errs_nd, sel)
        e = _first_error(le, re_)
        with np.errstate(all="ignore"):
            if expr.op == "+":
                v = lv + rv
            elif expr.op == "-":
                v = lv - rv
            elif expr.op == "*":
                v = lv * rv
            else:
                e = np.where((e == ERR_NONE) & (rv == 0.0), np.int8(ERR_DIV0), e)
                v = np.divide(lv, np.where(rv == 0.0, 1.0, rv))
        return _normalize(v, e)
    if isinstance(expr, FuncCall):
        return _eval_call_vec(expr, vals_nd, errs_nd, sel)
    raise TypeError(f"unknown expression node {expr!r}")


def _eval_call_vec(expr, vals_nd, errs_nd, sel):
    name = expr.name
    if name == "IFERROR":
        av, ae = _eval_vec(expr.args[0], vals_nd, errs_nd, sel)
        bv, be = _eval_vec(expr.args[1], vals_nd, errs_nd, sel)
        bad = ae != ERR_NONE
        return np.where(bad, bv, av), np.where(bad, be, np.int8(ERR_NONE))
    parts = [_eval_vec(a, vals_nd, errs_nd, sel) for a in expr.args]
    e = parts[0][1]
    for _, pe in parts[1:]:
        e = _first_error(e, pe)
    if name in ("SUM", "AVERAGE"):
        acc = parts[0][0]
        with np.errstate(all="ignore"):
            for pv, _ in parts[1:]:
                acc = acc + pv
                acc, e = _normalize(acc, e)
            if name == "AVERAGE":
                acc = acc / np.float64(len(parts))
        return _normalize(acc, e)
    if name in ("MIN", "MAX"):
        acc = parts[0][0]
        for pv, _ in parts[1:]:
            acc = np.where(pv < acc, pv, acc) if name == "MIN" else np.where(pv > acc, pv, acc)
        return _normalize(acc, e)
    if name == "ABS":
        return _normalize(np.abs(parts[0][0]), e)
    if name == "ROUND":
        x, d = parts[0][0], parts[1][0]
        with np.errstate(all="ignore"):
            p = np.power(10.0, d)
            v = np.copysign(np.floor(np.abs(x) * p + 0.5) / p, x)
        return _normalize(v, e)
    raise TypeError(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# Calculation pass


def apply_rules(cube: Cube, rules: RuleSet) -> CalcReport:
    """Materialize every cell: base data, then each enabled rule in order.

    The calculated layer is rebuilt from scratch, so repeated runs over
    the same base data are bit-identical and disabled rules leave no
    residue.  Pinned (override) cells are never rewritten.
    """
    t0 = time.perf_counter()
    structure = cube.structure
    shape = structure.shape
    n = structure.total_cells

    vals = cube.base_values.copy()
    errs = np.zeros(n, dtype=np.int8)
    tag = cube.base_tag.copy()
    ref = cube.base_src.copy()
    for linear, (value, src) in sorted(cube.overrides.items()):
        vals[linear] = value
        tag[linear] = OVERRIDE
        ref[linear] = src

    vals_nd = vals.reshape(shape)
    errs_nd = errs.reshape(shape)
    tag_nd = tag.reshape(shape)
    ref_nd = ref.reshape(shape)

    report = CalcReport()
    has_pins = bool(cube.overrides)
    for rule in rules.enabled():
        sel = rule.selections(structure)
        scope_shape = tuple(len(s) for s in sel)
        rv, re_ = _eval_vec(rule.expression, vals_nd, errs_nd, sel)
        rv = np.broadcast_to(np.asarray(rv, dtype=np.float64), scope_shape)
        re_ = np.broadcast_to(np.asarray(re_, dtype=np.int8), scope_shape)
        ix = np.ix_(*sel)
        prior = tag_nd[ix]
        if has_pins:
            pinned = prior == OVERRIDE
            pins = int(pinned.sum())
            report.skipped_pinned += pins
            report.overwrites += int(((prior == RULE) & ~pinned).sum())
            report.cells_written[rule.name] = rv.size - pins
            vals_nd[ix] = np.where(pinned, vals_nd[ix], rv)
            errs_nd[ix] = np.where(pinned, errs_nd[ix], re_)
            ref_nd[ix] = np.where(pinned, ref_nd[ix], np.int32(rule.sequence))
            tag_nd[ix] = np.where(pinned, prior, np.int8(RULE))
        else:
            report.overwrites += int((prior == RULE).sum())
            report.cells_written[rule.name] = rv.size
            vals_nd[ix] = rv
            errs_nd[ix] = re_
            tag_nd[ix] = RULE
            ref_nd[ix] = rule.sequence

    cube.state = CalcState(
        values=vals,
        errors=errs,
        tag=tag,
        ref=ref,
        rule_names={r.sequence: r.name for r in rules.enabled()},
    )
    cube.calculated = True
    report.duration_ms = (time.perf_counter() - t0) * 1000.0
    return report


# ---------------------------------------------------------------------------
# Write-back and overrides


def write_back(
    cube: Cube,
    rules: RuleSet,
    cells: Sequence[tuple[Sequence[int] | Mapping[str, str], float]],
    source_id: str,
) -> CalcReport:
    """Store input values and recalculate.

    Every address must be input-eligible (all coordinates leaf members);
    rule-covered cells must go through :func:`override_cell` instead.
    The batch is validated before any mutation.
    """
    structure = cube.structure
    masks = rules.leaf_masks(structure)
    resolved: list[tuple[int, float]] = []
    for address, value in cells:
        if isinstance(address, Mapping):
            address = structure.address_from_names(address)
        value = float(value)
        if not np.isfinite(value):
            raise WriteBackError(
                f"non-finite value {value!r} at {structure.member_names(address)}"
            )
        for pos, (mask, ordinal) in enumerate(zip(masks, address)):
            if not mask[ordinal]:
                dim = structure.dimensions[pos]
                raise WriteBackError(
                    f"cell {structure.member_names(address)} is rule-covered "
                    f"({dim.name}={dim.member_name(ordinal)} is a rule target); "
                    "use an override to pin it"
                )
        resolved.append((structure.linear_index(address), value))
    src = cube.source_index(source_id)
    for linear, value in resolved:
        cube.set_data(linear, value, src)
    return apply_rules(cube, rules)


def override_cell(
    cube: Cube,
    address: Sequence[int] | Mapping[str, str],
    value: float,
    source_id: str,
) -> None:
    """Pin a cell; recalculation leaves it untouched until cleared."""
    structure = cube.structure
    if isinstance(address, Mapping):
        address = structure.address_from_names(address)
    value = float(value)
    if not np.isfinite(value):
        raise WriteBackError(f"non-finite override value {value!r}")
    cube.set_override(structure.linear_index(address), value, cube.source_index(source_id))


def clear_override(cube: Cube, address: Sequence[int] | Mapping[str, str]) -> bool:
    """Unpin a cell; returns False (warning, not an error) if it was not pinned."""
    structure = cube.structure
    if isinstance(address, Mapping):
        address = structure.address_from_names(address)
    return cube.clear_override(structure.linear_index(address))


# ---------------------------------------------------------------------------
# Coverage lint


@dataclass(frozen=True)
class Finding:
    kind: str        # uncovered-parent | shadowed-rule | self-referential-rule
    message: str
    dimension: str | None = None
    member: str | None = None
    rule: str | None = None


def _filters_overlap(structure: ModelStructure, a: Rule, b: Rule) -> bool:
    fa = dict(a.bound_filters)
    fb = dict(b.bound_filters)
    for pos in set(fa) | set(fb):
        full = range(structure.shape[pos])
        left = set(fa.get(pos, full))
        right = set(fb.get(pos, full))
        if not left & right:
            return False
    return True


def _reads_own_scope(structure: ModelStructure, rule: Rule) -> bool:
    from .formula import iter_refs

    filters = dict(rule.bound_filters)
    for ref in iter_refs(rule.expression):
        overrides = dict(ref.bound_overrides or ())
        effective_anchor = overrides.get(rule.anchor_pos, ref.member)
        if effective_anchor != rule.target_ord:
            continue
        if all(
            overrides[pos] in members
            for pos, members in filters.items()
            if pos in overrides
        ):
            return True
    return False


def coverage_lint(structure: ModelStructure, rules: RuleSet) -> list[Finding]:
    """Structural smells: hierarchy parents no rule computes, shadowed
    rules (same anchor/target with overlapping filters; later wins), and
    rules that read cells inside their own scope (order-dependent)."""
    findings: list[Finding] = []
    targets = rules.targets_by_dimension(structure)
    for pos, dim in enumerate(structure.dimensions):
        for ordinal, member in enumerate(dim.members):
            if dim.children_ord[ordinal] and ordinal not in targets[pos]:
                findings.append(
                    Finding(
                        kind="uncovered-parent",
                        message=(
                            f"member {member.name!r} in {dim.name!r} has hierarchy "
                            "children but no enabled rule computes it"
                        ),
                        dimension=dim.name,
                        member=member.name,
                    )
                )
    enabled = rules.enabled()
    for i, early in enumerate(enabled):
        for late in enabled[i + 1 :]:
            if (
                early.anchor_pos == late.anchor_pos
                and early.target_ord == late.target_ord
                and _filters_overlap(structure, early, late)
            ):
                findings.append(
                    Finding(
                        kind="shadowed-rule",
                        message=(
                            f"rule {early.name!r} (sequence {early.sequence}) is shadowed "
                            f"by {late.name!r} (sequence {late.sequence}) on overlapping scope"
                        ),
                        dimension=early.dimension,
                        member=early.target,
                        rule=early.name,
                    )
                )
    for rule in enabled:
        if _reads_own_scope(structure, rule):
            findings.append(
                Finding(
                    kind="self-referential-rule",
                    message=(
                        f"rule {rule.name!r} reads cells inside its own scope; "
                        "results depend on rule order only, scope iteration is "
                        "snapshot-isolated"
                    ),
                    dimension=rule.dimension,
                    member=rule.target,
                    rule=rule.name,
                )
            )
    return findings
