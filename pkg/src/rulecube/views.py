"""Pivot views: layout specification and grid materialization.

A view places every dimension exactly once on pages, rows or columns.
Rows and columns display members in dimension member order filtered by
hierarchy expansion state: a member is visible when all of its ancestors
are expanded.  A dimension with no expansion entry shows all members
(fully expanded); an explicit member selection overrides both.

Materialization cost is proportional to the view size, not the cube
size: cell reads are vectorized gathers by precomputed linear offsets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cube import EMPTY, ERR_NONE, OVERRIDE, Cube
from .model import ModelError, ModelStructure
from .rules import RuleSet


class ViewError(ModelError):
    """The view specification is invalid for the structure."""


@dataclass(frozen=True)
class ViewSpec:
    pages: tuple[tuple[str, str], ...] = ()          # (dimension, member)
    rows: tuple[str, ...] = ()                        # dimension names, outer first
    cols: tuple[str, ...] = ()
    expand: Mapping[str, frozenset[str]] = field(default_factory=dict)
    member_selection: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def from_document(cls, doc: Mapping) -> "ViewSpec":
        pages_doc = doc.get("pages", {})
        if isinstance(pages_doc, Mapping):
            pages = tuple((d, m) for d, m in pages_doc.items())
        else:
            pages = tuple((d, m) for d, m in pages_doc)
        return cls(
            pages=pages,
            rows=tuple(doc.get("rows", ())),
            cols=tuple(doc.get("cols", ())),
            expand={d: frozenset(m) for d, m in doc.get("expand", {}).items()},
            member_selection={
                d: tuple(m) for d, m in doc.get("member_selection", {}).items()
            },
        )


@dataclass(frozen=True)
class ViewGrid:
    row_dims: tuple[str, ...]
    col_dims: tuple[str, ...]
    pages: tuple[tuple[str, str], ...]
    row_headers: tuple[tuple[str, ...], ...]
    col_headers: tuple[tuple[str, ...], ...]
    values: tuple[tuple[float, ...], ...]
    errors: tuple[tuple[str | None, ...], ...]
    flags: tuple[tuple[tuple[str, ...], ...], ...]
    row_depths: tuple[tuple[int, ...], ...]   # hierarchy depth per row header part

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_headers), len(self.col_headers)


def visible_members(
    structure: ModelStructure,
    dimension: str,
    expanded: frozenset[str] | None,
) -> list[int]:
    """Member ordinals visible under the expansion state, in member order.

    ``None`` (no entry for the dimension) means fully expanded.
    """
    dim = structure.dimension(dimension)
    if expanded is None:
        return list(range(dim.size))
    expanded_ords = {dim.resolve(m) for m in expanded}
    visible = []
    for ordinal in range(dim.size):
        node = dim.parent_ord[ordinal]
        show = True
        while node is not None:
            if node not in expanded_ords:
                show = False
                break
            node = dim.parent_ord[node]
        if show:
            visible.append(ordinal)
    return visible


def _axis_members(
    structure: ModelStructure, spec: ViewSpec, dimension: str
) -> list[int]:
    dim = structure.dimension(dimension)
    selection = spec.member_selection.get(dimension)
    if selection is None:
        for key, value in spec.member_selection.items():
            if key.casefold() == dimension.casefold():
                selection = value
                break
    if selection is not None:
        return [dim.resolve(m) for m in selection]
    expanded = None
    for key, value in spec.expand.items():
        if key.casefold() == dimension.casefold():
            expanded = value
            break
    return visible_members(structure, dimension, expanded)


def materialize_view(cube: Cube, rules: RuleSet, spec: ViewSpec) -> ViewGrid:
    """Evaluate a view against the calculated cube."""
    structure = cube.structure
    placed: list[str] = [d for d, _ in spec.pages] + list(spec.rows) + list(spec.cols)
    positions = []
    for name in placed:
        positions.append(structure.dim_index(name))
    if sorted(positions) != list(range(structure.ndim)):
        names = ", ".join(d.name for d in structure.dimensions)
        raise ViewError(
            f"every dimension must appear exactly once across pages/rows/cols ({names})"
        )
    for dim_name in spec.member_selection:
        if structure.dim_index(dim_name) not in [
            structure.dim_index(d) for d in (*spec.rows, *spec.cols)
        ]:
            raise ViewError(
                f"member_selection applies to row/column dimensions only, got {dim_name!r}"
            )

    page_offset = 0
    for dim_name, member in spec.pages:
        pos = structure.dim_index(dim_name)
        ordinal = structure.dimensions[pos].resolve(member)
        page_offset += ordinal * structure.strides[pos]

    def axis(dim_names: Sequence[str]) -> tuple[list[tuple[int, ...]], np.ndarray]:
        per_dim = [_axis_members(structure, spec, name) for name in dim_names]
        tuples = list(itertools.product(*per_dim)) if dim_names else [()]
        offsets = np.zeros(len(tuples), dtype=np.int64)
        for i, combo in enumerate(tuples):
            acc = 0
            for name, ordinal in zip(dim_names, combo):
                acc += ordinal * structure.strides[structure.dim_index(name)]
            offsets[i] = acc
        return tuples, offsets

    row_tuples, row_offsets = axis(spec.rows)
    col_tuples, col_offsets = axis(spec.cols)
    linear = page_offset + row_offsets[:, None] + col_offsets[None, :]

    state = cube.state
    values = state.values[linear]
    errors = state.errors[linear]
    tags = state.tag[linear]

    masks = rules.leaf_masks(structure)
    page_eligible = all(
        masks[structure.dim_index(d)][structure.dimensions[structure.dim_index(d)].resolve(m)]
        for d, m in spec.pages
    )

    def axis_eligible(dim_names, tuples) -> np.ndarray:
        out = np.ones(len(tuples), dtype=bool)
        for i, combo in enumerate(tuples):
            for name, ordinal in zip(dim_names, combo):
                if not masks[structure.dim_index(name)][ordinal]:
                    out[i] = False
                    break
        return out

    row_ok = axis_eligible(spec.rows, row_tuples)
    col_ok = axis_eligible(spec.cols, col_tuples)
    eligible = page_eligible & row_ok[:, None] & col_ok[None, :]

    def header_names(dim_names, tuples):
        out = []
        for combo in tuples:
            out.append(
                tuple(
                    structure.dimension(name).member_name(ordinal)
                    for name, ordinal in zip(dim_names, combo)
                )
            )
        return tuple(out)

    def header_depths(dim_names, tuples):
        out = []
        for combo in tuples:
            out.append(
                tuple(
                    structure.dimension(name).depth(ordinal)
                    for name, ordinal in zip(dim_names, combo)
                )
            )
        return tuple(out)

    flag_rows = []
    error_rows = []
    for i in range(linear.shape[0]):
        flag_row = []
        error_row = []
        for j in range(linear.shape[1]):
            cell_flags = ["input-eligible" if eligible[i, j] else "rule-covered"]
            if tags[i, j] == OVERRIDE:
                cell_flags.append("overridden")
            if errors[i, j] != ERR_NONE:
                cell_flags.append("error")
            flag_row.append(tuple(cell_flags))
            error_row.append(
                cube.state.cell(int(linear[i, j])).error if errors[i, j] else None
            )
        flag_rows.append(tuple(flag_row))
        error_rows.append(tuple(error_row))

    canonical_pages = tuple(
        (
            structure.dimensions[structure.dim_index(d)].name,
            structure.dimensions[structure.dim_index(d)].member_name(
                structure.dimensions[structure.dim_index(d)].resolve(m)
            ),
        )
        for d, m in spec.pages
    )
    return ViewGrid(
        row_dims=tuple(structure.dimension(d).name for d in spec.rows),
        col_dims=tuple(structure.dimension(d).name for d in spec.cols),
        pages=canonical_pages,
        row_headers=header_names(spec.rows, row_tuples),
        col_headers=header_names(spec.cols, col_tuples),
        values=tuple(tuple(float(v) for v in row) for row in values),
        errors=tuple(error_rows),
        flags=tuple(flag_rows),
        row_depths=header_depths(spec.rows, row_tuples),
    )


def grid_csv(grid: ViewGrid) -> str:
    """CSV rendering: one header row per column dimension, then data rows."""
    import csv as _csv
    import io as _io

    buffer = _io.StringIO()
    writer = _csv.writer(buffer, lineterminator="\n")
    writer.writerow(["format_version", 1])
    for d, m in grid.pages:
        writer.writerow([f"{d}={m}"])
    n_row_dims = len(grid.row_dims)
    for level, dim_name in enumerate(grid.col_dims):
        writer.writerow(
            list(grid.row_dims if level == len(grid.col_dims) - 1 else [""] * n_row_dims)
            + [header[level] for header in grid.col_headers]
        )
    if not grid.col_dims:
        writer.writerow(list(grid.row_dims) + ["Value"])
    for i, header in enumerate(grid.row_headers):
        row: list[str] = list(header)
        for j in range(len(grid.col_headers)):
            err = grid.errors[i][j]
            row.append(
                {"DIV0": "#DIV/0!", "REF": "#REF!", "FN": "#FN!"}[err]
                if err
                else repr(grid.values[i][j])
            )
        writer.writerow(row)
    return buffer.getvalue()
