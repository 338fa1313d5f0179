"""Dense cube storage with a parallel per-cell provenance ledger.

The cube keeps two layers.  The *base* layer holds loaded data and
write-back values; the *calculated* layer is what readers see and is
rebuilt from the base layer by every calculation pass.  Override pins
live beside the base layer and survive recalculation untouched.

Values are IEEE doubles; spreadsheet-style error states (division by
zero, etc.) are stored in a parallel byte array so that whole-cube math
stays vectorizable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import ModelStructure

# Provenance tags (stored as int8).
EMPTY = 0
DATA = 1
RULE = 2
OVERRIDE = 3

# Error kinds (stored as int8; 0 = no error).
ERR_NONE = 0
ERR_DIV0 = 1
ERR_REF = 2
ERR_FN = 3

ERROR_NAMES = {ERR_DIV0: "DIV0", ERR_REF: "REF", ERR_FN: "FN"}
ERROR_KINDS = {v: k for k, v in ERROR_NAMES.items()}
ERROR_DISPLAY = {ERR_DIV0: "#DIV/0!", ERR_REF: "#REF!", ERR_FN: "#FN!"}


@dataclass(frozen=True)
class CellValue:
    """A finite number or a tagged error; never NaN or infinity."""

    value: float = 0.0
    error: str | None = None

    @classmethod
    def number(cls, x: float) -> "CellValue":
        x = float(x)
        if not math.isfinite(x):
            return cls(0.0, "DIV0")
        return cls(x, None)

    @classmethod
    def error_of(cls, kind: str) -> "CellValue":
        if kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {kind!r}")
        return cls(0.0, kind)

    @property
    def is_error(self) -> bool:
        return self.error is not None

    def display(self) -> str:
        if self.error is not None:
            return ERROR_DISPLAY[ERROR_KINDS[self.error]]
        return repr(self.value)

    def __repr__(self) -> str:
        if self.error is not None:
            return f"CellValue(error={self.error})"
        return f"CellValue({self.value!r})"


@dataclass(frozen=True)
class Provenance:
    """How a cell's current value arose."""

    tag: int
    source: str | None = None      # DATA / OVERRIDE: load or write-back source id
    rule_sequence: int | None = None
    rule_name: str | None = None

    @property
    def kind(self) -> str:
        return {EMPTY: "empty", DATA: "data", RULE: "rule", OVERRIDE: "override"}[self.tag]

    def display(self) -> str:
        if self.tag == DATA:
            return f"data:{self.source}"
        if self.tag == RULE:
            return f"rule:{self.rule_sequence}:{self.rule_name}"
        if self.tag == OVERRIDE:
            return f"override:{self.source}"
        return "empty"


@dataclass(frozen=True)
class CalcState:
    """One immutable calculated layer; readers grab a reference once."""

    values: np.ndarray        # float64, flat
    errors: np.ndarray        # int8, flat
    tag: np.ndarray           # int8, flat
    ref: np.ndarray           # int32: rule sequence (RULE) or source index
    rule_names: Mapping[int, str] = field(default_factory=dict)

    def cell(self, linear: int) -> CellValue:
        err = int(self.errors[linear])
        if err != ERR_NONE:
            return CellValue(0.0, ERROR_NAMES[err])
        return CellValue(float(self.values[linear]), None)


class Cube:
    """Dense value store over the full cartesian product of members."""

    def __init__(self, structure: ModelStructure):
        self.structure = structure
        n = structure.total_cells
        self.base_values = np.zeros(n, dtype=np.float64)
        self.base_tag = np.zeros(n, dtype=np.int8)          # EMPTY / DATA
        self.base_src = np.full(n, -1, dtype=np.int32)
        self.sources: list[str] = []
        self.overrides: dict[int, tuple[float, int]] = {}   # linear -> (value, src idx)
        self.calculated = False
        self.state = CalcState(
            values=self.base_values.copy(),
            errors=np.zeros(n, dtype=np.int8),
            tag=self.base_tag.copy(),
            ref=self.base_src.copy(),
        )

    # -- base-layer mutation (no recalculation; the engine orchestrates) --

    def source_index(self, source_id: str) -> int:
        try:
            return self.sources.index(source_id)
        except ValueError:
            self.sources.append(source_id)
            return len(self.sources) - 1

    def set_data(self, linear: int, value: float, source_idx: int) -> bool:
        """Store one data value; returns False when it overwrote prior data."""
        fresh = self.base_tag[linear] != DATA
        self.base_values[linear] = value
        self.base_tag[linear] = DATA
        self.base_src[linear] = source_idx
        self.calculated = False
        return fresh

    def clear_data(self, linear: int) -> None:
        self.base_values[linear] = 0.0
        self.base_tag[linear] = EMPTY
        self.base_src[linear] = -1
        self.calculated = False

    def set_override(self, linear: int, value: float, source_idx: int) -> None:
        self.overrides[linear] = (float(value), source_idx)
        self.calculated = False

    def clear_override(self, linear: int) -> bool:
        """Remove a pin; returns False (no-op) when the cell was not pinned."""
        if linear not in self.overrides:
            return False
        del self.overrides[linear]
        self.calculated = False
        return True

    def is_pinned(self, linear: int) -> bool:
        return linear in self.overrides

    # -- reads (calculated layer) --

    def value_at(self, address: Sequence[int]) -> CellValue:
        return self.state.cell(self.structure.linear_index(address))

    def provenance_at(self, address: Sequence[int]) -> Provenance:
        linear = self.structure.linear_index(address)
        state = self.state
        tag = int(state.tag[linear])
        if tag == RULE:
            seq = int(state.ref[linear])
            return Provenance(RULE, rule_sequence=seq, rule_name=state.rule_names.get(seq))
        if tag in (DATA, OVERRIDE):
            idx = int(state.ref[linear])
            src = self.sources[idx] if 0 <= idx < len(self.sources) else None
            return Provenance(tag, source=src)
        return Provenance(EMPTY)

    def data_cells(self) -> np.ndarray:
        """Linear indices of the base data layer, ascending."""
        return np.flatnonzero(self.base_tag == DATA)
