"""A loaded model with its cube, rule set, version counter and lock.

Sessions are the unit the service registry and the CLI work with.
Mutations are serialized by a per-session lock and bump the version;
readers take one reference to the immutable calculated state, so they
never observe a half-applied calculation.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import engine, modelio, views
from .cube import Cube
from .engine import CalcReport, Finding, WriteBackError
from .model import ModelError, ModelStats, ModelStructure
from .modelio import LoadReport
from .rules import RuleSet, stats as rule_stats
from .trace import export_docs, export_docs_csv, model_audit, trace as trace_cell
from .views import ViewGrid, ViewSpec


class VersionConflictError(ModelError):
    """A mutation carried a stale model version."""


@dataclass(frozen=True)
class CellWrite:
    address: Mapping[str, str]
    value: float | None
    mode: str = "data"  # data | override | clear


class ModelSession:
    def __init__(self, structure: ModelStructure, rules: RuleSet, model_id: str = "model"):
        self.id = model_id
        self.structure = structure
        self.rules = rules
        self.cube = Cube(structure)
        self.version = 1
        self.lock = threading.RLock()

    # -- constructors --

    @classmethod
    def from_document(cls, doc: Mapping, model_id: str = "model") -> "ModelSession":
        structure, rules = modelio.parse_model_document(doc)
        return cls(structure, rules, model_id)

    @classmethod
    def from_path(cls, path: str | Path, model_id: str | None = None) -> "ModelSession":
        path = Path(path)
        structure, rules = modelio.load_model(path)
        return cls(structure, rules, model_id or path.stem)

    # -- helpers --

    def _check_version(self, expected: int | None) -> None:
        if expected is not None and expected != self.version:
            raise VersionConflictError(
                f"model version is {self.version}, request carried {expected}"
            )

    # -- mutations --

    def load_csv(
        self,
        text: str,
        source_id: str,
        fmt: str = "long",
        spread_dimension: str | None = None,
        expected_version: int | None = None,
    ) -> LoadReport:
        with self.lock:
            self._check_version(expected_version)
            if fmt == "long":
                report = modelio.loads_long_csv(self.cube, self.rules, text, source_id)
            elif fmt == "wide":
                report = modelio.loads_wide_csv(
                    self.cube, self.rules, text, source_id, spread_dimension
                )
            else:
                raise ModelError(f"format must be long or wide, got {fmt!r}")
            self.version += 1
            return report

    def calc(self, expected_version: int | None = None) -> CalcReport:
        with self.lock:
            self._check_version(expected_version)
            report = engine.apply_rules(self.cube, self.rules)
            self.version += 1
            return report

    def write_cells(
        self, writes: Sequence[CellWrite], source_id: str, expected_version: int | None = None
    ) -> CalcReport:
        """Apply data writes, overrides and pin clears, then recalculate once."""
        with self.lock:
            self._check_version(expected_version)
            # Validate the whole batch before mutating anything.
            masks = self.rules.leaf_masks(self.structure)
            data_cells: list[tuple[int, float]] = []
            for w in writes:
                if w.mode not in ("data", "override", "clear"):
                    raise WriteBackError(f"mode must be data|override|clear, got {w.mode!r}")
                if w.mode == "clear":
                    continue
                if w.value is None or not math.isfinite(float(w.value)):
                    raise WriteBackError(f"{w.mode} write needs a finite value, got {w.value!r}")
                if w.mode == "data":
                    resolved = self.structure.address_from_names(w.address)
                    for pos, (mask, ordinal) in enumerate(zip(masks, resolved)):
                        if not mask[ordinal]:
                            raise WriteBackError(
                                f"cell {self.structure.member_names(resolved)} is "
                                "rule-covered; use an override to pin it"
                            )
                    data_cells.append((self.structure.linear_index(resolved), float(w.value)))
            for w in writes:
                if w.mode == "override":
                    engine.override_cell(self.cube, w.address, w.value, source_id)
                elif w.mode == "clear":
                    engine.clear_override(self.cube, w.address)
            src = self.cube.source_index(source_id)
            for linear, value in data_cells:
                self.cube.set_data(linear, value, src)
            report = engine.apply_rules(self.cube, self.rules)
            self.version += 1
            return report

    def patch_rules(
        self,
        reorder: Sequence[str] | None = None,
        set_enabled: Mapping[str, bool] | None = None,
        expected_version: int | None = None,
    ) -> CalcReport:
        with self.lock:
            self._check_version(expected_version)
            rules = self.rules
            for name, flag in (set_enabled or {}).items():
                rules = rules.set_enabled(name, flag)
            if reorder is not None:
                rules = rules.reorder_names(reorder)
            self.rules = rules
            report = engine.apply_rules(self.cube, self.rules)
            self.version += 1
            return report

    # -- reads --

    def stats(self) -> ModelStats:
        return rule_stats(self.structure, self.rules)

    def lint(self) -> list[Finding]:
        return engine.coverage_lint(self.structure, self.rules)

    def view(self, spec: ViewSpec) -> ViewGrid:
        return views.materialize_view(self.cube, self.rules, spec)

    def trace(
        self,
        address: Mapping[str, str] | Sequence[int],
        chosen_rule: str | None = None,
        label: str = "L1",
    ):
        return trace_cell(self.cube, self.rules, address, chosen_rule, label)

    def docs(self) -> str:
        return export_docs(self.structure, self.rules)

    def docs_csv(self) -> str:
        return export_docs_csv(self.structure, self.rules)

    def audit(self):
        return model_audit(self.cube, self.rules)

    def ledger(self) -> str:
        return modelio.export_cell_ledger(self.cube, self.rules)

    def export_data(self, include: str = "data") -> str:
        return modelio.export_long_csv(self.cube, include=include)
