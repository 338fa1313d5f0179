"""Bound member rules and the ordered rule set.

A rule anchors one formula to one target member of one dimension and is
applied to every cell whose anchor coordinate equals the target,
optionally narrowed by member filters on other dimensions.  Rule order
is the precedence order: later rules overwrite earlier results on
contested cells.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import formula
from .formula import BindError, Expr
from .model import ModelStats, ModelStructure


@dataclass(frozen=True)
class Rule:
    """One bound rule; sequence is its 1-based position in the rule set."""

    name: str
    dimension: str                      # anchor dimension (canonical name)
    target: str                         # target member (canonical name)
    expression: Expr                    # bound
    enabled: bool = True
    filters: tuple[tuple[str, tuple[str, ...]], ...] = ()
    folder: tuple[str, ...] = ()
    sequence: int = 0
    anchor_pos: int = 0
    target_ord: int = 0
    bound_filters: tuple[tuple[int, tuple[int, ...]], ...] = ()

    @property
    def text(self) -> str:
        return formula.to_text(self.expression)

    def applies_to(self, address: Sequence[int]) -> bool:
        if address[self.anchor_pos] != self.target_ord:
            return False
        return all(address[pos] in members for pos, members in self.bound_filters)

    def selections(self, structure: ModelStructure) -> list[np.ndarray]:
        """Per-dimension ordinal arrays whose product is the rule scope."""
        sel = [np.arange(size, dtype=np.intp) for size in structure.shape]
        sel[self.anchor_pos] = np.array([self.target_ord], dtype=np.intp)
        for pos, members in self.bound_filters:
            sel[pos] = np.array(sorted(members), dtype=np.intp)
        return sel

    def scope_size(self, structure: ModelStructure) -> int:
        n = 1
        for s in self.selections(structure):
            n *= len(s)
        return n


def bind_rule(
    structure: ModelStructure,
    name: str,
    dimension: str,
    target: str,
    formula_text: str,
    enabled: bool = True,
    filters: Mapping[str, Sequence[str]] | None = None,
    folder: Sequence[str] = (),
    sequence: int = 0,
) -> Rule:
    """Parse and bind one rule definition against a structure."""
    anchor_pos = structure.dim_index(dimension)
    anchor = structure.dimensions[anchor_pos]
    target_ord = anchor.resolve(target)
    expr = formula.bind(formula.parse(formula_text), structure, anchor_pos)
    bound_filters: list[tuple[int, tuple[int, ...]]] = []
    display_filters: list[tuple[str, tuple[str, ...]]] = []
    for dim_name, members in (filters or {}).items():
        pos = structure.dim_index(dim_name)
        if pos == anchor_pos:
            raise BindError(
                f"rule {name!r}: filters may not name the anchor dimension {anchor.name!r}"
            )
        dim = structure.dimensions[pos]
        ordinals = tuple(dim.resolve(m) for m in members)
        bound_filters.append((pos, ordinals))
        display_filters.append((dim.name, tuple(dim.member_name(o) for o in ordinals)))
    return Rule(
        name=name,
        dimension=anchor.name,
        target=anchor.member_name(target_ord),
        expression=expr,
        enabled=enabled,
        filters=tuple(display_filters),
        folder=tuple(folder),
        sequence=sequence,
        anchor_pos=anchor_pos,
        target_ord=target_ord,
        bound_filters=tuple(bound_filters),
    )


class RuleSet:
    """Ordered list of rules; sequence positions are contiguous from 1."""

    def __init__(self, rules: Iterable[Rule]):
        self.rules: tuple[Rule, ...] = tuple(
            replace(r, sequence=i + 1) for i, r in enumerate(rules)
        )
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise BindError(f"duplicate rule name(s): {', '.join(dupes)}")

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def enabled(self) -> list[Rule]:
        return [r for r in self.rules if r.enabled]

    def by_name(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(f"no rule named {name!r}")

    def reorder(self, permutation: Sequence[int]) -> "RuleSet":
        """New rule set with rules in the given order of current sequences."""
        if sorted(permutation) != list(range(1, len(self.rules) + 1)):
            raise ValueError(
                f"permutation must rearrange 1..{len(self.rules)}, got {list(permutation)}"
            )
        return RuleSet(self.rules[s - 1] for s in permutation)

    def reorder_names(self, names: Sequence[str]) -> "RuleSet":
        return self.reorder([self.by_name(n).sequence for n in names])

    def set_enabled(self, name: str, flag: bool) -> "RuleSet":
        target = self.by_name(name)
        return RuleSet(
            replace(r, enabled=flag) if r is target else r for r in self.rules
        )

    def targets_by_dimension(self, structure: ModelStructure) -> list[set[int]]:
        """Distinct enabled-rule target ordinals, per dimension position."""
        targets: list[set[int]] = [set() for _ in structure.dimensions]
        for r in self.enabled():
            targets[r.anchor_pos].add(r.target_ord)
        return targets

    def leaf_masks(self, structure: ModelStructure) -> list[np.ndarray]:
        """Boolean mask per dimension: True where no enabled rule targets."""
        masks = []
        for dim, targets in zip(structure.dimensions, self.targets_by_dimension(structure)):
            mask = np.ones(dim.size, dtype=bool)
            for t in targets:
                mask[t] = False
            masks.append(mask)
        return masks

    def is_input_eligible(self, structure: ModelStructure, address: Sequence[int]) -> bool:
        """True when every coordinate is a leaf (no enabled rule targets it)."""
        masks = self.leaf_masks(structure)
        return all(bool(m[a]) for m, a in zip(masks, address))

    def applicable(self, address: Sequence[int]) -> list[Rule]:
        """Enabled rules whose scope contains the address, in sequence order."""
        return [r for r in self.enabled() if r.applies_to(address)]

    def winner(self, address: Sequence[int]) -> Rule | None:
        applicable = self.applicable(address)
        return applicable[-1] if applicable else None


def stats(structure: ModelStructure, rules: RuleSet) -> ModelStats:
    """Cell accounting: input cells have only leaf coordinates."""
    input_cells = 1
    for mask in rules.leaf_masks(structure):
        input_cells *= int(mask.sum())
    total = structure.total_cells
    return ModelStats(total, input_cells, total - input_cells)
