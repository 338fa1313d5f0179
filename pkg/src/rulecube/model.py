"""Dimensional model structure: members, dimensions, addressing and statistics.

A model is an ordered list of dimensions, each an ordered list of named
members.  Cells of the cube are addressed either by a tuple of member
ordinals (one per dimension, in dimension order) or by the equivalent
linear index computed from row-major (last dimension fastest) strides.
Member lookup is case-insensitive and alias-aware; original spelling is
preserved for display.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence


class ModelError(Exception):
    """Base class for model construction and lookup failures."""


class DefinitionError(ModelError):
    """The model definition violates a structural invariant."""


class UnknownMemberError(ModelError):
    def __init__(self, name: str, dimension: str):
        super().__init__(f"unknown member {name!r} in dimension {dimension!r}")
        self.name = name
        self.dimension = dimension


class UnknownDimensionError(ModelError):
    def __init__(self, name: str):
        super().__init__(f"unknown dimension {name!r}")
        self.name = name


class AddressError(ModelError):
    """A cell address is out of range for the structure."""


@dataclass(frozen=True)
class Member:
    """One named position on a dimension.

    ``aliases`` are alternate spellings accepted wherever a member name is
    resolved (load files, formulas).  ``parent`` links members into an
    optional ragged display hierarchy; it never drives aggregation, which
    is done exclusively by rules.  ``format`` is a client-side display
    hint ("percent", "currency", ...) carried through untouched.
    """

    name: str
    aliases: tuple[str, ...] = ()
    parent: str | None = None
    format: str | None = None


class Dimension:
    """An ordered list of members with an optional parent/child forest."""

    def __init__(self, name: str, members: Sequence[Member]):
        if not name or not name.strip():
            raise DefinitionError("dimension name must be non-empty")
        if not members:
            raise DefinitionError(f"dimension {name!r} has no members")
        self.name = name
        lookup: dict[str, int] = {}
        for ordinal, member in enumerate(members):
            if not member.name or not member.name.strip():
                raise DefinitionError(f"dimension {name!r} has a member with an empty name")
            for key in (member.name, *member.aliases):
                folded = key.casefold()
                if folded in lookup:
                    raise DefinitionError(
                        f"duplicate member name or alias {key!r} in dimension {name!r}"
                    )
                lookup[folded] = ordinal
        self._lookup = lookup

        # Canonicalize parent references (parents may be given by alias).
        canonical: list[Member] = []
        parent_ord: list[int | None] = []
        for member in members:
            if member.parent is None:
                canonical.append(member)
                parent_ord.append(None)
                continue
            folded = member.parent.casefold()
            if folded not in lookup:
                raise DefinitionError(
                    f"member {member.name!r} in dimension {name!r} references "
                    f"unknown parent {member.parent!r}"
                )
            ordinal = lookup[folded]
            parent_name = members[ordinal].name
            if parent_name == member.name:
                raise DefinitionError(
                    f"member {member.name!r} in dimension {name!r} is its own parent"
                )
            canonical.append(
                Member(member.name, member.aliases, parent_name, member.format)
            )
            parent_ord.append(ordinal)
        self.members: tuple[Member, ...] = tuple(canonical)
        self.parent_ord: tuple[int | None, ...] = tuple(parent_ord)

        children: list[list[int]] = [[] for _ in members]
        for ordinal, parent in enumerate(parent_ord):
            if parent is not None:
                children[parent].append(ordinal)
        self.children_ord: tuple[tuple[int, ...], ...] = tuple(tuple(c) for c in children)
        self._check_forest()

    def _check_forest(self) -> None:
        for start in range(len(self.members)):
            seen = set()
            node: int | None = start
            while node is not None:
                if node in seen:
                    raise DefinitionError(
                        f"parent cycle through member "
                        f"{self.members[start].name!r} in dimension {self.name!r}"
                    )
                seen.add(node)
                node = self.parent_ord[node]

    @property
    def size(self) -> int:
        return len(self.members)

    def resolve(self, name: str) -> int:
        """Member ordinal for a canonical name or alias (case-insensitive)."""
        try:
            return self._lookup[name.strip().casefold()]
        except KeyError:
            raise UnknownMemberError(name, self.name) from None

    def member_name(self, ordinal: int) -> str:
        return self.members[ordinal].name

    def try_resolve(self, name: str) -> int | None:
        return self._lookup.get(name.strip().casefold())

    def children(self, name: str) -> list[Member]:
        """Direct children of a member, in dimension member order."""
        ordinal = self.resolve(name)
        return [self.members[c] for c in self.children_ord[ordinal]]

    def descendants(self, name: str) -> list[Member]:
        """All transitive children, depth-first in member order."""
        out: list[Member] = []
        stack = list(reversed(self.children_ord[self.resolve(name)]))
        while stack:
            node = stack.pop()
            out.append(self.members[node])
            stack.extend(reversed(self.children_ord[node]))
        return out

    def is_hierarchy_leaf(self, name: str) -> bool:
        """True when the member has no children in the display hierarchy."""
        return not self.children_ord[self.resolve(name)]

    def roots(self) -> list[int]:
        return [i for i, p in enumerate(self.parent_ord) if p is None]

    def depth(self, ordinal: int) -> int:
        d = 0
        node = self.parent_ord[ordinal]
        while node is not None:
            d += 1
            node = self.parent_ord[node]
        return d

    def __repr__(self) -> str:
        return f"Dimension({self.name!r}, {self.size} members)"


class ModelStructure:
    """Validated, immutable dimensional skeleton of a model."""

    def __init__(self, name: str, dimensions: Sequence[Dimension]):
        if len(dimensions) < 2:
            raise DefinitionError("a model needs at least two dimensions")
        self.name = name
        self.dimensions: tuple[Dimension, ...] = tuple(dimensions)
        lookup: dict[str, int] = {}
        for pos, dim in enumerate(self.dimensions):
            folded = dim.name.casefold()
            if folded in lookup:
                raise DefinitionError(f"duplicate dimension name {dim.name!r}")
            lookup[folded] = pos
        self._dim_lookup = lookup
        self.shape: tuple[int, ...] = tuple(d.size for d in self.dimensions)
        strides: list[int] = [0] * len(self.shape)
        acc = 1
        for pos in range(len(self.shape) - 1, -1, -1):
            strides[pos] = acc
            acc *= self.shape[pos]
        self.strides: tuple[int, ...] = tuple(strides)
        self.total_cells: int = acc

    @property
    def ndim(self) -> int:
        return len(self.dimensions)

    def dim_index(self, name: str) -> int:
        try:
            return self._dim_lookup[name.strip().casefold()]
        except KeyError:
            raise UnknownDimensionError(name) from None

    def dimension(self, name: str) -> Dimension:
        return self.dimensions[self.dim_index(name)]

    def linear_index(self, address: Sequence[int]) -> int:
        """Linear slot for an ordinal address; bijective with address_of."""
        if len(address) != self.ndim:
            raise AddressError(
                f"address has {len(address)} coordinates, expected {self.ndim}"
            )
        linear = 0
        for ordinal, size, stride in zip(address, self.shape, self.strides):
            if not 0 <= ordinal < size:
                raise AddressError(f"ordinal {ordinal} out of range [0, {size})")
            linear += ordinal * stride
        return linear

    def address_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.total_cells:
            raise AddressError(f"linear index {index} out of range [0, {self.total_cells})")
        out = []
        for stride in self.strides:
            out.append(index // stride)
            index %= stride
        return tuple(out)

    def address_from_names(self, names: Mapping[str, str]) -> tuple[int, ...]:
        """Ordinal address from a {dimension: member} mapping (all dimensions)."""
        address: list[int | None] = [None] * self.ndim
        for dim_name, member_name in names.items():
            pos = self.dim_index(dim_name)
            address[pos] = self.dimensions[pos].resolve(member_name)
        missing = [d.name for d, a in zip(self.dimensions, address) if a is None]
        if missing:
            raise AddressError(f"address is missing dimensions: {', '.join(missing)}")
        return tuple(address)  # type: ignore[arg-type]

    def member_names(self, address: Sequence[int]) -> tuple[str, ...]:
        return tuple(
            dim.member_name(ordinal) for dim, ordinal in zip(self.dimensions, address)
        )

    def iter_addresses(
        self, selections: Sequence[Sequence[int]] | None = None
    ) -> Iterator[tuple[int, ...]]:
        """Addresses over the cartesian grid of per-dimension ordinal lists.

        ``None`` means the full model; iteration is lexicographic in
        dimension order.
        """
        if selections is None:
            selections = [range(s) for s in self.shape]
        return itertools.product(*selections)

    def __repr__(self) -> str:
        dims = " x ".join(f"{d.name}({d.size})" for d in self.dimensions)
        return f"ModelStructure({self.name!r}, {dims})"


@dataclass(frozen=True)
class ModelStats:
    """Cell accounting: how much of the model is data vs. calculation."""

    total_cells: int
    input_cells: int
    calculated_cells: int

    def __post_init__(self) -> None:
        if self.input_cells + self.calculated_cells != self.total_cells:
            raise ValueError("input_cells + calculated_cells must equal total_cells")


def build_structure(
    name: str,
    dimensions: Iterable[tuple[str, Sequence[Member]]],
) -> ModelStructure:
    """Build and validate a structure from (name, members) pairs."""
    return ModelStructure(name, [Dimension(n, m) for n, m in dimensions])
