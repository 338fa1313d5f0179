"""The rule formula language: parsing, binding and scalar evaluation.

Grammar (leading ``=`` optional)::

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := "-" factor | "(" expr ")" | NUMBER | ref | IDENT "(" args ")"
    ref     := "{" name ("|" DIM "=" MEMBER ("," DIM "=" MEMBER)*)? "}"

Member names may contain spaces and any character except ``{`` ``}``
``|`` (and ``,``/``=`` inside an override list).  References are always
to whole members, never to grid coordinates: an unqualified name binds
in the rule's anchor dimension, and qualifiers pin other dimensions (or
re-pin the anchor, in which case the qualifier wins).

Evaluation never raises: failures surface as error cell values that
propagate left-to-right through operators and can be caught by IFERROR.
Empty cells read as 0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cube import ERR_DIV0, ERR_NONE, ERROR_NAMES, CellValue
from .model import ModelError, ModelStructure, UnknownDimensionError, UnknownMemberError


class FormulaError(ModelError):
    """Base for parse and bind failures."""


class ParseError(FormulaError):
    pass


class BindError(FormulaError):
    pass


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class NumberLit(Expr):
    value: float


@dataclass(frozen=True)
class MemberRef(Expr):
    """``{name}`` or ``{name | DIM=Member, ...}``.

    Binding fills ``dim``/``member`` (anchor dimension position and member
    ordinal) and ``bound_overrides`` as (dimension position, ordinal) pairs
    applied after the anchor substitution, in source order.
    """

    name: str
    overrides: tuple[tuple[str, str], ...] = ()
    dim: int | None = None
    member: int | None = None
    bound_overrides: tuple[tuple[int, int], ...] | None = None

    @property
    def is_bound(self) -> bool:
        return self.dim is not None


@dataclass(frozen=True)
class FuncCall(Expr):
    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Negate(Expr):
    child: Expr


# name -> (min arity, max arity or None)
FUNCTIONS: dict[str, tuple[int, int | None]] = {
    "SUM": (1, None),
    "IFERROR": (2, 2),
    "AVERAGE": (1, None),
    "MIN": (1, None),
    "MAX": (1, None),
    "ABS": (1, 1),
    "ROUND": (2, 2),
}


# ---------------------------------------------------------------------------
# Parsing

_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ParseError:
        return ParseError(f"{message} (at offset {self.pos} in {self.text!r})")

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self) -> Expr:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == "=":
            self.pos += 1
        if not self.peek():
            raise ParseError("empty formula")
        expr = self.expr()
        if self.peek():
            raise self.error("unexpected trailing input")
        return expr

    def expr(self) -> Expr:
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        ch = self.peek()
        if ch == "-":
            self.pos += 1
            return Negate(self.factor())
        if ch == "+":
            self.pos += 1
            return self.factor()
        if ch == "(":
            self.pos += 1
            node = self.expr()
            self.expect(")")
            return node
        if ch == "{":
            return self.member_ref()
        m = _NUMBER_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return NumberLit(float(m.group()))
        m = _IDENT_RE.match(self.text, self.pos)
        if m:
            name = m.group().upper()
            if name not in FUNCTIONS:
                raise self.error(f"unknown function {m.group()!r}")
            self.pos = m.end()
            self.expect("(")
            args = [self.expr()]
            while self.peek() == ",":
                self.pos += 1
                args.append(self.expr())
            self.expect(")")
            return FuncCall(name, tuple(args))
        raise self.error("expected a number, member reference, function or '('")

    def member_ref(self) -> MemberRef:
        self.expect("{")
        end = self.text.find("}", self.pos)
        if end < 0:
            raise ParseError(f"unterminated member reference in {self.text!r}")
        body = self.text[self.pos : end]
        self.pos = end + 1
        name, _, qualifier = body.partition("|")
        name = name.strip()
        if not name:
            raise ParseError(f"empty member name in reference in {self.text!r}")
        overrides: list[tuple[str, str]] = []
        if qualifier:
            for part in qualifier.split(","):
                dim, eq, member = part.partition("=")
                if not eq or not dim.strip() or not member.strip():
                    raise ParseError(
                        f"malformed qualifier {part.strip()!r}; expected DIM=Member"
                    )
                overrides.append((dim.strip(), member.strip()))
        return MemberRef(name, tuple(overrides))


def parse(text: str) -> Expr:
    """Parse formula text into an unbound expression tree."""
    if text is None or not text.strip() or text.strip() == "=":
        raise ParseError("empty formula")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing (canonical text; parses back to a structurally identical tree)

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(expr: Expr) -> str:
    """Canonical rendering; bound refs print canonical member names."""
    return _print(expr, 0)


def _print(expr: Expr, parent_prec: int) -> str:
    if isinstance(expr, NumberLit):
        return _format_number(expr.value)
    if isinstance(expr, MemberRef):
        if expr.overrides:
            quals = ", ".join(f"{d}={m}" for d, m in expr.overrides)
            return f"{{{expr.name} | {quals}}}"
        return f"{{{expr.name}}}"
    if isinstance(expr, FuncCall):
        args = ", ".join(_print(a, 0) for a in expr.args)
        return f"{expr.name}({args})"
    if isinstance(expr, Negate):
        inner = _print(expr.child, 3)
        if isinstance(expr.child, (Binary, Negate)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        left = _print(expr.left, prec)
        # Left-associative operators: a right child at equal precedence
        # needs parentheses to keep the tree shape.
        right = _print(expr.right, prec + 1)
        if isinstance(expr.left, Binary) and _PRECEDENCE[expr.left.op] < prec:
            left = f"({left})"
        if isinstance(expr.right, Binary) and _PRECEDENCE[expr.right.op] <= prec:
            right = f"({right})"
        text = f"{left} {expr.op} {right}"
        return text
    raise TypeError(f"unknown expression node {expr!r}")


# ---------------------------------------------------------------------------
# Binding


def iter_refs(expr: Expr) -> list[MemberRef]:
    """Member references in left-to-right source order."""
    out: list[MemberRef] = []

    def walk(node: Expr) -> None:
        if isinstance(node, MemberRef):
            out.append(node)
        elif isinstance(node, FuncCall):
            for a in node.args:
                walk(a)
        elif isinstance(node, Binary):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Negate):
            walk(node.child)

    walk(expr)
    return out


def bind(expr: Expr, structure: ModelStructure, anchor: str | int) -> Expr:
    """Resolve every member reference against the structure.

    Unqualified names must exist in the anchor dimension; qualifiers may
    name any dimension (each at most once).  Names are rewritten to their
    canonical spelling so printed text is alias-free.
    """
    anchor_pos = structure.dim_index(anchor) if isinstance(anchor, str) else anchor
    anchor_dim = structure.dimensions[anchor_pos]

    def walk(node: Expr) -> Expr:
        if isinstance(node, NumberLit):
            return node
        if isinstance(node, MemberRef):
            try:
                ordinal = anchor_dim.resolve(node.name)
            except UnknownMemberError as e:
                raise BindError(str(e)) from None
            seen: set[int] = set()
            bound: list[tuple[int, int]] = []
            display: list[tuple[str, str]] = []
            for dim_name, member_name in node.overrides:
                try:
                    pos = structure.dim_index(dim_name)
                except UnknownDimensionError as e:
                    raise BindError(str(e)) from None
                if pos in seen:
                    raise BindError(
                        f"dimension {structure.dimensions[pos].name!r} qualified twice "
                        f"in reference to {node.name!r}"
                    )
                seen.add(pos)
                dim = structure.dimensions[pos]
                try:
                    member = dim.resolve(member_name)
                except UnknownMemberError as e:
                    raise BindError(str(e)) from None
                bound.append((pos, member))
                display.append((dim.name, dim.member_name(member)))
            return MemberRef(
                name=anchor_dim.member_name(ordinal),
                overrides=tuple(display),
                dim=anchor_pos,
                member=ordinal,
                bound_overrides=tuple(bound),
            )
        if isinstance(node, FuncCall):
            lo, hi = FUNCTIONS[node.name]
            if len(node.args) < lo or (hi is not None and len(node.args) > hi):
                expected = str(lo) if hi == lo else f"{lo}+" if hi is None else f"{lo}..{hi}"
                raise BindError(
                    f"{node.name} takes {expected} argument(s), got {len(node.args)}"
                )
            return FuncCall(node.name, tuple(walk(a) for a in node.args))
        if isinstance(node, Binary):
            return Binary(node.op, walk(node.left), walk(node.right))
        if isinstance(node, Negate):
            return Negate(walk(node.child))
        raise TypeError(f"unknown expression node {node!r}")

    return walk(expr)


def ref_address(ref: MemberRef, base: Sequence[int]) -> tuple[int, ...]:
    """Cell a bound reference reads from, for a given base address."""
    if not ref.is_bound:
        raise BindError(f"reference {ref.name!r} is not bound")
    address = list(base)
    address[ref.dim] = ref.member  # type: ignore[index]
    for pos, member in ref.bound_overrides or ():
        address[pos] = member
    return tuple(address)


# ---------------------------------------------------------------------------
# Scalar evaluation

# Fold steps mirror the vectorized engine exactly (same operation order,
# same tie rules) so both paths are bit-identical.


@dataclass(frozen=True)
class EvalContext:
    """Read snapshot plus the address of the cell being computed."""

    structure: ModelStructure
    values: np.ndarray | Sequence[float]
    errors: np.ndarray | Sequence[int] | None
    base: tuple[int, ...]

    def read(self, address: Sequence[int]) -> tuple[float, int]:
        linear = self.structure.linear_index(address)
        err = int(self.errors[linear]) if self.errors is not None else ERR_NONE
        if err != ERR_NONE:
            return 0.0, err
        return float(self.values[linear]), ERR_NONE


def _num(x: float) -> tuple[float, int]:
    if not math.isfinite(x):
        return 0.0, ERR_DIV0
    return x, ERR_NONE


def _eval(expr: Expr, ctx: EvalContext) -> tuple[float, int]:
    if isinstance(expr, NumberLit):
        return _num(expr.value)
    if isinstance(expr, MemberRef):
        return ctx.read(ref_address(expr, ctx.base))
    if isinstance(expr, Negate):
        v, e = _eval(expr.child, ctx)
        return (0.0, e) if e else _num(-v)
    if isinstance(expr, Binary):
        lv, le = _eval(expr.left, ctx)
        rv, re_ = _eval(expr.right, ctx)
        if le:
            return 0.0, le
        if re_:
            return 0.0, re_
        if expr.op == "+":
            return _num(lv + rv)
        if expr.op == "-":
            return _num(lv - rv)
        if expr.op == "*":
            return _num(lv * rv)
        if rv == 0.0:
            return 0.0, ERR_DIV0
        return _num(lv / rv)
    if isinstance(expr, FuncCall):
        return _eval_call(expr, ctx)
    raise TypeError(f"unknown expression node {expr!r}")


def _eval_call(expr: FuncCall, ctx: EvalContext) -> tuple[float, int]:
    name = expr.name
    if name == "IFERROR":
        v, e = _eval(expr.args[0], ctx)
        if not e:
            return v, ERR_NONE
        return _eval(expr.args[1], ctx)
    vals: list[float] = []
    for arg in expr.args:
        v, e = _eval(arg, ctx)
        if e:
            return 0.0, e
        vals.append(v)
    if name == "SUM" or name == "AVERAGE":
        acc = vals[0]
        for v in vals[1:]:
            acc, e = _num(acc + v)
            if e:
                return 0.0, e
        if name == "AVERAGE":
            return _num(acc / len(vals))
        return _num(acc)
    if name == "MIN":
        acc = vals[0]
        for v in vals[1:]:
            acc = v if v < acc else acc
        return _num(acc)
    if name == "MAX":
        acc = vals[0]
        for v in vals[1:]:
            acc = v if v > acc else acc
        return _num(acc)
    if name == "ABS":
        return _num(abs(vals[0]))
    if name == "ROUND":
        return _num(_round_half_away(vals[0], vals[1]))
    raise TypeError(f"unknown function {name!r}")


def _round_half_away(x: float, digits: float) -> float:
    p = 10.0 ** digits
    return math.copysign(math.floor(abs(x) * p + 0.5) / p, x)


def evaluate(expr: Expr, ctx: EvalContext) -> CellValue:
    """Evaluate a bound expression; total (never raises on data)."""
    v, e = _eval(expr, ctx)
    if e:
        return CellValue(0.0, ERROR_NAMES[e])
    return CellValue(v, None)
