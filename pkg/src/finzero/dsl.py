"""A small calculator language for multi-step numeric reasoning.

Programs are comma-separated binary operations; later steps reference
earlier results with ``#k``::

    subtract(39.2, 28.2), divide(#0, 28.2)

Eight operators exist: add, subtract, multiply, divide, exponent,
greater (strict comparison; alias ``greater-than`` accepted on input),
max, min. A program whose final step is ``greater`` yields a truth
value; every other program yields a number.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

from .errors import DslConversionError, DslExecutionError, DslParseError

# A program evaluates to exactly one of: a real number, or a truth value.
DslValue = float | bool


class DslOp(Enum):
    ADD = "add"
    SUBTRACT = "subtract"
    MULTIPLY = "multiply"
    DIVIDE = "divide"
    EXPONENT = "exponent"
    GREATER = "greater"
    MAX = "max"
    MIN = "min"


_OP_ALIASES = {"greater-than": "greater", "greater_than": "greater"}
_OPS_BY_NAME = {op.value: op for op in DslOp}


@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class StepRef:
    index: int


DslArg = Literal | StepRef


@dataclass(frozen=True)
class DslStep:
    op: DslOp
    arg1: DslArg
    arg2: DslArg


@dataclass(frozen=True)
class DslProgram:
    """An ordered, validated sequence of steps.

    Construction enforces that the program is non-empty and that every
    ``#k`` reference points at an earlier step.
    """

    steps: tuple[DslStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a program needs at least one step")
        for k, step in enumerate(self.steps):
            for arg in (step.arg1, step.arg2):
                if isinstance(arg, StepRef) and not 0 <= arg.index < k:
                    raise ValueError(
                        f"step {k} references #{arg.index}, which is not an earlier step"
                    )

    @property
    def answer_kind(self) -> str:
        """"boolean" when the final operator is a comparison, else "numerical"."""
        return "boolean" if self.steps[-1].op is DslOp.GREATER else "numerical"


@dataclass(frozen=True)
class RawStep:
    """One step as pulled out of model output, before typing."""

    index: int
    operation: str | None
    arg1: str | None
    arg2: str | None


@dataclass(frozen=True)
class RawProgram:
    """A tolerantly-extracted program structure plus any answer the model
    declared alongside it (metadata only — never trusted)."""

    steps: tuple[RawStep, ...]
    declared_answer: str | None = None


_NAME_RE = re.compile(r"[A-Za-z][A-Za-z_-]*")
_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")
_REF_RE = re.compile(r"#(\d+)")


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, char: str):
        if self.pos >= len(self.text) or self.text[self.pos] != char:
            raise DslParseError(f"expected {char!r} at position {self.pos}", self.pos)
        self.pos += 1

    def take(self, pattern: re.Pattern) -> re.Match | None:
        match = pattern.match(self.text, self.pos)
        if match:
            self.pos = match.end()
        return match


def _parse_arg(cursor: _Cursor, step_index: int) -> DslArg:
    cursor.skip_ws()
    ref = cursor.take(_REF_RE)
    if ref:
        target = int(ref.group(1))
        if not 0 <= target < step_index:
            raise DslParseError(
                f"step {step_index} references #{target}, which is not an earlier step",
                cursor.pos,
            )
        return StepRef(target)
    number = cursor.take(_NUMBER_RE)
    if number:
        return Literal(float(number.group(0)))
    raise DslParseError(f"expected a number or #ref at position {cursor.pos}", cursor.pos)


def parse_program(text: str) -> DslProgram:
    """Parse canonical program text, rejecting anything malformed.

    Raises DslParseError with a character position on bad input.
    """
    cursor = _Cursor(text)
    steps: list[DslStep] = []
    cursor.skip_ws()
    if cursor.pos == len(text):
        raise DslParseError("empty program", 0)
    while True:
        cursor.skip_ws()
        name_pos = cursor.pos
        name = cursor.take(_NAME_RE)
        if name is None:
            raise DslParseError(f"expected an operator at position {cursor.pos}", cursor.pos)
        op = _lookup_op(name.group(0), name_pos)
        cursor.skip_ws()
        cursor.expect("(")
        arg1 = _parse_arg(cursor, len(steps))
        cursor.skip_ws()
        cursor.expect(",")
        arg2 = _parse_arg(cursor, len(steps))
        cursor.skip_ws()
        cursor.expect(")")
        steps.append(DslStep(op, arg1, arg2))
        cursor.skip_ws()
        if cursor.pos == len(text):
            break
        cursor.expect(",")
    return DslProgram(tuple(steps))


def _lookup_op(name: str, position: int) -> DslOp:
    canonical = _OP_ALIASES.get(name.lower(), name.lower())
    op = _OPS_BY_NAME.get(canonical)
    if op is None:
        raise DslParseError(f"unknown operator {name!r} at position {position}", position)
    return op


def from_extraction(raw: RawProgram) -> DslProgram:
    """Convert a tolerantly-extracted structure into a typed program.

    The structure must have contiguous step indices from 0, a known
    operator per step, and arguments that are numbers or ``#k`` strings
    referencing earlier steps. Anything else raises DslConversionError.
    Any declared answer on the structure is ignored: answer kind derives
    from the final operator alone.
    """
    if not raw.steps:
        raise DslConversionError("no steps in extracted program")
    ordered = sorted(raw.steps, key=lambda s: s.index)
    indices = [s.index for s in ordered]
    if indices != list(range(len(ordered))):
        raise DslConversionError(f"step indices {indices} are not contiguous from 0")
    steps = []
    for k, step in enumerate(ordered):
        if not step.operation:
            raise DslConversionError(f"step {k} has no operation")
        try:
            op = _lookup_op(step.operation.strip(), 0)
        except DslParseError:
            raise DslConversionError(f"step {k} has unknown operation {step.operation!r}")
        steps.append(
            DslStep(op, _convert_arg(step.arg1, k, "arg1"), _convert_arg(step.arg2, k, "arg2"))
        )
    return DslProgram(tuple(steps))


def _convert_arg(text: str | None, step_index: int, slot: str) -> DslArg:
    if text is None or not text.strip():
        raise DslConversionError(f"step {step_index} is missing {slot}")
    token = text.strip().strip("\"'").strip()
    if re.fullmatch(r"#\d+", token):
        target = int(token[1:])
        if not 0 <= target < step_index:
            raise DslConversionError(
                f"step {step_index} references #{target}, which is not an earlier step"
            )
        return StepRef(target)
    try:
        return Literal(float(token.replace(",", "").replace("$", "")))
    except ValueError:
        raise DslConversionError(f"step {step_index} {slot} is not numeric: {text!r}")


def execute(program: DslProgram) -> DslValue:
    """Evaluate every step in order and return the final step's value.

    Raises DslExecutionError on division by exactly zero, any non-finite
    or complex intermediate, or a reference to a truth-valued step.
    """
    values: list[DslValue] = []
    for k, step in enumerate(program.steps):
        a = _resolve(step.arg1, values, k)
        b = _resolve(step.arg2, values, k)
        values.append(_apply(step.op, a, b, k))
    return values[-1]


def _resolve(arg: DslArg, values: list[DslValue], step_index: int) -> float:
    if isinstance(arg, StepRef):
        value = values[arg.index]
        if isinstance(value, bool):
            raise DslExecutionError(
                f"step {step_index} references #{arg.index}, which is a truth value"
            )
        return value
    return arg.value


def _apply(op: DslOp, a: float, b: float, step_index: int) -> DslValue:
    if op is DslOp.GREATER:
        return bool(a > b)
    if op is DslOp.ADD:
        result = a + b
    elif op is DslOp.SUBTRACT:
        result = a - b
    elif op is DslOp.MULTIPLY:
        result = a * b
    elif op is DslOp.DIVIDE:
        if b == 0.0:
            raise DslExecutionError(f"step {step_index} divides by zero")
        result = a / b
    elif op is DslOp.EXPONENT:
        try:
            result = a**b
        except (OverflowError, ZeroDivisionError) as exc:
            raise DslExecutionError(f"step {step_index} exponent failed: {exc}")
        if isinstance(result, complex):
            raise DslExecutionError(f"step {step_index} exponent produced a complex value")
    elif op is DslOp.MAX:
        result = max(a, b)
    elif op is DslOp.MIN:
        result = min(a, b)
    else:  # pragma: no cover - enum is closed
        raise DslExecutionError(f"step {step_index} has unhandled operator {op}")
    if not math.isfinite(result):
        raise DslExecutionError(f"step {step_index} produced a non-finite value")
    return result


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _format_arg(arg: DslArg) -> str:
    if isinstance(arg, StepRef):
        return f"#{arg.index}"
    return _format_number(arg.value)


def to_canonical_string(program: DslProgram) -> str:
    """Render a program in the text form parse_program accepts.

    parse_program(to_canonical_string(p)) reproduces p exactly.
    """
    return ", ".join(
        f"{step.op.value}({_format_arg(step.arg1)}, {_format_arg(step.arg2)})"
        for step in program.steps
    )
