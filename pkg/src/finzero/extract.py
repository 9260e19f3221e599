"""Pull structured payloads out of free-form LLM completions.

Three extractors, one per completion shape: Python source, the JSON-ish
program structure, and a final scalar answer. All three are total —
arbitrary input text maps to either a payload or a categorized failure,
never an exception. Model output is messy (unbalanced braces, bare keys,
prose around the structure), so the program extractor is deliberately
tolerant rather than a JSON parser.
"""
from __future__ import annotations

import re
import textwrap
from dataclasses import dataclass

from .dsl import RawProgram, RawStep
from .numerals import find_scalar

PYTHON_SOURCE = "python_source"
DSL_STRUCTURE = "dsl_structure"
SCALAR_ANSWER = "scalar_answer"
BOOLEAN_ANSWER = "boolean_answer"

NO_CODE_FOUND = "no_code_found"
NO_PROGRAM_FOUND = "no_program_found"
UNPARSEABLE_ANSWER = "unparseable_answer"


@dataclass(frozen=True)
class ExtractionOutcome:
    """Either a payload of the stated kind, or a failure category."""

    kind: str
    payload: object | None = None
    failure: str | None = None
    diagnostic: str | None = None

    def __post_init__(self):
        if (self.payload is None) == (self.failure is None):
            raise ValueError("exactly one of payload/failure must be set")

    @property
    def ok(self) -> bool:
        return self.failure is None


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_ASSIGNMENT_RE = re.compile(r"^[ \t]*[A-Za-z_][A-Za-z0-9_]*[ \t]*=[^=]", re.MULTILINE)


def _strip_marker(source: str) -> str:
    lines = source.lstrip("\n").split("\n")
    if lines and lines[0].strip().lower() in ("#python", "python"):
        lines = lines[1:]
    return textwrap.dedent("\n".join(lines)).strip("\n").rstrip()


def extract_python(text: str) -> ExtractionOutcome:
    """Find the executable region of a code completion.

    Preference order: the longest fenced block; everything after a
    literal "#Python" marker line; everything from the first
    assignment-bearing line onward. Comment lines are kept.
    """
    fences = _FENCE_RE.findall(text)
    if fences:
        source = _strip_marker(max(fences, key=len))
        if source.strip():
            return ExtractionOutcome(PYTHON_SOURCE, payload=source)
    marker = re.search(r"^[ \t]*#Python[ \t]*$", text, re.MULTILINE | re.IGNORECASE)
    if marker:
        source = _strip_marker(text[marker.end():])
        if source.strip():
            return ExtractionOutcome(PYTHON_SOURCE, payload=source)
    assignment = _ASSIGNMENT_RE.search(text)
    if assignment:
        source = _strip_marker(text[assignment.start():])
        if source.strip():
            return ExtractionOutcome(PYTHON_SOURCE, payload=source)
    return ExtractionOutcome(
        PYTHON_SOURCE, failure=NO_CODE_FOUND, diagnostic="no fence, marker, or assignment"
    )


_PROGRAM_KEY_RE = re.compile(r"[\"']?Program[\"']?\s*:")
_STEP_KEY_RE = re.compile(r"[\"']?#(\d+)[\"']?\s*:\s*\{")
_ANSWER_RE = re.compile(r"[\"']?Answer[\"']?\s*:\s*(\"([^\"]*)\"|'([^']*)'|[^,}\s]+)")


def _field(body: str, name: str) -> str | None:
    match = re.search(
        rf"[\"']?{name}[\"']?\s*:\s*(\"([^\"]*)\"|'([^']*)'|([^,}}\s]+))", body
    )
    if match is None:
        return None
    return match.group(2) or match.group(3) or match.group(4)


def _clean_arg(value: str | None) -> str | None:
    if value is None:
        return None
    return value.replace(",", "").replace("$", "").replace("%", "").strip()


def _program_region(text: str) -> str | None:
    """The brace-delimited region around the last "Program" key, brace-
    matched forward and tolerating a missing closer (truncated output)."""
    matches = list(_PROGRAM_KEY_RE.finditer(text))
    if not matches:
        return None
    key_start = matches[-1].start()
    region_start = text.rfind("{", 0, key_start)
    if region_start < 0:
        return None
    depth = 0
    for i in range(region_start, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[region_start : i + 1]
    return text[region_start:]


def extract_dsl(text: str) -> ExtractionOutcome:
    """Pull the program structure out of a program-extraction completion.

    Tolerates bare keys, mixed quoting, thousands commas / "$" / "%"
    inside argument strings (stripped), and unbalanced braces. When the
    text restates the schema before answering, the last "Program" region
    wins. The declared "Answer" field rides along as metadata.
    """
    region = _program_region(text)
    if region is None:
        return ExtractionOutcome(
            DSL_STRUCTURE, failure=NO_PROGRAM_FOUND, diagnostic="no Program region"
        )
    steps = []
    for match in _STEP_KEY_RE.finditer(region):
        body_start = match.end()
        body_end = region.find("}", body_start)
        body = region[body_start : body_end if body_end >= 0 else len(region)]
        steps.append(
            RawStep(
                index=int(match.group(1)),
                operation=_field(body, "operation") or _field(body, "op"),
                arg1=_clean_arg(_field(body, "arg1")),
                arg2=_clean_arg(_field(body, "arg2")),
            )
        )
    if not steps:
        return ExtractionOutcome(
            DSL_STRUCTURE,
            failure=NO_PROGRAM_FOUND,
            diagnostic="Program region has no #k steps",
        )
    answer_match = _ANSWER_RE.search(region)
    declared = None
    if answer_match:
        declared = (
            answer_match.group(2) or answer_match.group(3) or answer_match.group(1)
        )
    steps.sort(key=lambda s: s.index)
    return ExtractionOutcome(
        DSL_STRUCTURE, payload=RawProgram(tuple(steps), declared_answer=declared)
    )


def extract_final_answer(text: str) -> ExtractionOutcome:
    """Parse the first scalar of an answer-extraction completion.

    Booleans (yes/no/true/false) and numbers compete on position;
    magnitude words scale the value; "%" and magnitude words leave a
    unit hint on the payload.
    """
    scalar = find_scalar(text)
    if scalar is None:
        return ExtractionOutcome(
            SCALAR_ANSWER,
            failure=UNPARSEABLE_ANSWER,
            diagnostic=f"no scalar token in {text[:80]!r}",
        )
    kind = BOOLEAN_ANSWER if scalar.is_boolean else SCALAR_ANSWER
    return ExtractionOutcome(kind, payload=scalar)
