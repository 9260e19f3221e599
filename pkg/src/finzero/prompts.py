"""Prompt rendering for the four zero-shot modes across the three datasets.

Templates live as UTF-8 text assets under ``templates/`` with slot
markers ``{{passage}}``, ``{{question}}``, ``{{questions}}``,
``{{last_question}}``, and ``{{stage1_answer}}``. Rendering substitutes
slots and never touches any other byte, so the assets stay auditable.

TATQA reuses the FinQA templates unchanged. ConvFinQA has its own set,
including two variants for the code mode: a single prompt that marks the
last turn explicitly, and a dual prompt whose second stage asks for code
given the stage-1 reasoning.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .errors import ConfigError, UsageError
from .records import QARecord, serialize_table


class Mode(Enum):
    ZS_FINPYT = "finpyt"
    ZS_FINDSL = "findsl"
    ZS_STD = "std"
    ZS_COT = "cot"


class ConvVariant(Enum):
    NONE = "none"
    SINGLE_PROMPT_LAST_QUESTION = "single"
    DUAL_PROMPT = "dual"


class Expects(Enum):
    FREE_TEXT = "free_text"
    PYTHON_CODE = "python_code"
    DSL_JSON = "dsl_json"
    FINAL_ANSWER = "final_answer"


@dataclass(frozen=True)
class PromptMode:
    """A mode selection: one of the four techniques, plus the ConvFinQA
    variant for the code mode (meaningless elsewhere)."""

    mode: Mode
    conv_variant: ConvVariant = ConvVariant.NONE


@dataclass(frozen=True)
class PromptStage:
    stage_name: str
    template_text: str
    expects: Expects


@dataclass(frozen=True)
class PromptBundle:
    """The rendered stage-1 prompt plus the plan for the whole exchange."""

    stages: tuple[PromptStage, ...]
    total_stages: int


# (family, asset name) -> file under templates/. The FinQA family serves
# both FinQA and TATQA.
_FAMILIES = {"finqa": "finqa", "tatqa": "finqa", "convfinqa": "convfinqa"}


def _load_template(family: str, name: str) -> str:
    ref = resources.files(__package__).joinpath("templates", family, f"{name}.txt")
    return ref.read_text(encoding="utf-8")


def _fill(template: str, slots: dict[str, str]) -> str:
    text = template
    for marker, value in slots.items():
        text = text.replace("{{" + marker + "}}", value)
    return text


def passage_text(record: QARecord) -> str:
    """Assemble the passage in document order: pre-text, table, post-text."""
    parts = []
    if record.pre_text:
        parts.append(" ".join(record.pre_text))
    if record.table:
        parts.append(serialize_table(record.table))
    if record.post_text:
        parts.append(" ".join(record.post_text))
    return "\n".join(parts)


def format_turns(questions: tuple[str, ...] | list[str]) -> str:
    """Join conversation turns as "Q1: …" lines."""
    return "\n".join(f"Q{i + 1}: {q}" for i, q in enumerate(questions))


def _validate(record: QARecord, mode: PromptMode) -> str:
    family = _FAMILIES.get(record.dataset)
    if family is None:
        raise ConfigError(f"unknown dataset {record.dataset!r}")
    if record.dataset != "convfinqa" and mode.conv_variant is not ConvVariant.NONE:
        raise ConfigError(
            f"conv_variant={mode.conv_variant.value} is only valid for convfinqa"
        )
    if (
        record.dataset == "convfinqa"
        and mode.mode is Mode.ZS_FINPYT
        and mode.conv_variant is ConvVariant.NONE
    ):
        raise ConfigError("finpyt on convfinqa needs conv_variant single or dual")
    return family


def _slots(record: QARecord) -> dict[str, str]:
    if record.dataset == "convfinqa":
        return {
            "passage": passage_text(record),
            "questions": format_turns(record.questions[:-1]),
            "last_question": record.questions[-1],
        }
    return {"passage": passage_text(record), "question": record.questions[-1]}


def _stage1_spec(record: QARecord, mode: PromptMode) -> tuple[str, str, Expects]:
    """(asset name, stage name, expectation) for the opening prompt."""
    conv = record.dataset == "convfinqa"
    if mode.mode is Mode.ZS_FINPYT:
        if conv and mode.conv_variant is ConvVariant.DUAL_PROMPT:
            return "finpyt_dual_reasoning", "reasoning", Expects.FREE_TEXT
        if conv:
            return "finpyt_single", "python", Expects.PYTHON_CODE
        return "finpyt", "python", Expects.PYTHON_CODE
    if mode.mode is Mode.ZS_FINDSL:
        return "findsl_reasoning", "reasoning", Expects.FREE_TEXT
    if mode.mode is Mode.ZS_STD:
        return "std_answering", "answering", Expects.FREE_TEXT
    return "cot_reasoning", "reasoning", Expects.FREE_TEXT


def _stage2_spec(record: QARecord, mode: PromptMode) -> tuple[str, str, Expects] | None:
    """Same for the follow-up prompt; None for single-stage modes."""
    conv = record.dataset == "convfinqa"
    if mode.mode is Mode.ZS_FINPYT:
        if conv and mode.conv_variant is ConvVariant.DUAL_PROMPT:
            return "finpyt_dual_program", "python", Expects.PYTHON_CODE
        return None
    if mode.mode is Mode.ZS_FINDSL:
        return "findsl_extraction", "program_extraction", Expects.DSL_JSON
    # The answer-extraction prompt is shared by the standard and
    # chain-of-thought modes.
    return "answer_extraction", "answer_extraction", Expects.FINAL_ANSWER


def stage_count(record: QARecord, mode: PromptMode) -> int:
    _validate(record, mode)
    return 1 if _stage2_spec(record, mode) is None else 2


def render(record: QARecord, mode: PromptMode) -> PromptBundle:
    """Render the stage-1 prompt for a record under a mode.

    The bundle carries the filled stage-1 text and the total number of
    stages the mode calls for; follow-up prompts come from
    render_followup once the stage-1 completion exists.
    """
    family = _validate(record, mode)
    if record.dataset == "convfinqa":
        slots = _slots(record)
        # The single-prompt variant separates prior turns from the final
        # one; every other conversational prompt lists all turns.
        if not (
            mode.mode is Mode.ZS_FINPYT
            and mode.conv_variant is ConvVariant.SINGLE_PROMPT_LAST_QUESTION
        ):
            slots["questions"] = format_turns(record.questions)
    else:
        slots = _slots(record)
    asset, name, expects = _stage1_spec(record, mode)
    text = _fill(_load_template(family, asset), slots)
    stage = PromptStage(name, text, expects)
    return PromptBundle((stage,), stage_count(record, mode))


def render_followup(record: QARecord, mode: PromptMode, stage1_output: str) -> str:
    """Render the follow-up prompt with the stage-1 completion embedded."""
    family = _validate(record, mode)
    spec = _stage2_spec(record, mode)
    if spec is None:
        raise UsageError(f"mode {mode.mode.value} has no follow-up stage")
    asset, _, _ = spec
    if record.dataset == "convfinqa":
        slots = {
            "questions": format_turns(record.questions),
            "stage1_answer": stage1_output,
        }
    else:
        slots = {"question": record.questions[-1], "stage1_answer": stage1_output}
    return _fill(_load_template(family, asset), slots)


def followup_expects(mode: PromptMode) -> Expects:
    """What the follow-up completion should contain, by mode."""
    if mode.mode is Mode.ZS_FINPYT:
        return Expects.PYTHON_CODE
    if mode.mode is Mode.ZS_FINDSL:
        return Expects.DSL_JSON
    return Expects.FINAL_ANSWER


# Catalog rows: (mode value, conv variant or None, dataset family, stage
# number, asset name). The chain-of-thought follow-up is the standard
# mode's answer-extraction template, so it appears once per family.
_CATALOG_ROWS = [
    ("finpyt", None, "finqa", 1, "finpyt"),
    ("findsl", None, "finqa", 1, "findsl_reasoning"),
    ("findsl", None, "finqa", 2, "findsl_extraction"),
    ("std", None, "finqa", 1, "std_answering"),
    ("std", None, "finqa", 2, "answer_extraction"),
    ("cot", None, "finqa", 1, "cot_reasoning"),
    ("finpyt", "single", "convfinqa", 1, "finpyt_single"),
    ("finpyt", "dual", "convfinqa", 1, "finpyt_dual_reasoning"),
    ("finpyt", "dual", "convfinqa", 2, "finpyt_dual_program"),
    ("findsl", None, "convfinqa", 1, "findsl_reasoning"),
    ("findsl", None, "convfinqa", 2, "findsl_extraction"),
    ("std", None, "convfinqa", 1, "std_answering"),
    ("std", None, "convfinqa", 2, "answer_extraction"),
    ("cot", None, "convfinqa", 1, "cot_reasoning"),
]


def template_catalog() -> list[dict[str, object]]:
    """Every stored template, verbatim, with slot markers intact.

    The "finqa" rows serve both FinQA and TATQA (the ``datasets`` field
    lists the sharing); the answer-extraction rows serve both the
    standard and chain-of-thought modes.
    """
    catalog = []
    for mode, variant, family, stage, asset in _CATALOG_ROWS:
        catalog.append(
            {
                "mode": mode,
                "conv_variant": variant,
                "dataset": family,
                "datasets": ["finqa", "tatqa"] if family == "finqa" else ["convfinqa"],
                "stage": stage,
                "name": asset,
                "template_text": _load_template(family, asset),
            }
        )
    return catalog
