"""Loaders for the three financial QA dataset layouts.

Each loader maps one published JSON layout onto a unified QARecord:
passage text split into pre/post segments, a rectangular cell table, the
question turn(s), the gold answer (parsed to a scalar when possible),
the gold program text when the dataset carries one, and the metadata the
accuracy breakdowns need (supporting-fact location, question kind, gold
step count).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .dsl import DslProgram, parse_program
from .errors import DslParseError, IngestError
from .numerals import ScalarValue, parse_scalar


class FactsLocation(Enum):
    TABLE_ONLY = "table_only"
    TEXT_ONLY = "text_only"
    TABLE_TEXT = "table_text"
    UNKNOWN = "unknown"


class QuestionKind(Enum):
    NUMERICAL = "numerical"
    BOOLEAN = "boolean"


@dataclass(frozen=True)
class QARecord:
    """One question instance in a dataset-independent shape.

    ``questions`` holds a single question for FinQA/TATQA and all
    conversation turns (last = target) for ConvFinQA. ``gold_answer`` is
    a parsed ScalarValue when the dataset's answer is scalar-like, else
    the raw answer string. ``gold_program`` is set only when the
    dataset's program text parses under the step grammar;
    ``gold_program_text`` keeps the raw text either way so step counting
    still works for programs using constructs outside the grammar.
    """

    id: str
    dataset: str
    pre_text: tuple[str, ...]
    post_text: tuple[str, ...]
    table: tuple[tuple[str, ...], ...]
    questions: tuple[str, ...]
    gold_answer: ScalarValue | str
    gold_program: DslProgram | None
    gold_program_text: str | None
    facts_location: FactsLocation
    question_kind: QuestionKind

    @property
    def question(self) -> str:
        """The target question (last turn for conversations)."""
        return self.questions[-1]


def _clean_cell(cell: object) -> str:
    text = str(cell).replace("\n", " ").strip()
    return text if text else "-"


def serialize_table(table) -> str:
    """Render a cell grid in the textual table format: columns joined by
    " | ", rows by newline, blank cells as "-". Short rows are
    right-padded so the output is rectangular."""
    rows = [list(row) for row in table]
    if not rows:
        return ""
    width = max(len(row) for row in rows)
    lines = []
    for row in rows:
        padded = row + [""] * (width - len(row))
        lines.append(" | ".join(_clean_cell(cell) for cell in padded))
    return "\n".join(lines)


def _normalized_table(table, entry_label: str) -> tuple[tuple[str, ...], ...]:
    if not isinstance(table, list) or any(not isinstance(row, list) for row in table):
        raise IngestError(f"{entry_label}: table is not a list of rows")
    if not table:
        return ()
    width = max(len(row) for row in table)
    return tuple(
        tuple(_clean_cell(cell) for cell in row + [""] * (width - len(row)))
        for row in table
    )


def _read_json(path) -> object:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path} is not valid JSON: {exc}")


def _entries(path) -> list:
    data = _read_json(path)
    if not isinstance(data, list):
        raise IngestError(f"{path}: expected a JSON array of entries")
    return data


def _text_segment(value, entry_label: str, field: str) -> tuple[str, ...]:
    if isinstance(value, str):
        return (value,) if value.strip() else ()
    if isinstance(value, list):
        return tuple(str(item) for item in value if str(item).strip())
    raise IngestError(f"{entry_label}: {field} is neither string nor list")


def _gold_answer(raw, entry_label: str) -> ScalarValue | str:
    if raw is None:
        raise IngestError(f"{entry_label}: no gold answer")
    parsed = parse_scalar(raw)
    return parsed if parsed is not None else str(raw)


def _question_kind(gold: ScalarValue | str) -> QuestionKind:
    if isinstance(gold, ScalarValue) and gold.is_boolean:
        return QuestionKind.BOOLEAN
    return QuestionKind.NUMERICAL


def _parse_gold_program(text: str | None) -> DslProgram | None:
    if not text or not isinstance(text, str):
        return None
    try:
        return parse_program(text)
    except DslParseError:
        # Upstream gold programs may use table operators or named
        # constants outside the step grammar; keep the text, skip typing.
        return None


def _facts_from_keys(keys) -> FactsLocation:
    kinds = set()
    for key in keys:
        if not isinstance(key, str):
            return FactsLocation.UNKNOWN
        if key.startswith("table"):
            kinds.add("table")
        elif key.startswith("text"):
            kinds.add("text")
        else:
            return FactsLocation.UNKNOWN
    if kinds == {"table"}:
        return FactsLocation.TABLE_ONLY
    if kinds == {"text"}:
        return FactsLocation.TEXT_ONLY
    if kinds == {"table", "text"}:
        return FactsLocation.TABLE_TEXT
    return FactsLocation.UNKNOWN


def _facts_location(qa: dict) -> FactsLocation:
    gold_inds = qa.get("gold_inds")
    if isinstance(gold_inds, dict) and gold_inds:
        return _facts_from_keys(gold_inds.keys())
    if isinstance(gold_inds, list) and gold_inds:
        return _facts_from_keys(gold_inds)
    table_rows = qa.get("ann_table_rows") or []
    text_rows = qa.get("ann_text_rows") or []
    if table_rows and text_rows:
        return FactsLocation.TABLE_TEXT
    if table_rows:
        return FactsLocation.TABLE_ONLY
    if text_rows:
        return FactsLocation.TEXT_ONLY
    return FactsLocation.UNKNOWN


def _check_unique_ids(records: list[QARecord], path) -> list[QARecord]:
    seen = set()
    for record in records:
        if record.id in seen:
            raise IngestError(f"{path}: duplicate record id {record.id!r}")
        seen.add(record.id)
    return records


def load_finqa(path) -> list[QARecord]:
    """Load a FinQA-layout JSON array into QARecords."""
    records = []
    for i, entry in enumerate(_entries(path)):
        label = f"entry {i}"
        if not isinstance(entry, dict):
            raise IngestError(f"{path}: {label} is not an object")
        try:
            rid = entry["id"]
            qa = entry["qa"]
            question = qa["question"]
        except (KeyError, TypeError) as exc:
            raise IngestError(f"{path}: {label} missing field {exc}")
        for field in ("pre_text", "post_text", "table"):
            if field not in entry:
                raise IngestError(f"{path}: {label} missing field '{field}'")
        gold = _gold_answer(qa.get("answer", qa.get("exe_ans")), f"{path}: {label}")
        program_text = qa.get("program")
        records.append(
            QARecord(
                id=str(rid),
                dataset="finqa",
                pre_text=_text_segment(entry["pre_text"], label, "pre_text"),
                post_text=_text_segment(entry["post_text"], label, "post_text"),
                table=_normalized_table(entry["table"], f"{path}: {label}"),
                questions=(str(question),),
                gold_answer=gold,
                gold_program=_parse_gold_program(program_text),
                gold_program_text=program_text or None,
                facts_location=_facts_location(qa),
                question_kind=_question_kind(gold),
            )
        )
    return _check_unique_ids(records, path)


def load_convfinqa(path) -> list[QARecord]:
    """Load a ConvFinQA-layout JSON array; questions carry every
    conversation turn in order, and gold targets the final turn."""
    records = []
    for i, entry in enumerate(_entries(path)):
        label = f"entry {i}"
        if not isinstance(entry, dict):
            raise IngestError(f"{path}: {label} is not an object")
        annotation = entry.get("annotation")
        if not isinstance(annotation, dict):
            raise IngestError(f"{path}: {label} missing 'annotation'")
        turns = annotation.get("dialogue_break")
        if not isinstance(turns, list) or not turns:
            raise IngestError(f"{path}: {label} has no dialogue turns")
        qa = entry.get("qa") or entry.get("qa_0") or {}
        answer_raw = None
        for candidates in (
            annotation.get("exe_ans_list"),
            annotation.get("answer_list"),
        ):
            if isinstance(candidates, list) and candidates:
                answer_raw = candidates[-1]
                break
        if answer_raw is None:
            answer_raw = qa.get("answer", qa.get("exe_ans"))
        gold = _gold_answer(answer_raw, f"{path}: {label}")
        program_text = None
        turn_programs = annotation.get("turn_program")
        if isinstance(turn_programs, list) and turn_programs:
            program_text = turn_programs[-1]
        else:
            program_text = annotation.get("original_program") or qa.get("program")
        records.append(
            QARecord(
                id=str(entry.get("id", f"conv-{i}")),
                dataset="convfinqa",
                pre_text=_text_segment(entry.get("pre_text", []), label, "pre_text"),
                post_text=_text_segment(entry.get("post_text", []), label, "post_text"),
                table=_normalized_table(entry.get("table", []), f"{path}: {label}"),
                questions=tuple(str(turn) for turn in turns),
                gold_answer=gold,
                gold_program=_parse_gold_program(program_text),
                gold_program_text=program_text or None,
                facts_location=_facts_location(qa),
                question_kind=_question_kind(gold),
            )
        )
    return _check_unique_ids(records, path)


_TATQA_FACTS = {
    "table": FactsLocation.TABLE_ONLY,
    "text": FactsLocation.TEXT_ONLY,
    "table-text": FactsLocation.TABLE_TEXT,
}

_TATQA_SCALES = {"percent", "thousand", "million", "billion"}


def load_tatqa(path, arithmetic_only: bool = True) -> list[QARecord]:
    """Load a TATQA-layout JSON array; one QARecord per question.

    With arithmetic_only set (the default), questions whose declared
    answer type is not "arithmetic" are dropped.
    """
    records = []
    for i, entry in enumerate(_entries(path)):
        label = f"entry {i}"
        if not isinstance(entry, dict):
            raise IngestError(f"{path}: {label} is not an object")
        table = entry.get("table", {})
        if not isinstance(table, dict) or "table" not in table:
            raise IngestError(f"{path}: {label} missing table grid")
        paragraphs = entry.get("paragraphs", [])
        if not isinstance(paragraphs, list):
            raise IngestError(f"{path}: {label} paragraphs is not a list")
        ordered = sorted(paragraphs, key=lambda p: p.get("order", 0))
        pre_text = tuple(
            str(p.get("text", "")) for p in ordered if str(p.get("text", "")).strip()
        )
        questions = entry.get("questions")
        if not isinstance(questions, list):
            raise IngestError(f"{path}: {label} missing questions")
        for q in questions:
            if arithmetic_only and q.get("answer_type") != "arithmetic":
                continue
            answer = q.get("answer")
            if isinstance(answer, list):
                answer = answer[0] if len(answer) == 1 else " ".join(
                    str(item) for item in answer
                )
            gold = _gold_answer(answer, f"{path}: {label}")
            scale = (q.get("scale") or "").strip().lower()
            if (
                isinstance(gold, ScalarValue)
                and gold.unit is None
                and scale in _TATQA_SCALES
            ):
                gold = ScalarValue(gold.value, scale)
            derivation = q.get("derivation") or None
            records.append(
                QARecord(
                    id=str(q.get("uid", f"tatqa-{i}-{len(records)}")),
                    dataset="tatqa",
                    pre_text=pre_text,
                    post_text=(),
                    table=_normalized_table(table["table"], f"{path}: {label}"),
                    questions=(str(q.get("question", "")),),
                    gold_answer=gold,
                    gold_program=None,
                    gold_program_text=derivation,
                    facts_location=_TATQA_FACTS.get(
                        q.get("answer_from"), FactsLocation.UNKNOWN
                    ),
                    question_kind=_question_kind(gold),
                )
            )
    return _check_unique_ids(records, path)


_CALL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*\s*\(")


def count_gold_steps(record: QARecord) -> int | None:
    """Number of gold program steps, or None when the record has no
    usable program text (excluded from the step-bucket breakdown)."""
    if record.gold_program is not None:
        return len(record.gold_program.steps)
    text = record.gold_program_text
    if not text:
        return None
    count = len(_CALL_RE.findall(text))
    return count if count > 0 else None
