"""Answer matching under relative tolerance with unit normalization.

A predicted value matches gold when |pred − gold| ≤ rel_tol · max(|pred|,
|gold|) for some scale factor applied to the prediction. The factor
sweep covers the unit mismatches financial text produces (percent vs
fraction, thousands/millions vs units); which factor matched is recorded
per outcome so unit recoveries stay auditable. Program modes are scored
exactly (rel_tol 0.001); the free-text modes use a relaxed mode that
retries at rel_tol 0.01 and with 2-decimal rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import EvaluationError
from .numerals import ScalarValue, parse_scalar
from .records import FactsLocation, QARecord, QuestionKind, count_gold_steps

DEFAULT_REL_TOL = 0.001
RELAXED_REL_TOL = 0.01


@dataclass(frozen=True)
class NormalizationScale:
    factor: float
    label: str


# Ordered by |log10(factor)| so the least-surprising factor matches first.
SCALES = (
    NormalizationScale(1.0, "identity"),
    NormalizationScale(100.0, "percent_up"),
    NormalizationScale(0.01, "percent_down"),
    NormalizationScale(1000.0, "thousand_up"),
    NormalizationScale(0.001, "thousand_down"),
    NormalizationScale(1e6, "million_up"),
    NormalizationScale(1e-6, "million_down"),
)


class Verdict(Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    FAILED = "failed"


class EvalMode(Enum):
    EXACT = "exact"
    RELAXED = "relaxed"


FAILURE_EXTRACTION = "extraction"
FAILURE_PARSE = "parse"
FAILURE_EXECUTION = "execution"
FAILURE_ANSWER_MISMATCH = "answer_mismatch"


@dataclass(frozen=True)
class PipelineFailure:
    """An upstream stage failed before a value existed to compare."""

    category: str  # extraction | parse | execution
    detail: str = ""


@dataclass(frozen=True)
class EvalOutcome:
    verdict: Verdict
    mode: EvalMode
    matched_scale: NormalizationScale | None = None
    failure_category: str | None = None

    def __post_init__(self):
        if (self.matched_scale is not None) and self.verdict is not Verdict.CORRECT:
            raise ValueError("matched_scale only accompanies a correct verdict")


def tolerant_equal(pred: float, gold: float, rel_tol: float = DEFAULT_REL_TOL) -> bool:
    """|pred − gold| ≤ rel_tol · max(|pred|, |gold|), symmetric by
    construction; non-finite inputs are an error."""
    if not (math.isfinite(pred) and math.isfinite(gold)):
        raise EvaluationError("tolerant_equal needs finite inputs")
    if rel_tol <= 0:
        raise EvaluationError("rel_tol must be positive")
    return math.isclose(pred, gold, rel_tol=rel_tol, abs_tol=0.0)


def _unwrap(value) -> float | bool | str | None:
    if isinstance(value, ScalarValue):
        return value.value
    return value


def _gold_value(gold) -> float | bool | str:
    value = _unwrap(gold)
    if isinstance(value, str):
        parsed = parse_scalar(value)
        if parsed is not None:
            return parsed.value
    return value


def _numeric_match(
    pred: float, gold: float, rel_tol: float
) -> NormalizationScale | None:
    for scale in SCALES:
        if tolerant_equal(pred * scale.factor, gold, rel_tol):
            return scale
    return None


def match(pred, gold, mode: EvalMode = EvalMode.EXACT, rel_tol: float = DEFAULT_REL_TOL) -> EvalOutcome:
    """Score one prediction against one gold answer.

    ``pred`` is a number, boolean, ScalarValue, or PipelineFailure;
    ``gold`` is whatever the record carries (ScalarValue or raw string).
    Booleans must agree exactly; numbers go through the scale sweep; a
    boolean/number type clash is incorrect with category answer_mismatch.
    """
    if isinstance(pred, PipelineFailure):
        return EvalOutcome(Verdict.FAILED, mode, failure_category=pred.category)
    pred_value = _unwrap(pred)
    gold_value = _gold_value(gold)
    if isinstance(pred_value, bool) and isinstance(gold_value, bool):
        if pred_value == gold_value:
            return EvalOutcome(Verdict.CORRECT, mode)
        return EvalOutcome(Verdict.INCORRECT, mode)
    if isinstance(pred_value, bool) != isinstance(gold_value, bool) or isinstance(
        gold_value, str
    ):
        # Type clash (numeric vs boolean) or textual gold nothing scalar
        # can match.
        return EvalOutcome(
            Verdict.INCORRECT, mode, failure_category=FAILURE_ANSWER_MISMATCH
        )
    pred_num = float(pred_value)
    gold_num = float(gold_value)
    scale = _numeric_match(pred_num, gold_num, rel_tol)
    if scale is None and mode is EvalMode.RELAXED:
        scale = _numeric_match(pred_num, gold_num, RELAXED_REL_TOL)
        if scale is None and round(pred_num, 2) == round(gold_num, 2):
            scale = SCALES[0]
    if scale is not None:
        return EvalOutcome(Verdict.CORRECT, mode, matched_scale=scale)
    return EvalOutcome(Verdict.INCORRECT, mode)


@dataclass
class BreakdownRow:
    total: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0


@dataclass
class RunReport:
    """Accuracy rollup: overall, by facts location, by gold step bucket,
    by question kind, plus a failure histogram."""

    overall: BreakdownRow = field(default_factory=BreakdownRow)
    by_facts: dict[str, BreakdownRow] = field(default_factory=dict)
    by_steps: dict[str, BreakdownRow] = field(default_factory=dict)
    by_kind: dict[str, BreakdownRow] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)
    modes: list[str] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)


_FACTS_ROWS = ("table_only", "text_only", "table_text")
_STEP_ROWS = ("1", "2", ">2")
_KIND_ROWS = ("numerical", "boolean")


def _step_bucket(steps: int) -> str:
    return ">2" if steps > 2 else str(steps)


def score_run(outcomes) -> RunReport:
    """Aggregate (QARecord-or-metadata, EvalOutcome) pairs into a report.

    The first element of each pair is either a QARecord or a mapping
    with the fields the breakdowns need (facts_location, question_kind,
    gold_steps) — the trace file stores the mapping form.
    """
    report = RunReport()
    report.by_facts = {row: BreakdownRow() for row in _FACTS_ROWS}
    report.by_steps = {row: BreakdownRow() for row in _STEP_ROWS}
    report.by_kind = {row: BreakdownRow() for row in _KIND_ROWS}
    modes = []
    for meta, outcome in outcomes:
        facts, kind, steps = _meta_fields(meta)
        hit = outcome.verdict is Verdict.CORRECT
        report.overall.total += 1
        report.overall.correct += hit
        if facts in report.by_facts:
            report.by_facts[facts].total += 1
            report.by_facts[facts].correct += hit
        if steps is not None:
            bucket = _step_bucket(steps)
            report.by_steps[bucket].total += 1
            report.by_steps[bucket].correct += hit
        if kind in report.by_kind:
            report.by_kind[kind].total += 1
            report.by_kind[kind].correct += hit
        if outcome.failure_category:
            report.failures[outcome.failure_category] = (
                report.failures.get(outcome.failure_category, 0) + 1
            )
        if outcome.mode.value not in modes:
            modes.append(outcome.mode.value)
    report.modes = modes
    if report.overall.total == 0:
        report.notices.append("no records scored (0/0)")
    if all(row.total == 0 for row in report.by_steps.values()) and report.overall.total:
        report.notices.append("no records carry a gold program; step buckets empty")
    return report


def _meta_fields(meta) -> tuple[str, str, int | None]:
    if isinstance(meta, QARecord):
        return (
            meta.facts_location.value,
            meta.question_kind.value,
            count_gold_steps(meta),
        )
    facts = meta.get("facts_location", FactsLocation.UNKNOWN.value)
    kind = meta.get("question_kind", QuestionKind.NUMERICAL.value)
    return facts, kind, meta.get("gold_steps")


def report_as_json(report: RunReport) -> dict:
    def row(r: BreakdownRow) -> dict:
        return {"total": r.total, "correct": r.correct, "accuracy": round(r.accuracy, 2)}

    return {
        "overall": row(report.overall),
        "facts_location": {k: row(v) for k, v in report.by_facts.items()},
        "program_steps": {k: row(v) for k, v in report.by_steps.items()},
        "question_kind": {k: row(v) for k, v in report.by_kind.items()},
        "failures": dict(sorted(report.failures.items())),
        "modes": report.modes,
        "notices": report.notices,
    }


def render_report(report: RunReport) -> str:
    """Aligned plain-text rendering of the accuracy tables."""
    lines = []
    width = 30

    def emit(label: str, r: BreakdownRow):
        lines.append(f"  {label:<{width}} {r.accuracy:>8.2f}  ({r.correct}/{r.total})")

    lines.append(
        f"{'overall accuracy':<{width + 2}} {report.overall.accuracy:>8.2f}"
        f"  ({report.overall.correct}/{report.overall.total})"
    )
    lines.append(f"evaluation mode: {', '.join(report.modes) or 'n/a'}")
    lines.append("Performance on table and text")
    emit("table-only questions", report.by_facts["table_only"])
    emit("text-only questions", report.by_facts["text_only"])
    emit("table-text questions", report.by_facts["table_text"])
    lines.append("Performance regarding program steps")
    if all(row.total == 0 for row in report.by_steps.values()):
        lines.append("  (no gold programs available)")
    else:
        emit("1 step programs", report.by_steps["1"])
        emit("2 step programs", report.by_steps["2"])
        emit(">2 step programs", report.by_steps[">2"])
    lines.append("Performance regarding question types")
    emit("numerical questions", report.by_kind["numerical"])
    emit("boolean questions", report.by_kind["boolean"])
    if report.failures:
        lines.append("Failures")
        for category, count in sorted(report.failures.items()):
            lines.append(f"  {category:<{width}} {count:>8}")
    for notice in report.notices:
        lines.append(f"note: {notice}")
    return "\n".join(lines)
