"""End-to-end orchestration: render → complete → extract → execute →
evaluate, with JSONL traces and a manifest per run.

Every record yields exactly one trace line carrying the prompts, raw
completions, extraction/execution outcomes, the eval verdict, and the
metadata the report breakdowns need — so reports can be recomputed from
traces alone. A replay-backed run is deterministic: with one worker the
trace file is byte-stable across invocations.
"""
from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import dsl
from .errors import ConfigError, DslConversionError, DslExecutionError
from .evaluate import (
    EvalMode,
    EvalOutcome,
    PipelineFailure,
    RunReport,
    Verdict,
    match,
    render_report,
    report_as_json,
    score_run,
)
from .extract import extract_dsl, extract_final_answer, extract_python
from .llm import (
    GenerationParams,
    LiveBackend,
    LlmGateway,
    ReplayBackend,
    ResponseCache,
)
from .numerals import ScalarValue
from .prompts import ConvVariant, Mode, PromptMode, render, render_followup
from .pyexec import CodeExecutor, ExecConfig, ExecRequest, ExecStatus
from .records import (
    QARecord,
    count_gold_steps,
    load_convfinqa,
    load_finqa,
    load_tatqa,
)

_LOADERS = {"finqa": load_finqa, "convfinqa": load_convfinqa, "tatqa": load_tatqa}


@dataclass
class RunConfig:
    dataset: Path
    kind: str
    mode: PromptMode
    out_dir: Path
    backend: str = "replay"  # live | replay | cache-only
    params: GenerationParams = field(default_factory=GenerationParams)
    replay_file: Path | None = None
    cache_dir: Path | None = None
    endpoint: str | None = None
    framing: str = "chat"
    workers: int = 4
    runner: Path | None = None
    limit: int | None = None


@dataclass
class RunResult:
    manifest_path: Path
    traces_path: Path
    report: RunReport
    report_json_path: Path
    report_text_path: Path


def load_records(config: RunConfig) -> list[QARecord]:
    loader = _LOADERS.get(config.kind)
    if loader is None:
        raise ConfigError(f"unknown dataset kind {config.kind!r}")
    records = loader(config.dataset)
    if config.limit is not None:
        records = records[: config.limit]
    return records


def build_gateway(config: RunConfig) -> LlmGateway:
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    if config.backend == "replay":
        if config.replay_file is None:
            raise ConfigError("replay backend needs --replay-file")
        backend = ReplayBackend(config.replay_file)
    elif config.backend == "live":
        if not config.endpoint:
            raise ConfigError("live backend needs an endpoint (config file)")
        backend = LiveBackend(config.endpoint, framing=config.framing)
    elif config.backend == "cache-only":
        if cache is None:
            raise ConfigError("cache-only backend needs --cache-dir")
        backend = None
    else:
        raise ConfigError(f"unknown backend {config.backend!r}")
    return LlmGateway(backend, cache=cache, max_in_flight=max(1, config.workers))


def eval_mode_for(mode: PromptMode) -> EvalMode:
    if mode.mode in (Mode.ZS_STD, Mode.ZS_COT):
        return EvalMode.RELAXED
    return EvalMode.EXACT


def _derive_prediction(mode: PromptMode, final_text: str, executor: CodeExecutor | None):
    """(prediction, extraction info, program/source/answer, execution info)."""
    if mode.mode is Mode.ZS_FINPYT:
        outcome = extract_python(final_text)
        if not outcome.ok:
            return PipelineFailure("extraction", outcome.failure), outcome, {}, None
        source = outcome.payload
        result = executor.run(ExecRequest(source))
        execution = {
            "status": result.status.value,
            "value": result.value,
            "detail": result.stderr_excerpt,
        }
        if result.status is ExecStatus.OK:
            return result.value, outcome, {"source": source}, execution
        return (
            PipelineFailure("execution", result.status.value),
            outcome,
            {"source": source},
            execution,
        )
    if mode.mode is Mode.ZS_FINDSL:
        outcome = extract_dsl(final_text)
        if not outcome.ok:
            return PipelineFailure("extraction", outcome.failure), outcome, {}, None
        try:
            program = dsl.from_extraction(outcome.payload)
        except DslConversionError as exc:
            return PipelineFailure("parse", str(exc)), outcome, {}, None
        canonical = dsl.to_canonical_string(program)
        try:
            value = dsl.execute(program)
        except DslExecutionError as exc:
            execution = {"status": "execution_error", "value": None, "detail": str(exc)}
            return (
                PipelineFailure("execution", str(exc)),
                outcome,
                {"program": canonical},
                execution,
            )
        execution = {"status": "ok", "value": value, "detail": ""}
        return value, outcome, {"program": canonical}, execution
    outcome = extract_final_answer(final_text)
    if not outcome.ok:
        return PipelineFailure("extraction", outcome.failure), outcome, {}, None
    scalar: ScalarValue = outcome.payload
    return scalar, outcome, {"answer": {"value": scalar.value, "unit": scalar.unit}}, None


def _gold_json(record: QARecord):
    if isinstance(record.gold_answer, ScalarValue):
        return {"value": record.gold_answer.value, "unit": record.gold_answer.unit}
    return {"text": record.gold_answer}


def process_record(
    record: QARecord,
    mode: PromptMode,
    gateway: LlmGateway,
    params: GenerationParams,
    executor: CodeExecutor | None,
) -> dict:
    """Run one record through every stage; returns its trace line."""
    bundle = render(record, mode)
    stage1 = gateway.complete(
        bundle.stages[0].template_text, params, record_id=record.id, stage="stage1"
    )
    stages = [
        {
            "name": bundle.stages[0].stage_name,
            "prompt": bundle.stages[0].template_text,
            "response": stage1.text,
            "backend": stage1.backend,
        }
    ]
    final_text = stage1.text
    if bundle.total_stages == 2:
        prompt2 = render_followup(record, mode, stage1.text)
        stage2 = gateway.complete(prompt2, params, record_id=record.id, stage="stage2")
        stages.append(
            {
                "name": "followup",
                "prompt": prompt2,
                "response": stage2.text,
                "backend": stage2.backend,
            }
        )
        final_text = stage2.text
    prediction, extraction, artifacts, execution = _derive_prediction(
        mode, final_text, executor
    )
    outcome = match(prediction, record.gold_answer, eval_mode_for(mode))
    if isinstance(prediction, PipelineFailure):
        predicted_value = None
    elif isinstance(prediction, ScalarValue):
        predicted_value = prediction.value
    else:
        predicted_value = prediction
    return {
        "record_id": record.id,
        "mode": mode.mode.value,
        "conv_variant": mode.conv_variant.value,
        "stages": stages,
        "extraction": {
            "kind": extraction.kind,
            "failure": extraction.failure,
            "diagnostic": extraction.diagnostic,
        },
        "program": artifacts.get("program"),
        "source": artifacts.get("source"),
        "answer": artifacts.get("answer"),
        "execution": execution,
        "prediction": predicted_value,
        "eval": {
            "verdict": outcome.verdict.value,
            "mode": outcome.mode.value,
            "matched_scale": outcome.matched_scale.label if outcome.matched_scale else None,
            "failure_category": outcome.failure_category,
        },
        "meta": {
            "facts_location": record.facts_location.value,
            "question_kind": record.question_kind.value,
            "gold_steps": count_gold_steps(record),
            "gold_answer": _gold_json(record),
            "gold_program": record.gold_program_text,
        },
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _run_id(config: RunConfig) -> str:
    basis = json.dumps(
        {
            "dataset": str(config.dataset),
            "kind": config.kind,
            "mode": config.mode.mode.value,
            "conv_variant": config.mode.conv_variant.value,
            "backend": config.backend,
            "model": config.params.model,
        },
        sort_keys=True,
    )
    return hashlib.sha256(basis.encode()).hexdigest()[:16]


def _manifest(config: RunConfig) -> dict:
    return {
        "run_id": _run_id(config),
        "dataset": str(config.dataset),
        "kind": config.kind,
        "mode": config.mode.mode.value,
        "conv_variant": config.mode.conv_variant.value,
        "backend": config.backend,
        "framing": config.framing if config.backend == "live" else None,
        "params": {
            "model": config.params.model,
            "temperature": config.params.temperature,
            "top_p": config.params.top_p,
            "max_tokens": config.params.max_tokens,
        },
        "replay_file": str(config.replay_file) if config.replay_file else None,
        "workers": config.workers,
        "status": "running",
        "started": _now(),
    }


def resolve_mode(kind: str, mode_name: str, conv_variant: str | None) -> PromptMode:
    """Build a PromptMode from CLI-level names, defaulting the ConvFinQA
    code mode to the dual-prompt variant."""
    try:
        mode = Mode(mode_name)
    except ValueError:
        raise ConfigError(f"unknown mode {mode_name!r}")
    if kind != "convfinqa":
        if conv_variant:
            raise ConfigError("--conv-variant only applies to convfinqa")
        return PromptMode(mode)
    if mode is not Mode.ZS_FINPYT:
        return PromptMode(mode)
    variant = {
        None: ConvVariant.DUAL_PROMPT,
        "dual": ConvVariant.DUAL_PROMPT,
        "single": ConvVariant.SINGLE_PROMPT_LAST_QUESTION,
    }.get(conv_variant)
    if variant is None:
        raise ConfigError(f"unknown conv variant {conv_variant!r}")
    return PromptMode(mode, variant)


def run_pipeline(config: RunConfig) -> RunResult:
    """Process a dataset under one mode and persist all artifacts."""
    records = load_records(config)
    gateway = build_gateway(config)
    executor = None
    if config.mode.mode is Mode.ZS_FINPYT:
        if config.runner is None:
            raise ConfigError("finpyt mode needs a runner script (--runner)")
        executor = CodeExecutor(
            ExecConfig(Path(config.runner)), max_workers=max(1, config.workers)
        )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    traces_path = out_dir / "traces.jsonl"
    manifest = _manifest(config)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    results: list[tuple[dict, EvalOutcome]] = []
    write_lock = threading.Lock()
    with open(traces_path, "w", encoding="utf-8") as sink:

        def handle(record: QARecord) -> None:
            trace = process_record(record, config.mode, gateway, config.params, executor)
            line = json.dumps(trace, sort_keys=True, ensure_ascii=True)
            outcome = EvalOutcome(
                Verdict(trace["eval"]["verdict"]),
                EvalMode(trace["eval"]["mode"]),
                None,
                trace["eval"]["failure_category"],
            )
            with write_lock:
                sink.write(line + "\n")
                sink.flush()
                results.append((trace["meta"], outcome))

        if config.workers <= 1:
            for record in records:
                handle(record)
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                for future in [pool.submit(handle, r) for r in records]:
                    future.result()
    report = score_run(results)
    report_json_path = out_dir / "report.json"
    report_text_path = out_dir / "report.txt"
    report_json_path.write_text(
        json.dumps(report_as_json(report), indent=2, sort_keys=True) + "\n"
    )
    report_text_path.write_text(render_report(report) + "\n")
    manifest["status"] = "complete"
    manifest["finished"] = _now()
    manifest["records"] = report.overall.total
    manifest["correct"] = report.overall.correct
    manifest["accuracy"] = round(report.overall.accuracy, 2)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(manifest_path, traces_path, report, report_json_path, report_text_path)


def read_traces(path) -> tuple[list[tuple[dict, EvalOutcome]], int]:
    """Load (meta, outcome) pairs from a traces file for re-reporting.

    Returns the pairs plus a count of lines that failed to parse and
    were skipped.
    """
    pairs: list[tuple[dict, EvalOutcome]] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                trace = json.loads(line)
                outcome = EvalOutcome(
                    Verdict(trace["eval"]["verdict"]),
                    EvalMode(trace["eval"]["mode"]),
                    None,
                    trace["eval"].get("failure_category"),
                )
                pairs.append((trace["meta"], outcome))
            except (ValueError, KeyError, TypeError):
                skipped += 1
    return pairs, skipped
