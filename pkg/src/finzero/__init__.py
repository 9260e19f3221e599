"""Zero-shot numerical question answering over financial reports.

The pipeline renders a prompt for each QA record, asks a language model
to answer (optionally in two stages), extracts a program or a bare
answer from the completion, executes programs externally, and scores
the result against the gold answer under a relative tolerance.
"""
from .dsl import DslOp, DslProgram, execute, parse_program, to_canonical_string
from .evaluate import EvalMode, EvalOutcome, Verdict, match, score_run, tolerant_equal
from .llm import GenerationParams, LlmGateway, LiveBackend, ReplayBackend
from .numerals import ScalarValue, find_scalar, parse_scalar
from .pipeline import RunConfig, run_pipeline
from .prompts import ConvVariant, Mode, PromptMode, render, template_catalog
from .records import QARecord, load_convfinqa, load_finqa, load_tatqa, serialize_table

__version__ = "0.1.0"

__all__ = [
    "ConvVariant",
    "DslOp",
    "DslProgram",
    "EvalMode",
    "EvalOutcome",
    "GenerationParams",
    "LiveBackend",
    "LlmGateway",
    "Mode",
    "PromptMode",
    "QARecord",
    "ReplayBackend",
    "RunConfig",
    "ScalarValue",
    "Verdict",
    "execute",
    "find_scalar",
    "load_convfinqa",
    "load_finqa",
    "load_tatqa",
    "match",
    "parse_program",
    "parse_scalar",
    "render",
    "run_pipeline",
    "score_run",
    "serialize_table",
    "template_catalog",
    "to_canonical_string",
    "tolerant_equal",
]
