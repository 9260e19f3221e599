"""Release gate: one test per shipping criterion.

Each criterion prints a single ``ACCEPTANCE <name>: PASS`` (or FAIL)
line so a log scan shows the release state at a glance. Everything here
runs without the sandbox runner on disk — code-mode execution has its
own gated tests in test_pyexec.py.
"""
import json
import math
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from test_dsl import random_program, run_both

from finzero import dsl
from finzero.evaluate import (
    EvalMode,
    Verdict,
    match,
    tolerant_equal,
)
from finzero.numerals import parse_scalar
from finzero.pipeline import RunConfig, run_pipeline
from finzero.prompts import Mode, PromptMode

FIXTURES = Path(__file__).parent / "fixtures"


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


# program text -> gold answer as the dataset states it
REFERENCE_SUITE = [
    ("divide(1334, 23556)", "0.05663"),
    ("subtract(39.2, 28.2), divide(#0, 28.2)", "0.39007"),
    ("subtract(516, 234)", "282.0"),
    ("subtract(1925, 1131), divide(#0, 1131)", "0.70203"),
    ("subtract(98.05, 95.11), divide(#0, 95.11)", "0.03091"),
    ("subtract(34.3, 38.9), divide(#0, 38.9)", "-0.11825"),
    ("greater(57.7, 68.9)", "no"),
    ("add(2.86, 2.87)", "5.73"),
    ("multiply(2770, 21.96)", "60829.2"),
]


def test_reference_program_suite():
    with criterion("reference-programs"):
        started = time.perf_counter()
        for text, gold_text in REFERENCE_SUITE:
            value = dsl.execute(dsl.parse_program(text))
            gold = parse_scalar(gold_text)
            assert gold is not None, gold_text
            if isinstance(gold.value, bool):
                assert value is gold.value, text
            else:
                assert not isinstance(value, bool), text
                assert tolerant_equal(value, gold.value, rel_tol=0.001), text
        elapsed = time.perf_counter() - started
        assert elapsed < 1.0, f"reference suite took {elapsed:.3f}s"


def _replay_config(out_dir, mode, replay_name) -> RunConfig:
    return RunConfig(
        dataset=FIXTURES / "worked_finqa.json",
        kind="finqa",
        mode=PromptMode(mode),
        out_dir=out_dir,
        backend="replay",
        replay_file=FIXTURES / replay_name,
        workers=1,
    )


def _traces_by_prefix(result):
    traces = [
        json.loads(line) for line in result.traces_path.read_text().splitlines()
    ]
    return {t["record_id"].split("/")[0]: t for t in traces}


def test_failure_modes_reproduce_from_replay(tmp_path):
    with criterion("failure-modes"):
        findsl = _traces_by_prefix(
            run_pipeline(
                _replay_config(tmp_path / "findsl", Mode.ZS_FINDSL, "replay_findsl.jsonl")
            )
        )
        # A hallucinated extra step doubles the answer; the wrong program
        # must be executed as-is and scored, not repaired.
        unp = findsl["UNP"]
        assert unp["program"] == "subtract(516, 234), add(#0, 282)"
        assert unp["prediction"] == 564.0
        assert unp["eval"]["verdict"] == "incorrect"
        # A numeric program against a yes/no gold is a type clash.
        adbe = findsl["ADBE"]
        assert math.isclose(adbe["prediction"], 11.2, rel_tol=1e-9)
        assert adbe["eval"]["verdict"] == "incorrect"
        assert adbe["eval"]["failure_category"] == "answer_mismatch"
        # A free-text completion with no number in it cannot be scored.
        std = _traces_by_prefix(
            run_pipeline(
                _replay_config(tmp_path / "std", Mode.ZS_STD, "replay_std.jsonl")
            )
        )
        holx = std["HOLX"]
        assert holx["stages"][1]["response"] == "float"
        assert holx["extraction"]["failure"] == "unparseable_answer"
        assert holx["eval"]["verdict"] == "failed"


def test_evaluator_normalization():
    with criterion("normalization"):
        fraction = match(0.23, 23.0)
        assert fraction.verdict is Verdict.CORRECT
        assert fraction.matched_scale.factor == 100.0
        worded = match(7_000_000.0, "7 million")
        assert worded.verdict is Verdict.CORRECT
        assert worded.matched_scale.factor == 1.0
        assert match(0.0, 5.0).verdict is Verdict.INCORRECT
        rng = random.Random(20240822)
        hits = misses = 0
        for _ in range(10_000):
            gold = rng.uniform(-1e6, 1e6)
            if rng.random() < 0.5:
                pred = gold * (1.0 + rng.uniform(-0.002, 0.002))
            else:
                pred = rng.uniform(-1e6, 1e6)
            expected = abs(pred - gold) <= 0.001 * max(abs(pred), abs(gold))
            got = tolerant_equal(pred, gold, rel_tol=0.001)
            assert got == expected, (pred, gold)
            hits += got
            misses += not got
        assert hits > 1000 and misses > 1000


def test_dsl_differential():
    with criterion("dsl-differential"):
        rng = random.Random(20240820)
        disagreements = 0
        for _ in range(10_000):
            program = random_program(rng)
            engine, ref = run_both(program)
            if engine != ref:
                disagreements += 1
        assert disagreements == 0
        for _ in range(1_000):
            program = random_program(rng)
            assert dsl.parse_program(dsl.to_canonical_string(program)) == program


def test_replay_end_to_end(tmp_path):
    with criterion("replay-end-to-end"):
        started = time.perf_counter()
        first = run_pipeline(
            _replay_config(tmp_path / "first", Mode.ZS_FINDSL, "replay_findsl.jsonl")
        )
        second = run_pipeline(
            _replay_config(tmp_path / "second", Mode.ZS_FINDSL, "replay_findsl.jsonl")
        )
        elapsed = time.perf_counter() - started
        for result in (first, second):
            assert result.report.overall.total == 8
            assert result.report.overall.correct == 6
            assert result.report.overall.accuracy == pytest.approx(75.0)
            assert "75.00" in result.report_text_path.read_text()
        assert first.traces_path.read_bytes() == second.traces_path.read_bytes()
        assert (
            first.report_json_path.read_bytes() == second.report_json_path.read_bytes()
        )
        assert elapsed < 5.0, f"replay runs took {elapsed:.3f}s"
