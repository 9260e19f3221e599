"""Parent-side execution gateway: preflight, child launch, report mapping.

The preflight and translation tests run everywhere. Tests that launch a
real child are skipped until the runner script exists on disk, so this
suite stays green on a checkout without the runner built.
"""
import math
import random
import threading
import time
from pathlib import Path

import pytest

from finzero import dsl
from finzero.dsl import DslExecutionError, DslOp, DslProgram, DslStep, Literal, StepRef
from finzero.errors import ConfigError
from finzero.pyexec import (
    CodeExecutor,
    ExecConfig,
    ExecRequest,
    ExecStatus,
    ExecutionResult,
    preflight,
    program_to_python,
    run_code,
)

RUNNER = Path(__file__).resolve().parents[1] / "runner" / "sandbox_runner.py"

needs_runner = pytest.mark.skipif(
    not RUNNER.exists(), reason="sandbox runner script not built"
)

# The worked non-vested-shares example: the printed comment is wrong on
# purpose; execution is authoritative.
HOLX_SOURCE = (
    "non_vested_shares = 2770\n"
    "weighted_average_grant_date_fair_value = 21.96\n"
    "ans = non_vested_shares * weighted_average_grant_date_fair_value\n"
    "print(ans) # prints 60,532.2"
)

GS_SOURCE = (
    "total_2015 = 2.86 #in billions\n"
    "total_2014 = 2.87 #in billions\n"
    "ans = total_2015 + total_2014 #in billions"
)


@pytest.fixture(scope="module")
def config():
    return ExecConfig(runner=RUNNER)


# --- preflight ---------------------------------------------------------


def test_preflight_accepts_plain_arithmetic():
    assert preflight("a = 1\nb = 2\nans = a + b") is None


def test_preflight_accepts_math_import():
    assert preflight("import math\nans = math.sqrt(4)") is None
    assert preflight("from math import sqrt\nans = sqrt(4)") is None


def test_preflight_rejects_other_imports():
    assert "os" in preflight("import os")
    assert preflight("from subprocess import run") is not None
    assert preflight("import math, socket") is not None


@pytest.mark.parametrize(
    "name", ["open", "exec", "eval", "compile", "__import__", "input", "getattr"]
)
def test_preflight_rejects_banned_names(name):
    reason = preflight(f"x = {name}('something')")
    assert reason is not None and name in reason


def test_preflight_rejects_dunder_attributes():
    assert "__class__" in preflight("x = (1).__class__")
    assert preflight("f = (lambda: 1).__globals__") is not None


def test_preflight_allows_ordinary_attributes():
    assert preflight("import math\nans = math.pi") is None


def test_preflight_passes_unparseable_source():
    # Syntax errors are the child's to report; the static scan has no
    # opinion about text it cannot parse.
    assert preflight("ans = (") is None


# --- request/result invariants -----------------------------------------


def test_exec_request_validation():
    with pytest.raises(ValueError):
        ExecRequest(source="")
    with pytest.raises(ValueError):
        ExecRequest(source="ans = 1", timeout=0)
    req = ExecRequest(source="ans = 1")
    assert req.timeout == 10.0
    assert req.memory_cap == 256 * 1024 * 1024


def test_execution_result_value_iff_ok():
    with pytest.raises(ValueError):
        ExecutionResult(ExecStatus.OK)
    with pytest.raises(ValueError):
        ExecutionResult(ExecStatus.RUNTIME_ERROR, value=1.0)
    assert ExecutionResult(ExecStatus.OK, value=2.0).value == 2.0


def test_executor_requires_an_existing_runner(tmp_path):
    with pytest.raises(ConfigError):
        CodeExecutor(ExecConfig(runner=tmp_path / "nope.py"))


# --- program translation -----------------------------------------------


def test_program_to_python_straight_line():
    program = dsl.parse_program("subtract(39.2, 28.2), divide(#0, 28.2)")
    assert program_to_python(program) == (
        "v0 = 39.2 - 28.2\nv1 = v0 / 28.2\nans = v1"
    )


def test_program_to_python_operators():
    assert "v0 = 2.0 > 3.0" in program_to_python(dsl.parse_program("greater(2, 3)"))
    assert "v0 = max(2.0, 3.0)" in program_to_python(dsl.parse_program("max(2, 3)"))
    assert "v0 = 2.0 ** 3.0" in program_to_python(dsl.parse_program("exponent(2, 3)"))


def test_program_to_python_matches_in_process_exec():
    # The translation must agree with the engine under a plain exec; the
    # runner-gated test below repeats this through the real child.
    program = dsl.parse_program("subtract(1925, 1131), divide(#0, 1131)")
    namespace: dict = {}
    exec(program_to_python(program), namespace)  # noqa: S102 - test-only
    assert math.isclose(namespace["ans"], dsl.execute(program), rel_tol=1e-12)


# --- gated: real child executions --------------------------------------


@needs_runner
def test_run_code_worked_examples(config):
    result = run_code(ExecRequest(HOLX_SOURCE), config)
    assert result.status is ExecStatus.OK
    assert math.isclose(result.value, 60829.2, rel_tol=1e-9)
    result = run_code(ExecRequest(GS_SOURCE), config)
    assert result.status is ExecStatus.OK
    assert math.isclose(result.value, 5.73, rel_tol=1e-9)


@needs_runner
def test_run_code_boolean_ans(config):
    result = run_code(ExecRequest("ans = 1 > 2"), config)
    assert result.status is ExecStatus.OK
    assert result.value is False


@needs_runner
def test_run_code_integer_ans_becomes_float(config):
    result = run_code(ExecRequest("ans = 3"), config)
    assert result.status is ExecStatus.OK
    assert isinstance(result.value, float) and result.value == 3.0


@needs_runner
def test_run_code_math_whitelist(config):
    result = run_code(ExecRequest("import math\nans = math.sqrt(4)"), config)
    assert result.status is ExecStatus.OK
    assert result.value == 2.0


@needs_runner
def test_run_code_missing_ans(config):
    assert run_code(ExecRequest("x = 1"), config).status is ExecStatus.MISSING_ANS


@needs_runner
def test_run_code_string_ans_is_missing(config):
    # The contract says bool/float; anything else counts as unanswered.
    result = run_code(ExecRequest("ans = 'five'"), config)
    assert result.status is ExecStatus.MISSING_ANS


@needs_runner
def test_run_code_user_exception(config):
    result = run_code(ExecRequest("raise ValueError('boom')"), config)
    assert result.status is ExecStatus.RUNTIME_ERROR
    assert "ValueError" in result.stderr_excerpt
    assert "boom" in result.stderr_excerpt


@needs_runner
def test_run_code_division_by_zero(config):
    result = run_code(ExecRequest("ans = 1 / 0"), config)
    assert result.status is ExecStatus.RUNTIME_ERROR
    assert "ZeroDivisionError" in result.stderr_excerpt


@needs_runner
def test_run_code_syntax_error(config):
    result = run_code(ExecRequest("ans = ("), config)
    assert result.status is ExecStatus.RUNTIME_ERROR
    assert "SyntaxError" in result.stderr_excerpt


@needs_runner
def test_run_code_timeout_and_wall_clock(config):
    started = time.monotonic()
    result = run_code(ExecRequest("while True: pass", timeout=1.0), config)
    elapsed = time.monotonic() - started
    assert result.status is ExecStatus.TIMEOUT
    assert elapsed < 2.0


def test_run_code_disallowed_without_launching(tmp_path):
    # A preflight rejection must not require the runner at all.
    config = ExecConfig(runner=tmp_path / "missing.py")
    result = run_code(ExecRequest("import os\nans = 1"), config)
    assert result.status is ExecStatus.DISALLOWED_CONSTRUCT


@needs_runner
def test_run_code_stdout_noise_and_fake_sentinel(config):
    source = "print('##RESULT##')\nprint('{\"ok\": true}')\nans = 2.0"
    result = run_code(ExecRequest(source), config)
    assert result.status is ExecStatus.OK
    assert result.value == 2.0


@needs_runner
def test_run_code_is_deterministic(config):
    values = [
        run_code(ExecRequest("ans = 0.1 + 0.2"), config).value for _ in range(2)
    ]
    assert values[0] == values[1]


@needs_runner
def test_executor_bounded_concurrency(config):
    executor = CodeExecutor(ExecConfig(runner=RUNNER), max_workers=2)
    results = []

    def work():
        results.append(executor.run(ExecRequest("ans = 6 * 7")))

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r.status is ExecStatus.OK and r.value == 42.0 for r in results)


OPS = list(DslOp)


def _random_engine_valid_program(rng: random.Random) -> tuple[DslProgram, float | bool]:
    while True:
        n = rng.randint(1, 3)
        steps = []
        for k in range(n):
            def arg():
                if k > 0 and rng.random() < 0.35:
                    return StepRef(rng.randrange(k))
                return Literal(round(rng.uniform(-50, 50), 2))

            steps.append(DslStep(rng.choice(OPS), arg(), arg()))
        program = DslProgram(tuple(steps))
        try:
            return program, dsl.execute(program)
        except DslExecutionError:
            continue


@needs_runner
def test_cross_engine_consistency(config):
    # Any program both engines accept must produce the same value.
    rng = random.Random(20240822)
    for _ in range(25):
        program, expected = _random_engine_valid_program(rng)
        result = run_code(ExecRequest(program_to_python(program)), config)
        assert result.status is ExecStatus.OK, dsl.to_canonical_string(program)
        if isinstance(expected, bool):
            assert result.value is expected
        else:
            assert math.isclose(result.value, expected, rel_tol=1e-9), (
                dsl.to_canonical_string(program)
            )
