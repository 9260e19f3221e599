"""Run extracted Python source in an isolated child process.

The child is a separate runner script speaking a line protocol: one JSON
object {"source": …} on stdin; passthrough output, then a "##RESULT##"
sentinel line, then one JSON report line on stdout. This module owns the
parent side: a static preflight scan (import whitelist, banned names,
no dunder access), process launch with time and memory limits, and
mapping the child's report onto an ExecutionResult.
"""
from __future__ import annotations

import ast
import json
import subprocess
import sys
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .dsl import DslOp, DslProgram, StepRef
from .errors import ConfigError

SENTINEL = "##RESULT##"

IMPORT_WHITELIST = {"math"}

BANNED_NAMES = {
    "open",
    "exec",
    "eval",
    "compile",
    "__import__",
    "input",
    "breakpoint",
    "globals",
    "locals",
    "vars",
    "getattr",
    "setattr",
    "delattr",
}

DEFAULT_TIMEOUT = 10.0
DEFAULT_MEMORY_CAP = 256 * 1024 * 1024


class ExecStatus(Enum):
    OK = "ok"
    TIMEOUT = "timeout"
    RUNTIME_ERROR = "runtime_error"
    MISSING_ANS = "missing_ans"
    DISALLOWED_CONSTRUCT = "disallowed_construct"
    LAUNCHER_ERROR = "launcher_error"


@dataclass(frozen=True)
class ExecRequest:
    source: str
    timeout: float = DEFAULT_TIMEOUT
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        if not self.source:
            raise ValueError("source must be non-empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecStatus
    value: float | bool | None = None
    stderr_excerpt: str = ""

    def __post_init__(self):
        if (self.value is not None) != (self.status is ExecStatus.OK):
            raise ValueError("value present iff status ok")


@dataclass(frozen=True)
class ExecConfig:
    """Where the runner script lives and which interpreter launches it."""

    runner: Path
    python: str = sys.executable


def preflight(source: str) -> str | None:
    """Static scan for constructs the sandbox refuses.

    Returns None when the source is acceptable, else a description of
    the offending construct. Source that does not parse passes — the
    child reports the syntax error as a runtime failure.
    """
    try:
        tree = ast.parse(source)
    except (SyntaxError, ValueError):
        return None
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".")[0]
                if root not in IMPORT_WHITELIST:
                    return f"import of {alias.name!r} is not allowed"
        elif isinstance(node, ast.ImportFrom):
            root = (node.module or "").split(".")[0]
            if root not in IMPORT_WHITELIST:
                return f"import from {node.module!r} is not allowed"
        elif isinstance(node, ast.Name) and node.id in BANNED_NAMES:
            return f"use of {node.id!r} is not allowed"
        elif isinstance(node, ast.Attribute):
            if node.attr.startswith("__") and node.attr.endswith("__"):
                return f"dunder attribute access {node.attr!r} is not allowed"
    return None


def _memory_limiter(cap: int):
    try:
        import resource
    except ImportError:  # pragma: no cover - non-POSIX
        return None

    def limit():
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))

    return limit


class CodeExecutor:
    """Launches runner children, bounded to ``max_workers`` at a time."""

    def __init__(self, config: ExecConfig, max_workers: int = 4):
        if not Path(config.runner).exists():
            raise ConfigError(f"runner script not found: {config.runner}")
        self.config = config
        self._gate = threading.Semaphore(max_workers)

    def run(self, request: ExecRequest) -> ExecutionResult:
        with self._gate:
            return run_code(request, self.config)


def run_code(request: ExecRequest, config: ExecConfig) -> ExecutionResult:
    """Execute one source through the child runner and harvest `ans`."""
    reason = preflight(request.source)
    if reason is not None:
        return ExecutionResult(ExecStatus.DISALLOWED_CONSTRUCT, stderr_excerpt=reason)
    payload = json.dumps({"source": request.source})
    try:
        proc = subprocess.run(
            [config.python, str(config.runner)],
            input=payload.encode("utf-8"),
            capture_output=True,
            timeout=request.timeout,
            preexec_fn=_memory_limiter(request.memory_cap),
        )
    except subprocess.TimeoutExpired:
        return ExecutionResult(
            ExecStatus.TIMEOUT, stderr_excerpt=f"killed after {request.timeout}s"
        )
    except (OSError, ValueError) as exc:
        return ExecutionResult(ExecStatus.LAUNCHER_ERROR, stderr_excerpt=str(exc)[:500])
    stdout = proc.stdout.decode("utf-8", errors="replace")
    stderr = proc.stderr.decode("utf-8", errors="replace")[:500]
    report = _parse_report(stdout)
    if report is None:
        # No sentinel: a hard-killed child (e.g. past the memory cap)
        # exits nonzero; a clean exit without a report is a launcher bug.
        status = ExecStatus.RUNTIME_ERROR if proc.returncode else ExecStatus.LAUNCHER_ERROR
        return ExecutionResult(
            status, stderr_excerpt=stderr or f"no report (exit {proc.returncode})"
        )
    return _result_from_report(report, stderr)


def _parse_report(stdout: str) -> dict | None:
    lines = stdout.splitlines()
    # User code may print the sentinel itself; the runner's own report
    # always comes after, so scan from the end.
    for i in range(len(lines) - 1, -1, -1):
        if lines[i].strip() == SENTINEL:
            for line in lines[i + 1 :]:
                line = line.strip()
                if not line:
                    continue
                try:
                    report = json.loads(line)
                except json.JSONDecodeError:
                    return None
                return report if isinstance(report, dict) else None
            return None
    return None


# Protocol error strings the runner uses for non-exception failures; a
# null error with type "missing" means `ans` was simply never assigned.
_MISSING_ANS_ERROR = "ans is not bool/float"
_PROTOCOL_ERROR_PREFIX = "protocol:"


def _result_from_report(report: dict, stderr: str) -> ExecutionResult:
    error = report.get("error")
    excerpt = str(error)[:500] if error else stderr
    if report.get("ok"):
        ans = report.get("ans")
        if isinstance(ans, bool):
            return ExecutionResult(ExecStatus.OK, value=ans)
        if isinstance(ans, (int, float)):
            return ExecutionResult(ExecStatus.OK, value=float(ans))
        return ExecutionResult(
            ExecStatus.LAUNCHER_ERROR, stderr_excerpt=f"ok report with bad ans {ans!r}"
        )
    if str(error).startswith(_PROTOCOL_ERROR_PREFIX):
        return ExecutionResult(ExecStatus.LAUNCHER_ERROR, stderr_excerpt=excerpt)
    if report.get("type") == "missing" and (error is None or error == _MISSING_ANS_ERROR):
        return ExecutionResult(ExecStatus.MISSING_ANS, stderr_excerpt=excerpt)
    return ExecutionResult(ExecStatus.RUNTIME_ERROR, stderr_excerpt=excerpt)


def program_to_python(program: DslProgram) -> str:
    """Translate a step program to straight-line Python ending in `ans`.

    Used by the cross-engine consistency checks: both engines must agree
    on every valid program.
    """
    symbols = {
        DslOp.ADD: "+",
        DslOp.SUBTRACT: "-",
        DslOp.MULTIPLY: "*",
        DslOp.DIVIDE: "/",
        DslOp.EXPONENT: "**",
    }
    lines = []
    for i, step in enumerate(program.steps):
        a = _py_arg(step.arg1)
        b = _py_arg(step.arg2)
        if step.op in symbols:
            expr = f"{a} {symbols[step.op]} {b}"
        elif step.op is DslOp.GREATER:
            expr = f"{a} > {b}"
        else:
            expr = f"{step.op.value}({a}, {b})"
        lines.append(f"v{i} = {expr}")
    lines.append(f"ans = v{len(program.steps) - 1}")
    return "\n".join(lines)


def _py_arg(arg) -> str:
    if isinstance(arg, StepRef):
        return f"v{arg.index}"
    return repr(arg.value)
