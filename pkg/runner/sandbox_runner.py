"""Child-side shim: run one generated program, report `ans` over stdout.

Protocol (bit-exact, parent relies on it):
  stdin   one UTF-8 JSON object {"source": "<python source>"}
  stdout  user output passes through untouched, then a line "##RESULT##",
          then one JSON line {"ok", "ans", "type", "error"}
  exit    0 whenever the protocol completed, even if the user code failed

The namespace is rebuilt per invocation from a curated builtin surface:
arithmetic and container helpers, print, a handful of exception types,
and an import hook that admits only `math`. Nothing else — no files, no
network, no process access. The parent enforces time and memory limits;
this side only has to keep the report honest: the sentinel is never
written before user code has finished or failed, and the report line is
valid JSON for arbitrary source text.
"""
import builtins
import json
import math
import sys

SENTINEL = "##RESULT##"

IMPORT_WHITELIST = {"math"}

# The exact string the parent matches for a present-but-unusable `ans`.
NOT_SCALAR = "ans is not bool/float"

_SAFE_BUILTINS = [
    "abs",
    "bool",
    "dict",
    "divmod",
    "enumerate",
    "float",
    "int",
    "len",
    "list",
    "max",
    "min",
    "pow",
    "print",
    "range",
    "round",
    "sorted",
    "str",
    "sum",
    "tuple",
    "zip",
    # Exception types so generated code can raise and catch.
    "Exception",
    "ArithmeticError",
    "AttributeError",
    "IndexError",
    "KeyError",
    "NameError",
    "OverflowError",
    "RuntimeError",
    "StopIteration",
    "TypeError",
    "ValueError",
    "ZeroDivisionError",
]

_ABSENT = object()


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    if level == 0 and name.split(".")[0] in IMPORT_WHITELIST:
        return builtins.__import__(name, globals, locals, fromlist, level)
    raise ImportError(f"import of {name!r} is not allowed")


def _namespace() -> dict:
    surface = {name: getattr(builtins, name) for name in _SAFE_BUILTINS}
    surface["__import__"] = _guarded_import
    return {"__builtins__": surface, "__name__": "__main__"}


def _report(ok: bool, ans, kind: str, error: str | None) -> dict:
    return {"ok": ok, "ans": ans, "type": kind, "error": error}


def _missing(error: str | None) -> dict:
    return _report(False, None, "missing", error)


def _harvest(namespace: dict) -> dict:
    ans = namespace.get("ans", _ABSENT)
    if ans is _ABSENT:
        return _missing(None)
    if isinstance(ans, bool):
        return _report(True, ans, "bool", None)
    if isinstance(ans, (int, float)):
        try:
            value = float(ans)
        except OverflowError:
            return _missing(NOT_SCALAR)
        if not math.isfinite(value):
            return _missing(NOT_SCALAR)
        return _report(True, value, "float", None)
    return _missing(NOT_SCALAR)


def _execute(source: str) -> dict:
    namespace = _namespace()
    try:
        code = compile(source, "<generated>", "exec")
        exec(code, namespace)  # noqa: S102 - the whole point of this script
    except BaseException as exc:  # SystemExit included: the report must still go out
        return _missing(f"{type(exc).__name__}: {exc}")
    return _harvest(namespace)


def _read_request() -> str:
    raw = sys.stdin.buffer.read().decode("utf-8", errors="replace").strip()
    if not raw:
        raise ValueError("empty stdin")
    try:
        request = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"stdin is not JSON ({exc.msg})") from None
    if not isinstance(request, dict):
        raise ValueError("request is not an object")
    source = request.get("source")
    if not isinstance(source, str):
        raise ValueError("request has no source string")
    return source


def main() -> int:
    try:
        source = _read_request()
    except ValueError as exc:
        report = _missing(f"protocol: {exc}")
    else:
        report = _execute(source)
    # User output (if any) is already in the stdout buffer; the leading
    # newline keeps the sentinel on its own line even after a print that
    # did not end one.
    sys.stdout.write("\n" + SENTINEL + "\n")
    sys.stdout.write(json.dumps(report, allow_nan=False) + "\n")
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
