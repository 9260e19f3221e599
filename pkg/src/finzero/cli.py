"""Command-line entry points.

Subcommands:
    run             process a dataset end to end and write run artifacts
    report          recompute the scored report from a traces file
    exec-dsl        parse and evaluate a calculation program
    exec-py         run a generated Python snippet under the sandbox runner
    serialize-table flatten a JSON table the way prompts see it
    templates       list the prompt template catalog
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dsl
from .errors import ConfigError, DslError, FinzeroError, UsageError
from .evaluate import EvalMode, match, render_report, report_as_json, score_run
from .llm import DEFAULT_MODEL, GenerationParams
from .numerals import parse_scalar
from .pipeline import RunConfig, read_traces, resolve_mode, run_pipeline
from .prompts import template_catalog
from .pyexec import ExecConfig, ExecRequest, ExecStatus, run_code
from .records import serialize_table

_CONFIG_KEYS = {
    "endpoint",
    "framing",
    "model",
    "temperature",
    "top_p",
    "max_tokens",
    "cache_dir",
    "runner",
}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return raw


def _params(args, file_config: dict) -> GenerationParams:
    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_config.get(key, default)

    return GenerationParams(
        temperature=float(pick(args.temperature, "temperature", 0.0)),
        top_p=float(pick(args.top_p, "top_p", 0.95)),
        max_tokens=int(pick(args.max_tokens, "max_tokens", 1000)),
        model=pick(args.model, "model", DEFAULT_MODEL),
    )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    return f"{value:.5f}"


def _cmd_run(args) -> int:
    file_config = _load_config_file(args.config)
    mode = resolve_mode(args.kind, args.mode, args.conv_variant)
    runner = args.runner or file_config.get("runner")
    cache_dir = args.cache_dir or file_config.get("cache_dir")
    config = RunConfig(
        dataset=Path(args.dataset),
        kind=args.kind,
        mode=mode,
        out_dir=Path(args.out),
        backend=args.backend,
        params=_params(args, file_config),
        replay_file=Path(args.replay_file) if args.replay_file else None,
        cache_dir=Path(cache_dir) if cache_dir else None,
        endpoint=file_config.get("endpoint"),
        framing=file_config.get("framing", "chat"),
        workers=args.workers,
        runner=Path(runner) if runner else None,
        limit=args.limit,
    )
    result = run_pipeline(config)
    print(render_report(result.report))
    print(f"traces:   {result.traces_path}")
    print(f"manifest: {result.manifest_path}")
    return 0


def _cmd_report(args) -> int:
    pairs, skipped = read_traces(args.traces)
    report = score_run(pairs)
    if skipped:
        report.notices.append(f"skipped {skipped} unreadable trace line(s)")
    text = render_report(report)
    print(text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(
            json.dumps(report_as_json(report), indent=2, sort_keys=True) + "\n"
        )
        (out_dir / "report.txt").write_text(text + "\n")
    return 0


def _cmd_exec_dsl(args) -> int:
    program = dsl.parse_program(args.program)
    value = dsl.execute(program)
    print(_format_value(value))
    if args.gold is not None:
        gold = parse_scalar(args.gold)
        if gold is None:
            raise UsageError(f"cannot parse gold value {args.gold!r}")
        outcome = match(value, gold, EvalMode.EXACT)
        scale = f" (scale {outcome.matched_scale.label})" if outcome.matched_scale else ""
        print(f"verdict: {outcome.verdict.value}{scale}")
    return 0


def _cmd_exec_py(args) -> int:
    file_config = _load_config_file(args.config)
    runner = args.runner or file_config.get("runner")
    if runner is None:
        raise UsageError("exec-py needs a runner script (--runner or config file)")
    if args.source == "-":
        source = sys.stdin.read()
    else:
        source = Path(args.source).read_text(encoding="utf-8")
    result = run_code(
        ExecRequest(source, timeout=args.timeout), ExecConfig(Path(runner))
    )
    if result.status is ExecStatus.OK:
        print(_format_value(result.value))
        return 0
    detail = f": {result.stderr_excerpt}" if result.stderr_excerpt else ""
    print(f"{result.status.value}{detail}", file=sys.stderr)
    return 1


def _cmd_serialize_table(args) -> int:
    raw = json.loads(Path(args.table).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise UsageError("table file must hold a JSON list of rows")
    print(serialize_table(raw))
    return 0


def _cmd_templates(args) -> int:
    catalog = template_catalog()
    if args.json:
        print(json.dumps(catalog, indent=2, sort_keys=True))
        return 0
    for row in catalog:
        datasets = ",".join(row["datasets"])
        print(f"== {row['name']} [{datasets}] mode={row['mode']} stage={row['stage']}")
        print(row["template_text"])
        print()
    print(f"{len(catalog)} templates")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finzero", description="Zero-shot numerical QA over financial reports."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="process a dataset end to end")
    run_p.add_argument("--dataset", required=True, help="path to the dataset JSON")
    run_p.add_argument("--kind", required=True, choices=["finqa", "convfinqa", "tatqa"])
    run_p.add_argument("--mode", required=True, choices=["finpyt", "findsl", "std", "cot"])
    run_p.add_argument(
        "--backend", default="replay", choices=["live", "replay", "cache-only"]
    )
    run_p.add_argument("--replay-file", help="JSONL of recorded completions")
    run_p.add_argument("--model")
    run_p.add_argument("--temperature", type=float)
    run_p.add_argument("--top-p", type=float)
    run_p.add_argument("--max-tokens", type=int)
    run_p.add_argument("--workers", type=int, default=4)
    run_p.add_argument("--out", required=True, help="directory for run artifacts")
    run_p.add_argument("--conv-variant", choices=["single", "dual"])
    run_p.add_argument("--config", help="JSON config file (endpoint, model, ...)")
    run_p.add_argument("--runner", help="sandbox runner script for finpyt mode")
    run_p.add_argument("--cache-dir", help="directory for cached completions")
    run_p.add_argument("--limit", type=int, help="only process the first N records")
    run_p.set_defaults(func=_cmd_run)

    report_p = sub.add_parser("report", help="recompute a report from traces")
    report_p.add_argument("traces", help="path to a traces.jsonl file")
    report_p.add_argument("--out", help="directory to write report.json/report.txt")
    report_p.set_defaults(func=_cmd_report)

    dsl_p = sub.add_parser("exec-dsl", help="evaluate a calculation program")
    dsl_p.add_argument("program", help='e.g. \'subtract(5829, 5735), divide(#0, 5735)\'')
    dsl_p.add_argument("--gold", help="gold answer to check the result against")
    dsl_p.set_defaults(func=_cmd_exec_dsl)

    py_p = sub.add_parser("exec-py", help="run a Python snippet in the sandbox")
    py_p.add_argument("source", help="path to a source file, or - for stdin")
    py_p.add_argument("--runner", help="sandbox runner script")
    py_p.add_argument("--config", help="JSON config file naming the runner")
    py_p.add_argument("--timeout", type=float, default=10.0)
    py_p.set_defaults(func=_cmd_exec_py)

    table_p = sub.add_parser("serialize-table", help="flatten a JSON table")
    table_p.add_argument("table", help="path to a JSON list of rows")
    table_p.set_defaults(func=_cmd_serialize_table)

    tmpl_p = sub.add_parser("templates", help="list the prompt template catalog")
    tmpl_p.add_argument("--json", action="store_true", help="emit JSON")
    tmpl_p.set_defaults(func=_cmd_templates)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FinzeroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
