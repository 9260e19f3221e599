"""CLI behavior, driven through main(argv) so exit codes and stdout are
asserted in-process."""
import io
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from finzero.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
RUNNER = Path(__file__).resolve().parents[1] / "runner" / "sandbox_runner.py"

needs_runner = pytest.mark.skipif(
    not RUNNER.exists(), reason="sandbox runner script not built"
)


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def run_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    code = run_cli(
        "run",
        "--dataset", str(FIXTURES / "worked_finqa.json"),
        "--kind", "finqa",
        "--mode", "findsl",
        "--backend", "replay",
        "--replay-file", str(FIXTURES / "replay_findsl.jsonl"),
        "--out", str(out),
        "--workers", "1",
    )
    assert code == 0
    return out


# --- run ---------------------------------------------------------------


def test_run_writes_all_artifacts(run_artifacts, capsys):
    for name in ("manifest.json", "traces.jsonl", "report.json", "report.txt"):
        assert (run_artifacts / name).exists(), name
    assert "75.00" in (run_artifacts / "report.txt").read_text()


def test_run_prints_the_report(tmp_path, capsys):
    code = run_cli(
        "run",
        "--dataset", str(FIXTURES / "worked_finqa.json"),
        "--kind", "finqa",
        "--mode", "std",
        "--backend", "replay",
        "--replay-file", str(FIXTURES / "replay_std.jsonl"),
        "--out", str(tmp_path),
        "--workers", "1",
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "overall accuracy" in out
    assert "75.00" in out
    assert "evaluation mode: relaxed" in out
    assert "traces:" in out and "manifest:" in out


def test_run_rejects_conv_variant_outside_convfinqa(tmp_path, capsys):
    code = run_cli(
        "run",
        "--dataset", str(FIXTURES / "worked_finqa.json"),
        "--kind", "finqa",
        "--mode", "findsl",
        "--conv-variant", "dual",
        "--replay-file", str(FIXTURES / "replay_findsl.jsonl"),
        "--out", str(tmp_path),
    )
    assert code == 2
    assert "conv-variant" in capsys.readouterr().err


def test_run_replay_backend_needs_a_file(tmp_path, capsys):
    code = run_cli(
        "run",
        "--dataset", str(FIXTURES / "worked_finqa.json"),
        "--kind", "finqa",
        "--mode", "findsl",
        "--out", str(tmp_path),
    )
    assert code == 2
    assert "replay" in capsys.readouterr().err


def test_run_rejects_unknown_config_keys(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text('{"endpoint": "http://localhost:1", "api_key": "nope"}')
    code = run_cli(
        "run",
        "--dataset", str(FIXTURES / "worked_finqa.json"),
        "--kind", "finqa",
        "--mode", "findsl",
        "--backend", "replay",
        "--replay-file", str(FIXTURES / "replay_findsl.jsonl"),
        "--out", str(tmp_path / "out"),
        "--config", str(config),
    )
    assert code == 2
    assert "api_key" in capsys.readouterr().err


def test_run_missing_dataset_is_a_clean_error(tmp_path, capsys):
    code = run_cli(
        "run",
        "--dataset", str(tmp_path / "nope.json"),
        "--kind", "finqa",
        "--mode", "findsl",
        "--backend", "replay",
        "--replay-file", str(FIXTURES / "replay_findsl.jsonl"),
        "--out", str(tmp_path / "out"),
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


# --- report ------------------------------------------------------------


def test_report_recomputes_from_traces(run_artifacts, capsys):
    code = run_cli("report", str(run_artifacts / "traces.jsonl"))
    out = capsys.readouterr().out
    assert code == 0
    assert "75.00  (6/8)" in out
    assert "boolean questions" in out
    assert "0.00  (0/1)" in out  # the one yes/no record scored wrong


def test_report_concatenated_runs_sum(run_artifacts, tmp_path, capsys):
    doubled = tmp_path / "doubled.jsonl"
    doubled.write_text((run_artifacts / "traces.jsonl").read_text() * 2)
    code = run_cli("report", str(doubled))
    out = capsys.readouterr().out
    assert code == 0
    assert "(12/16)" in out


def test_report_counts_skipped_lines(run_artifacts, tmp_path, capsys):
    mangled = tmp_path / "traces.jsonl"
    mangled.write_text((run_artifacts / "traces.jsonl").read_text() + "{broken\n")
    code = run_cli("report", str(mangled), "--out", str(tmp_path / "rep"))
    out = capsys.readouterr().out
    assert code == 0
    assert "note: skipped 1 unreadable trace line(s)" in out
    on_disk = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert on_disk["overall"]["total"] == 8
    assert (tmp_path / "rep" / "report.txt").read_text().rstrip("\n") == out.rstrip("\n")


def test_report_missing_file(tmp_path, capsys):
    code = run_cli("report", str(tmp_path / "absent.jsonl"))
    assert code == 2
    assert "error:" in capsys.readouterr().err


# --- exec-dsl ----------------------------------------------------------


@pytest.mark.parametrize(
    "program,printed",
    [
        ("subtract(1925, 1131), divide(#0, 1131)", "0.70203"),
        ("subtract(34.3, 38.9), divide(#0, 38.9)", "-0.11825"),
        ("greater(57.7, 68.9)", "no"),
        ("greater(68.9, 57.7)", "yes"),
        ("add(2.86, 2.87)", "5.73000"),
    ],
)
def test_exec_dsl_prints_five_decimals(program, printed, capsys):
    assert run_cli("exec-dsl", program) == 0
    assert capsys.readouterr().out == printed + "\n"


def test_exec_dsl_gold_verdict(capsys):
    assert run_cli("exec-dsl", "subtract(1925, 1131), divide(#0, 1131)", "--gold", "0.70203") == 0
    assert "verdict: correct" in capsys.readouterr().out


def test_exec_dsl_gold_verdict_reports_the_scale(capsys):
    assert run_cli("exec-dsl", "divide(1334, 23556)", "--gold", "5.66%") == 0
    out = capsys.readouterr().out
    assert "0.05663" in out
    assert "verdict: correct (scale percent_up)" in out


def test_exec_dsl_division_by_zero_is_an_error_exit(capsys):
    assert run_cli("exec-dsl", "divide(1, 0)") == 2
    assert "error:" in capsys.readouterr().err


def test_exec_dsl_parse_error(capsys):
    assert run_cli("exec-dsl", "frobnicate(1, 2)") == 2
    assert "error:" in capsys.readouterr().err


def test_exec_dsl_unparseable_gold(capsys):
    assert run_cli("exec-dsl", "add(1, 2)", "--gold", "banana") == 2
    assert "gold" in capsys.readouterr().err


# --- exec-py -----------------------------------------------------------


@needs_runner
def test_exec_py_runs_a_source_file(tmp_path, capsys):
    snippet = tmp_path / "snippet.py"
    snippet.write_text("total_2015 = 2.86\ntotal_2014 = 2.87\nans = total_2015 + total_2014\n")
    code = run_cli("exec-py", str(snippet), "--runner", str(RUNNER))
    assert code == 0
    assert capsys.readouterr().out == "5.73000\n"


@needs_runner
def test_exec_py_reads_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("ans = 6 * 7\n"))
    code = run_cli("exec-py", "-", "--runner", str(RUNNER))
    assert code == 0
    assert capsys.readouterr().out == "42.00000\n"


@needs_runner
def test_exec_py_failure_goes_to_stderr(tmp_path, capsys):
    snippet = tmp_path / "snippet.py"
    snippet.write_text("ans = 1 / 0\n")
    code = run_cli("exec-py", str(snippet), "--runner", str(RUNNER))
    captured = capsys.readouterr()
    assert code == 1
    assert captured.out == ""
    assert "runtime_error" in captured.err


def test_exec_py_needs_a_runner(tmp_path, capsys):
    snippet = tmp_path / "snippet.py"
    snippet.write_text("ans = 1\n")
    assert run_cli("exec-py", str(snippet)) == 2
    assert "runner" in capsys.readouterr().err


# --- serialize-table ---------------------------------------------------


def test_serialize_table_fixture(capsys):
    assert run_cli("serialize-table", str(FIXTURES / "commitment_table.json")) == 0
    out = capsys.readouterr().out
    assert "Capital Leases | $18 | $19 | $19 | $20 | $21 | $112 | $209" in out
    assert "Debt Principal | $864 | - | $1,750" in out


def test_serialize_table_empty_grid(tmp_path, capsys):
    table = tmp_path / "empty.json"
    table.write_text("[]")
    assert run_cli("serialize-table", str(table)) == 0
    assert capsys.readouterr().out == "\n"


def test_serialize_table_rejects_non_list(tmp_path, capsys):
    table = tmp_path / "bad.json"
    table.write_text('{"rows": []}')
    assert run_cli("serialize-table", str(table)) == 2
    assert "list" in capsys.readouterr().err


# --- templates ---------------------------------------------------------


def test_templates_lists_the_catalog(capsys):
    assert run_cli("templates") == 0
    out = capsys.readouterr().out
    assert "14 templates" in out
    assert "== finpyt [finqa,tatqa]" in out


def test_templates_json(capsys):
    assert run_cli("templates", "--json") == 0
    catalog = json.loads(capsys.readouterr().out)
    assert len(catalog) == 14
    assert {"name", "datasets", "mode", "stage", "template_text"} <= set(catalog[0])


# --- entry points ------------------------------------------------------


def test_missing_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        run_cli()
    assert excinfo.value.code == 2


@pytest.mark.skipif(shutil.which("finzero") is None, reason="console script not installed")
def test_console_script_smoke():
    proc = subprocess.run(
        ["finzero", "exec-dsl", "multiply(2770, 21.96)"],
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode == 0
    assert proc.stdout == "60829.20000\n"
