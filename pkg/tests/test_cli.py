import json
from pathlib import Path

from sctpcheck.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION_FAILURE, main
from sctpcheck.experiments import ambiguity_demo, trace_to_json
from sctpcheck.check import Lasso


def test_ambiguity_demo_command(capsys):
    rc = main(["ambiguity-demo"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "final: A=Closed B=Established" in out
    assert "with the correct interpretation" in out


def test_explore_command(capsys):
    rc = main(["explore"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "states=5202" in out
    assert "deadlocks=0" in out


def test_render_trace_command(tmp_path, capsys):
    labels, states = ambiguity_demo(misinterpret=True)
    lasso = Lasso(
        states=tuple(states) + (states[-1],),
        labels=tuple(labels) + (labels[-1],),
        cycle_start=len(states) - 1,
    )
    path = tmp_path / "trace.json"
    path.write_text(json.dumps(trace_to_json(lasso, {})))
    rc = main(["render-trace", str(path)])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "Attacker" in out

    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["render-trace", str(bad)]) == EXIT_USAGE


def test_usage_error_exit_code():
    assert main(["no-such-command"]) == EXIT_USAGE


def test_config_file_merging(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"patch": "on"}))
    rc = main(["explore", "--config", str(cfg)])
    assert rc == EXIT_OK
