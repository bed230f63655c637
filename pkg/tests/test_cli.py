"""Command-line contract: subcommands, artifacts, exit codes."""

import csv
import json
import os

from skillforge.cli import main

GOLDEN = os.path.join(os.path.dirname(__file__), "..", "golden")


def test_play_writes_curve_and_figure(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    code = main(["play", "--skill", "tower_disassembly", "--episodes", "120",
                 "--seed", "42", "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 120
    assert set(rows[0]) == {"episode", "outcome", "running_mean"}
    assert (tmp_path / "curve.png").exists()
    assert "trailing" in capsys.readouterr().out


def test_run_golden_program_exit_zero(tmp_path, capsys):
    code = main(["run", "--program", os.path.join(GOLDEN, "simple_grasp.ast.json"),
                 "--scenario", "flat", "--seed", "5", "--predicate", "object_held"])
    assert code == 0
    out = capsys.readouterr().out
    assert "execution record" in out and "success" in out


def test_run_domain_failure_exit_one(tmp_path):
    doc = {"ast_version": 1, "root": {"kind": "sequence", "children": [
        {"kind": "hardware", "names": ["left_arm", "left_hand", "camera"]},
        {"kind": "loop", "count": 4,
         "body": {"kind": "behaviour", "behaviour": "pick_and_place", "params": {}}},
    ]}}
    path = tmp_path / "over.ast.json"
    path.write_text(json.dumps(doc))
    code = main(["run", "--program", str(path), "--scenario", "tower", "--seed", "1"])
    # towers are at most three boxes tall, so the fourth pick grabs at nothing
    assert code == 1


def test_usage_error_exit_two(capsys):
    assert main(["play"]) == 2          # missing --skill
    assert main(["no-such-command"]) == 2


def test_diagnose_prints_argmax(tmp_path, capsys):
    out_dir = tmp_path / "report"
    code = main(["diagnose", "--inject", "set_stiffness", "--budget", "15",
                 "--seed", "7", "--out-dir", str(out_dir)])
    assert code == 0
    out = capsys.readouterr().out
    assert "blame argmax: set_stiffness" in out
    assert (out_dir / "blame.csv").exists()
    assert (out_dir / "blame.png").exists()
    assert (out_dir / "session.csv").exists()
    with open(out_dir / "blame.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["hypothesis"] == "set_stiffness"
    posteriors = [float(r["posterior"]) for r in rows]
    assert posteriors == sorted(posteriors, reverse=True)


def test_diagnose_localizes_widely_shared_function(capsys):
    code = main(["diagnose", "--inject", "plan_cartesian", "--budget", "15",
                 "--seed", "7"])
    assert code == 0
    assert "blame argmax: plan_cartesian" in capsys.readouterr().out


def test_probe_doa_output(capsys):
    code = main(["probe-doa", "--skill", "book_grasping"])
    assert code == 0
    out = capsys.readouterr().out
    assert "domain of applicability: 1/4" in out


def test_probe_doa_after_training(capsys):
    code = main(["probe-doa", "--skill", "tower_disassembly", "--trained",
                 "--episodes", "300", "--seed", "42"])
    assert code == 0
    assert "domain of applicability: 3/3" in capsys.readouterr().out


def test_export_ecm(tmp_path, capsys):
    out = tmp_path / "ecm.json"
    code = main(["export", "--skill", "tower_disassembly", "--what", "ecm",
                 "--episodes", "120", "--seed", "42", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["ecm_version"] == 1 and doc["skill"] == "tower_disassembly"
    assert (tmp_path / "ecm.png").exists()
    assert (tmp_path / "ecm.csv").exists()
