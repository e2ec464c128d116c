import csv
import json
from pathlib import Path

import pytest

from conftest import write_synthetic_human_csv
from mergesim.cli import build_parser, main
from mergesim.metrics import rows_from_trials, write_human_csv, write_step_csv
from mergesim.runner import load_trials

DEMO = Path(__file__).resolve().parents[1] / "configs" / "demo.toml"


def test_simulate_demo_config(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(DEMO), "--agent", "heuristic", "--reps", "5", "--out", str(out)]) == 0
    assert len((out / "trials.jsonl").read_text().splitlines()) == 55
    assert "wrote 55 trials" in capsys.readouterr().out


def test_cli_flag_overrides_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[experiment]\nrepetitions = 3\nvariant = "a2"\n')
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--reps", "1", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["spec"]["repetitions"] == 1 and manifest["spec"]["variant"] == "a2"


def test_missing_data_file(tmp_path, capsys):
    assert main(["analyze", "--data", str(tmp_path / "missing.jsonl")]) == 2
    assert "file not found" in capsys.readouterr().err


def test_unknown_flag_suggests(capsys):
    assert main(["simulate", "--repz", "5"]) == 1
    err = capsys.readouterr().err
    assert "unrecognized" in err and "--reps" in err


def test_unknown_subcommand(capsys):
    assert main(["simulat"]) == 1


def test_bad_config_is_runtime_error(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[experiment]\nrepetitons = 3\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "repetitons" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["simulate", "analyze", "ablate", "replay", "import-human"])
def test_help_documents_every_flag(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.option_strings and action.help is None:
            pytest.fail(f"{action.option_strings} has no help text")


class TestImportHuman:
    def test_header_only_warns(self, tmp_path, capsys):
        src = tmp_path / "h.csv"
        src.write_text("trial_id,h,dv,outcome,gap_at_merge,rmse_left,rmse_right,collided\n")
        assert main(["import-human", "--csv", str(src), "--out", str(tmp_path / "o")]) == 0
        assert "no trials" in capsys.readouterr().err

    def test_missing_column(self, tmp_path, capsys):
        src = tmp_path / "h.csv"
        src.write_text("trial_id,h,outcome,gap_at_merge,rmse_left,rmse_right,collided\n")
        assert main(["import-human", "--csv", str(src), "--out", str(tmp_path / "o")]) == 2
        assert "dv" in capsys.readouterr().err

    def test_human_import_then_analyze(self, tmp_path, capsys):
        src = tmp_path / "human.csv"
        write_synthetic_human_csv(src)
        assert main(["import-human", "--csv", str(src), "--out", str(tmp_path / "h")]) == 0
        assert json.loads((tmp_path / "h" / "manifest.json").read_text())["trial_count"] == 990
        assert main(["analyze", "--data", str(tmp_path / "h"), "--out", str(tmp_path / "r")]) == 0
        with (tmp_path / "r" / "quantitative.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[1] == ["Human", "990", "962", "2.83", "3.85", "0.66", "53.0"]


def test_source_agnostic_analysis(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--reps", "3", "--out", str(sim)]) == 0
    trials = load_trials(sim)
    write_human_csv(rows_from_trials(trials), tmp_path / "export.csv")
    write_step_csv(trials, tmp_path / "steps.csv")
    assert main(["import-human", "--csv", str(tmp_path / "export.csv"), "--steps", str(tmp_path / "steps.csv"),
                 "--out", str(tmp_path / "imported")]) == 0
    assert main(["analyze", "--data", str(sim), "--out", str(tmp_path / "r1")]) == 0
    assert main(["analyze", "--data", str(tmp_path / "imported"), "--out", str(tmp_path / "r2")]) == 0
    for f in sorted((tmp_path / "r1").iterdir()):
        assert f.read_bytes() == (tmp_path / "r2" / f.name).read_bytes(), f.name


def test_ablate_eight_variants(tmp_path, capsys):
    runs = tmp_path / "out"
    for v in ["baseline", "a1", "a2", "a3", "a4", "a5", "a6", "a7"]:
        assert main(["simulate", "--variant", v, "--reps", "1", "--out", str(runs / v)]) == 0
    human = tmp_path / "human.csv"
    write_synthetic_human_csv(human)
    assert main(["ablate", "--runs", str(runs / "*"), "--reference", str(human), "--out", str(tmp_path / "r")]) == 0
    with (tmp_path / "r" / "indicators.csv").open() as fh:
        table = list(csv.reader(fh))
    assert [r[0] for r in table[1:]] == ["Human", "Baseline", "A1", "A2", "A3", "A4", "A5", "A6", "A7"]
    assert all(len(r) == 7 for r in table)


def test_ablate_nothing_matched(tmp_path, capsys):
    assert main(["ablate", "--runs", str(tmp_path / "nothing*")]) == 2


def test_replay_subcommand(tmp_path):
    tape, rec = tmp_path / "tape.jsonl", tmp_path / "rec"
    assert main(["simulate", "--agent", "llm:mock/random", "--reps", "1", "--record", str(tape),
                 "--out", str(rec)]) == 0
    assert main(["replay", "--dataset", str(rec), "--cassette", str(tape), "--out", str(tmp_path / "rep")]) == 0
    assert (rec / "trials.jsonl").read_bytes() == (tmp_path / "rep" / "trials.jsonl").read_bytes()


def test_replay_missing_cassette(tmp_path, capsys):
    assert main(["simulate", "--reps", "1", "--replay", str(tmp_path / "none.jsonl"),
                 "--out", str(tmp_path / "o")]) == 2
