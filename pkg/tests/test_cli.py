import json
import re
import time

import pytest

from codecontrast.cli import SEED_ENV, build_parser, effective_seed, main
from codecontrast.errors import ConfigError
from codecontrast.pairgen import read_jsonl, read_records

SMALL = "iterations = 1\nwarmup_steps = 10\ndisc_steps = 3\ndual_steps = 3\ntop_k = 8\nbatch_size = 4\nd_model = 16\nn_layers = 1\nn_heads = 2\nd_ff = 32\n"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


@pytest.fixture
def toy_dir(tmp_path, capsys):
    assert run(["gen-toy", "--families", "2", "--per-family", "10", "--out", tmp_path / "toy"], capsys)[0] == 0
    return tmp_path / "toy"


@pytest.fixture
def trained(tmp_path, toy_dir, capsys):
    (tmp_path / "run.cfg").write_text(SMALL)
    pairs = tmp_path / "pairs.jsonl"
    assert run(["build-pairs", "--input", toy_dir / "train.jsonl", "--strategy", "asst+comment", "--out", pairs], capsys)[0] == 0
    model = tmp_path / "model"
    argv = ["train", "--pairs", pairs, "--corpus", toy_dir / "train.jsonl", "--config", tmp_path / "run.cfg", "--out-dir", model]
    assert run(argv, capsys)[0] == 0
    return model


def _subparsers(parser):
    action = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    return action.choices


def test_help_lists_every_flag_with_default():
    for name, sub in _subparsers(build_parser()).items():
        text = " ".join(sub.format_help().split())
        flags = [a for a in sub._actions if a.option_strings and a.dest != "help"]
        for action in flags:
            assert action.option_strings[-1] in text, (name, action.dest)
            assert action.help, (name, action.dest)
        assert text.count("(default:") == len(flags), name


def test_gen_toy_outputs(toy_dir):
    assert len(read_records(toy_dir / "records.jsonl")) == 20
    assert len(read_records(toy_dir / "heldout.jsonl")) == 4
    task = read_jsonl(toy_dir / "task_comment_to_code.jsonl")
    assert task[0]["kind"] == "comment_to_code"
    assert (toy_dir / "families.tsv").read_text().count("\n") == 20


def test_seed_env_overrides_flag(tmp_path, capsys, monkeypatch):
    assert run(["gen-toy", "--per-family", "10", "--seed", "7", "--out", tmp_path / "a"], capsys)[0] == 0
    monkeypatch.setenv(SEED_ENV, "7")
    assert run(["gen-toy", "--per-family", "10", "--seed", "1", "--out", tmp_path / "b"], capsys)[0] == 0
    assert (tmp_path / "a/records.jsonl").read_bytes() == (tmp_path / "b/records.jsonl").read_bytes()
    assert effective_seed(3) == 7
    monkeypatch.setenv(SEED_ENV, "seven")
    with pytest.raises(ConfigError):
        effective_seed(3)
    code, _, err = run(["gen-toy", "--out", tmp_path / "c"], capsys)
    assert code != 0 and err.startswith("ConfigError:") and err.count("\n") == 1


def test_build_pairs_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, err = run(["build-pairs", "--input", empty, "--out", tmp_path / "p.jsonl"], capsys)
    assert code != 0
    assert err.startswith("EmptyOutput:") and err.count("\n") == 1


def test_build_pairs_report_and_output(tmp_path, toy_dir, capsys):
    code, out, _ = run(["build-pairs", "--input", toy_dir / "records.jsonl", "--strategy", "ict-line", "--out", tmp_path / "p.jsonl"], capsys)
    assert code == 0
    assert re.match(r"attempted=20 produced=\d+ skipped=\d+", out)
    rows = read_jsonl(tmp_path / "p.jsonl")
    assert rows and all(r["strategy"] == "ict_line" for r in rows)


@pytest.mark.parametrize(
    "argv, prefix",
    [
        (["build-pairs", "--input", "{tmp}/missing.jsonl", "--out", "{tmp}/p.jsonl"], "FileNotFound:"),
        (["build-pairs", "--input", "{tmp}/bad.jsonl", "--out", "{tmp}/p.jsonl"], "InvalidInput:"),
        (["build-pairs", "--input", "{tmp}/norecord.jsonl", "--out", "{tmp}/p.jsonl"], "InvalidInput:"),
        (["build-pairs", "--input", "{tmp}/bad.jsonl", "--strategy", "nope", "--out", "{tmp}/p.jsonl"], "InvalidInput:"),
        (["train", "--pairs", "{tmp}/p.jsonl", "--corpus", "{tmp}/p.jsonl", "--config", "{tmp}/bad.cfg", "--out-dir", "{tmp}/m"], "ConfigError:"),
    ],
)
def test_errors_are_one_line(tmp_path, capsys, argv, prefix):
    (tmp_path / "bad.jsonl").write_text('{"id": "a", "code": "def f(): return 1"}\nnot json\n')
    (tmp_path / "norecord.jsonl").write_text('{"id": "r7", "code": ""}\n')
    (tmp_path / "bad.cfg").write_text("bogus = 1\n")
    (tmp_path / "p.jsonl").write_text("")
    code, _, err = run([a.format(tmp=tmp_path) for a in argv], capsys)
    assert code != 0
    assert err.startswith(prefix) and err.count("\n") == 1, err


def test_error_messages_name_the_record(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text('{"id": "a", "code": "def f(): return 1"}\nnot json\n')
    (tmp_path / "norecord.jsonl").write_text('{"id": "r7", "code": ""}\n')
    err = run(["build-pairs", "--input", tmp_path / "bad.jsonl", "--out", tmp_path / "p"], capsys)[2]
    assert "bad.jsonl:2" in err
    err = run(["build-pairs", "--input", tmp_path / "norecord.jsonl", "--out", tmp_path / "p"], capsys)[2]
    assert "r7" in err


def test_usage_error_prints_synopsis(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"model.ckpt", "model.iter1.ckpt", "vocab.txt", "metrics.csv", "config.txt", "training_curves.png"} <= names
    assert (trained / "metrics.csv").read_text().splitlines()[0] == "step,phase,loss,lambda,iteration"


def test_eval_and_search(tmp_path, toy_dir, trained, capsys):
    code, out, _ = run(["eval", "--model", trained, "--task", toy_dir / "task_code_to_code.jsonl", "--out", tmp_path / "rep"], capsys)
    assert code == 0 and "code_to_code" in out and "map_at_r" in out
    assert {"code_to_code.csv", "code_to_code.summary.txt", "code_to_code.ranks.png"} <= {p.name for p in (tmp_path / "rep").iterdir()}

    queries = tmp_path / "q.txt"
    queries.write_text("sort the list\n\nsum of numbers\n")
    code, out, _ = run(["search", "--model", trained, "--corpus", toy_dir / "records.jsonl", "--query-file", queries, "--k", "3"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "query\trank\tid\tscore" and len(lines) == 7
    scores = [float(l.split("\t")[3]) for l in lines[1:4]]
    assert scores == sorted(scores, reverse=True)

    queries.write_text("\n  \n")
    code, _, err = run(["search", "--model", trained, "--corpus", toy_dir / "records.jsonl", "--query-file", queries], capsys)
    assert code != 0 and err.startswith("EmptyOutput:")


def test_commands_idempotent(tmp_path, toy_dir, trained, capsys):
    task = toy_dir / "task_comment_to_code.jsonl"
    for d in ("r1", "r2"):
        assert run(["eval", "--model", trained, "--task", task, "--out", tmp_path / d], capsys)[0] == 0
    assert (tmp_path / "r1/comment_to_code.csv").read_bytes() == (tmp_path / "r2/comment_to_code.csv").read_bytes()


def test_ablation_command_smoke(tmp_path, capsys):
    argv = ["ablation", "--families", "2", "--per-family", "20", "--seeds", "0", "--pretrain-steps", "3",
            "--finetune-steps", "2", "--iterations", "0", "--out", tmp_path / "abl"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    summary = json.loads(out.strip().splitlines()[-1])
    assert set(summary["median_mrr"]) == {"warmup_only", "asst", "asst_comment", "soft_labeled"}
    assert {"ablation.csv", "ablation_mrr.png", "ablation_code_map.png"} <= {p.name for p in (tmp_path / "abl").iterdir()}


def test_full_default_recipe_under_ten_minutes(tmp_path, capsys):
    start = time.perf_counter()
    d = tmp_path
    steps = [
        ["gen-toy", "--out", d / "toy"],
        ["build-pairs", "--input", d / "toy/train.jsonl", "--strategy", "asst+comment", "--out", d / "pairs.jsonl"],
        ["train", "--pairs", d / "pairs.jsonl", "--corpus", d / "toy/train.jsonl", "--out-dir", d / "model"],
        ["eval", "--model", d / "model", "--task", d / "toy/task_comment_to_code.jsonl", "--out", d / "rep"],
    ]
    for argv in steps:
        assert run(argv, capsys)[0] == 0, argv
    secs = time.perf_counter() - start
    print(f"default recipe: {secs:.0f}s")
    assert secs < 600
