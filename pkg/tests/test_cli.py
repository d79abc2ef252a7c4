import json
from pathlib import Path

import pytest

from newsrec.cli import main
from newsrec.synthetic import ActivitySpec, generate_activity

from fixtures import tiny_setup

CONFIG = """[data]
news = {news}
train_behaviors = {train}
val_behaviors = {val}
[model]
d_w = 12
n_f = 12
d_a = 6
d_c = 6
d_att = 6
predictor_hidden = 8
[train]
epochs = 2
lr = 0.002
batch_size = 16
[output]
out = {out}
"""


@pytest.fixture
def run(tmp_path):
    tiny = tiny_setup(tmp_path / "data")
    path = tmp_path / "run.ini"
    path.write_text(CONFIG.format(news=tiny.news_path, train=tiny.train_path, val=tiny.val_path,
                                  out=tmp_path / "out"))
    return path, tiny


def test_train_smoke(run, tmp_path):
    path, _ = run
    assert main(["train", "--config", str(path)]) == 0
    out = tmp_path / "out"
    for name in ("metrics.csv", "timing.csv", "val_report.json", "val_predictions.txt",
                 "checkpoints/best.ckpt", "checkpoints/epoch_002.ckpt", "config.ini"):
        assert (out / name).is_file(), name
    report = json.loads((out / "val_report.json").read_text())
    assert set(report["metrics"]) == {"auc", "mrr", "ndcg@5", "ndcg@10"}
    assert set(report["skipped"]) == set(report["metrics"])


def test_train_rerun_byte_identical(run, tmp_path):
    path, _ = run
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    for name in ("metrics.csv", "val_report.json", "val_predictions.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_changes_run(run, tmp_path):
    path, _ = run
    main(["train", "--config", str(path), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a/metrics.csv").read_bytes() != (tmp_path / "b/metrics.csv").read_bytes()


def test_missing_behaviors_exit_3(run, tmp_path, capsys):
    path, _ = run
    missing = tmp_path / "nope.tsv"
    assert main(["train", "--config", str(path), "--train_behaviors", str(missing)]) == 3
    assert str(missing) in capsys.readouterr().err


def test_bad_config_exit_2(run):
    path, _ = run
    assert main(["train", "--config", str(path), "--window", "2"]) == 2
    assert main(["train", "--config", str(path) + ".missing"]) == 2


def test_eval_and_errors(run, tmp_path):
    path, tiny = run
    assert main(["train", "--config", str(path)]) == 0
    ckpt = str(tmp_path / "out/checkpoints/best.ckpt")
    ev = tmp_path / "ev"
    assert main(["eval", "--checkpoint", ckpt, "--behaviors", str(tiny.val_path), "--out", str(ev)]) == 0
    # eval on the same split reproduces the training-time report
    train_report = json.loads((tmp_path / "out/val_report.json").read_text())
    eval_report = json.loads((ev / "eval_report.json").read_text())
    assert eval_report["metrics"] == train_report["metrics"]
    assert main(["eval", "--config", str(path), "--checkpoint", ckpt, "--out", str(ev)]) == 0
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    assert main(["eval", "--checkpoint", ckpt, "--behaviors", str(empty), "--out", str(ev)]) == 3
    assert main(["eval", "--checkpoint", ckpt, "--n_f", "8", "--out", str(ev)]) == 5
    assert main(["eval", "--config", str(path), "--checkpoint", ckpt, "--predictor", "dot",
                 "--out", str(ev)]) == 5


def _predict(tmp_path, ckpt, cands, history="N1 N2", k=5):
    (tmp_path / "h.txt").write_text(history)
    (tmp_path / "c.txt").write_text(cands)
    return main(["predict", "--checkpoint", ckpt, "--history", str(tmp_path / "h.txt"),
                 "--candidates", str(tmp_path / "c.txt"), "--top_k", str(k),
                 "--out", str(tmp_path / "pred")])


def test_predict(run, tmp_path, capsys):
    path, _ = run
    main(["train", "--config", str(path)])
    capsys.readouterr()
    ckpt = str(tmp_path / "out/checkpoints/best.ckpt")
    assert _predict(tmp_path, ckpt, "N3 N4 N5", k=10) == 0
    first = capsys.readouterr().out
    lines = first.strip().splitlines()
    assert len(lines) == 4                       # header + every candidate (k clamped)
    scores = [float(l.split()[-1]) for l in lines[1:]]
    assert scores == sorted(scores, reverse=True)
    assert _predict(tmp_path, ckpt, "N3 N4 N5", k=10) == 0
    assert capsys.readouterr().out == first
    assert _predict(tmp_path, ckpt, "N3 N4 N5", k=2) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 3
    assert _predict(tmp_path, ckpt, "N3 X9 X1") == 3
    assert "X1 X9" in capsys.readouterr().err


def test_sample_tiny_and_stats(tmp_path):
    news, beh = generate_activity(ActivitySpec()).write(tmp_path / "mind")
    args = ["sample-tiny", "--news", str(news), "--behaviors", str(beh)]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("news.tsv", "behaviors.tsv", "stats_summary.csv", "news_clicks.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    clicks = [int(l.split(",")[1]) for l in (tmp_path / "a/news_clicks.csv").read_text().splitlines()[1:]]
    assert clicks and min(clicks) >= 150 and clicks == sorted(clicks, reverse=True)
    assert main(["stats", "--news", str(tmp_path / "a/news.tsv"), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s/length_histogram.csv").is_file()
    assert main(["sample-tiny", "--news", str(news), "--behaviors", str(tmp_path / "x.tsv"),
                 "--out", str(tmp_path / "c")]) == 3


def test_outputs_stay_under_out(run, tmp_path):
    path, _ = run
    before = {p for p in Path(tmp_path).rglob("*")}
    main(["train", "--config", str(path)])
    new = {p for p in Path(tmp_path).rglob("*")} - before
    assert new and all((tmp_path / "out") in p.parents or p == tmp_path / "out" for p in new)
