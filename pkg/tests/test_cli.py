import csv
import hashlib

import numpy as np
import pytest

from patchtrad.bench import forward_flops, with_window
from patchtrad.cli import main
from patchtrad.detector import ScoreSeries, write_scores
from patchtrad.ingest import LabeledTimeSeries, write_csv

from conftest import tiny_config

SMALL = """\
dataset:
  train_csv: data/train.csv
  test_csv: data/test.csv
  window: 16
patch: {patch_len: 4, stride: 3}
model: {d_model: 16, n_heads: 2, n_layers: 1, dropout: 0.1}
train: {epochs: 2, batch_size: 64, seed: 0}
bench: {window_sizes: [16], batch_size: 8, warmup: 1, iters: 3}
output_dir: runs
"""


@pytest.fixture
def workdir(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "data"), "--train-len", "400", "--test-len", "200",
                 "--modalities", "2", "--spikes", "3"]) == 0
    (tmp_path / "run.yaml").write_text(SMALL)
    return tmp_path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_synth_writes_pair(workdir):
    rows = _rows(workdir / "data" / "test.csv")
    assert rows[0] == ["s0", "s1", "label"]
    assert len(rows) == 201
    assert sum(int(r[2]) for r in rows[1:]) == 3


def test_train_score_eval(workdir, capsys):
    cfg = str(workdir / "run.yaml")
    assert main(["train", "--config", cfg]) == 0
    run = workdir / "runs"
    for name in ("checkpoint.ptad", "loss.csv", "loss.png"):
        assert (run / name).is_file()
    loss = _rows(run / "loss.csv")
    assert loss[0] == ["epoch", "loss"] and len(loss) == 3

    out = workdir / "scored"
    assert main(["score", "--checkpoint", str(run / "checkpoint.ptad"), "--test",
                 str(workdir / "data" / "test.csv"), "--label-column", "label", "--out", str(out)]) == 0
    scores = _rows(out / "scores.csv")
    assert scores[0] == ["index", "score", "label"] and len(scores) == 201
    assert (out / "scores.png").is_file()

    ev = workdir / "ev"
    assert main(["eval", "--scores", str(out / "scores.csv"), "--out", str(ev)]) == 0
    report = _rows(ev / "report.csv")
    assert report[0] == ["dataset", "auc", "n_pos", "n_neg"]
    assert report[1][2:] == ["3", "197"]
    assert (ev / "roc.png").is_file() and (ev / "report.txt").is_file()

    ev2 = workdir / "ev2"
    assert main(["eval", "--checkpoint", str(run / "checkpoint.ptad"), "--test",
                 str(workdir / "data" / "test.csv"), "--label-column", "label", "--out", str(ev2)]) == 0
    assert _rows(ev2 / "report.csv")[1][1] == report[1][1]
    assert "auc:" in capsys.readouterr().out


def test_eval_from_config(workdir):
    assert main(["eval", "--config", str(workdir / "run.yaml"), "--out", str(workdir / "e")]) == 0
    auc = float(_rows(workdir / "e" / "report.csv")[1][1])
    assert 0.0 <= auc <= 1.0


def test_train_deterministic(workdir):
    cfg = str(workdir / "run.yaml")
    a, b = workdir / "a", workdir / "b"
    assert main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert main(["train", "--config", cfg, "--out", str(b)]) == 0
    assert _sha(a / "loss.csv") == _sha(b / "loss.csv")
    assert _sha(a / "checkpoint.ptad") == _sha(b / "checkpoint.ptad")


def test_stride_above_patch_len_fails_before_output(workdir, capsys):
    out = workdir / "never"
    code = main(["train", "--config", str(workdir / "run.yaml"), "--set", "patch.stride=5", "--out", str(out)])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ConfigError:") and "\n" not in err
    assert not out.exists()


@pytest.mark.parametrize("override,code", [("train.epochs=0", 2), ("model.bogus=1", 2),
                                           ("dataset.train_csv=data/absent.csv", 3)])
def test_error_exit_codes(workdir, override, code):
    assert main(["train", "--config", str(workdir / "run.yaml"), "--set", override]) == code


def test_score_modality_mismatch(workdir, rng, capsys):
    main(["train", "--config", str(workdir / "run.yaml")])
    one = workdir / "one.csv"
    write_csv(one, LabeledTimeSeries(rng.standard_normal((30, 1)), ("x",), np.zeros(30)))
    code = main(["score", "--checkpoint", str(workdir / "runs" / "checkpoint.ptad"), "--test", str(one),
                 "--label-column", "label", "--out", str(workdir / "s")])
    assert code == 3
    assert "M=2" in capsys.readouterr().err


def test_missing_checkpoint_is_io_error(workdir):
    code = main(["score", "--checkpoint", str(workdir / "nope.ptad"), "--test",
                 str(workdir / "data" / "test.csv"), "--out", str(workdir / "s")])
    assert code == 5


def test_corrupt_checkpoint(workdir, capsys):
    bad = workdir / "bad.ptad"
    bad.write_bytes(b"XXXX" + bytes(20))
    code = main(["score", "--checkpoint", str(bad), "--test", str(workdir / "data" / "test.csv"),
                 "--out", str(workdir / "s")])
    assert code == 5
    assert "UnsupportedFormatError" in capsys.readouterr().err


def test_eval_macro_from_score_files(tmp_path):
    # each file: 10 positives, 10 negatives, AUC exactly a/100
    paths = []
    for k, target in enumerate((60, 70, 80)):
        score = np.zeros(20)
        labels = np.r_[np.ones(10), np.zeros(10)].astype(int)
        score[10:] = np.arange(10)
        # positive i beats exactly c_i negatives; sum c_i = target
        counts = np.full(10, target // 10)
        score[:10] = counts - 0.5
        paths.append(write_scores(tmp_path / f"sub{k}.csv", ScoreSeries(np.arange(20), score, labels)))
    out = tmp_path / "macro"
    assert main(["eval", "--out", str(out), "--name", "smd"] + sum((["--scores", str(p)] for p in paths), [])) == 0
    rows = _rows(out / "report.csv")
    assert [r[1] for r in rows[1:4]] == ["0.600000", "0.700000", "0.800000"]
    assert rows[-1][:2] == ["smd", "0.700000"]


def test_eval_manifest(workdir):
    (workdir / "m.yaml").write_text("name: pair\nentries:\n"
                                    "  - {name: a, train_csv: data/train.csv, test_csv: data/test.csv}\n"
                                    "  - {name: b, train_csv: data/train.csv, test_csv: data/test.csv}\n")
    cfg = workdir / "run.yaml"
    cfg.write_text(SMALL.replace("  train_csv: data/train.csv\n  test_csv: data/test.csv\n", "  manifest: m.yaml\n"))
    assert main(["eval", "--config", str(cfg), "--out", str(workdir / "e")]) == 0
    rows = _rows(workdir / "e" / "report.csv")
    assert [r[0] for r in rows[1:]] == ["a", "b", "pair"]
    # same data and seed: identical sub-results, macro equals both
    assert rows[1][1] == rows[2][1] == rows[3][1]
    assert main(["train", "--config", str(cfg), "--out", str(workdir / "t")]) == 0
    assert (workdir / "t" / "a" / "checkpoint.ptad").is_file()
    assert (workdir / "t" / "b" / "loss.csv").is_file()


def test_ablate_with_invalid_cell(workdir, capsys):
    out = workdir / "abl"
    code = main(["ablate", "--config", str(workdir / "run.yaml"), "--set", "train.epochs=1",
                 "--grid", "4:3,3:5", "--out", str(out)])
    assert code == 0
    rows = _rows(out / "ablation.csv")
    assert rows[0] == ["p_len", "stride", "auc", "status"]
    assert rows[1][:2] == ["4", "3"] and rows[1][3] == "ok" and rows[1][2]
    assert rows[2][:3] == ["3", "5", ""] and rows[2][3].startswith("skipped")
    assert (out / "ablation.png").is_file()


def test_bench_single_window(workdir, capsys):
    out = workdir / "bench"
    assert main(["bench", "--config", str(workdir / "run.yaml"), "--out", str(out)]) == 0
    rows = _rows(out / "bench.csv")
    assert rows[0] == ["window", "median_ms", "p90_ms"] and len(rows) == 2
    assert rows[1][0] == "16" and float(rows[1][1]) > 0
    assert (out / "bench.png").is_file()


def test_bench_without_config(tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--windows", "8,16", "--batch-size", "4", "--set", "bench.iters=2",
                 "--set", "bench.warmup=0", "--set", "model.d_model=8", "--set", "model.n_heads=1",
                 "--set", "patch.patch_len=4", "--set", "patch.stride=2", "--out", str(out)]) == 0
    assert len(_rows(out / "bench.csv")) == 3


def test_bench_invalid_window_before_output(tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--windows", "16,4", "--out", str(out)]) == 2
    assert not out.exists()


def test_flops_monotone_in_window():
    cfg = tiny_config(patch_len=8, stride=6, d_model=16, n_heads=2)
    flops = [forward_flops(with_window(cfg, w), 16) for w in (32, 64, 100, 128, 200)]
    assert all(a < b for a, b in zip(flops, flops[1:]))
