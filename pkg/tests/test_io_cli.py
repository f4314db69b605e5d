import hashlib
import re

import numpy as np
import pytest

from fpquality import io
from fpquality.cli import main
from fpquality.errors import DataError
from fpquality.fusion import UNIFORM5
from fpquality.neuralnet import load_model
from fpquality.pipeline import classify, rank_all
from fpquality.synth import SynthConfig, generate

TINY = ["--subjects", "6", "--impostors", "40", "--max-runs", "15", "--seed", "7"]


@pytest.fixture(scope="module")
def tiny():
    return generate(SynthConfig(subjects=6, impostors_per_sample=40, seed=7))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# file round trips -------------------------------------------------------------

def test_scores_round_trip(tiny, tmp_path):
    p = tmp_path / "scores.csv"
    io.write_scores(p, tiny.samples, tiny.score_tables(), tiny.gallery, "# test")
    back = io.read_scores(p)
    assert sorted(back) == tiny.matcher_names
    for m, t in back.items():
        assert t.samples == tiny.samples
        assert np.array_equal(t.genuine, tiny.genuine[m], equal_nan=True)
        assert np.array_equal(t.impostor, tiny.impostor[m])


def test_features_and_latent_round_trip(tiny, tmp_path):
    io.write_features(tmp_path / "f.csv", tiny.samples, tiny.features, None)
    samples, x = io.read_features(tmp_path / "f.csv")
    assert samples == tiny.samples and np.array_equal(x, tiny.features)
    io.write_latent(tmp_path / "q.csv", tiny.samples, tiny.quality, None)
    q = io.read_latent(tmp_path / "q.csv")
    assert [q[s] for s in tiny.samples] == tiny.quality.tolist()


def test_ranks_and_labels_round_trip(tiny, tmp_path):
    q = rank_all(tiny.score_tables())
    io.write_ranks(tmp_path / "r.csv", q, None)
    ranks, nms = io.read_ranks(tmp_path / "r.csv")
    for m, mq in q.items():
        assert ranks[m] == mq.rank_map()
        assert nms[m] == mq.value_map("nms")
    labels, _ = classify(q, UNIFORM5)
    io.write_labels(tmp_path / "l.csv", labels, None)
    assert io.read_labels(tmp_path / "l.csv") == {l.sample: l.class_label for l in labels}


def test_float_format():
    assert io.fmt_float(0.1) == "0.1"
    assert io.fmt_float(float("nan")) == ""
    assert io.fmt_float(float("-inf")) == "-inf"
    x = 1 / 3
    assert float(io.fmt_float(x)) == x


def test_header_format():
    h = io.header_line(42, {"b": 2, "a": 1})
    assert re.fullmatch(r"# fpquality \S+ seed=42 config=[0-9a-f]{64}", h)
    assert h == io.header_line(42, {"a": 1, "b": 2})
    assert h != io.header_line(42, {"a": 1, "b": 3})


def test_malformed_rows_report_line(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("# hdr\nsubject,finger,imprint,fused_rank,class\ns1,s1_f0,0,1.0,1\ns1,s1_f0,1,2.0,x\n")
    with pytest.raises(DataError) as info:
        io.read_labels(p)
    assert info.value.line == 4
    p.write_text("subject,finger,imprint,fused_rank,class\ns1,s1_f0,0,1.0\n")
    with pytest.raises(DataError) as info:
        io.read_labels(p)
    assert info.value.line == 2
    p.write_text("subject,finger,imprint,class\n")
    with pytest.raises(DataError):
        io.read_labels(p)


def test_scores_validation(tiny, tmp_path):
    p = tmp_path / "scores.csv"
    io.write_scores(p, tiny.samples, tiny.score_tables(), tiny.gallery, None)
    lines = p.read_text().splitlines()
    # turn an impostor row into a same-subject comparison
    k = next(i for i, l in enumerate(lines) if l.endswith(",impostor"))
    f = lines[k].split(",")
    f[4] = f[1]
    p.write_text("\n".join(lines[:k] + [",".join(f)] + lines[k + 1:]) + "\n")
    with pytest.raises(DataError) as info:
        io.read_scores(p)
    assert info.value.line == k + 1
    # drop a genuine row
    j = next(i for i, l in enumerate(lines) if l.endswith(",genuine"))
    p.write_text("\n".join(lines[:j] + lines[j + 1:]) + "\n")
    with pytest.raises(DataError):
        io.read_scores(p)


# command line ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["run", "--out-dir", str(d), "--classes", "uniform5", *TINY]) == 0
    return d


def test_run_writes_everything(run_dir):
    names = {"scores.csv", "features.csv", "latent.csv", "ranks.csv", "labels.csv", "model.json", "history.csv",
             "predictions.csv", "det_perfect.csv", "det_naive.csv", "det_trained.csv", "eer.csv",
             "deviation.csv", "correlation_nms.csv"}
    assert names <= {p.name for p in run_dir.iterdir()}


def test_run_is_byte_identical(run_dir, tmp_path):
    assert main(["run", "--out-dir", str(tmp_path), "--classes", "uniform5", *TINY]) == 0
    for p in run_dir.iterdir():
        assert digest(p) == digest(tmp_path / p.name), p.name


def test_every_csv_has_header(run_dir):
    for p in run_dir.glob("*.csv"):
        assert p.read_text().startswith("# fpquality "), p.name


def test_commands_step_by_step(run_dir, tmp_path):
    common = [*TINY, "--classes", "uniform5", "--out-dir", str(tmp_path)]
    assert main(["synth", *common]) == 0
    assert digest(tmp_path / "scores.csv") == digest(run_dir / "scores.csv")
    scores, feats = str(tmp_path / "scores.csv"), str(tmp_path / "features.csv")
    assert main(["rank", "--scores", scores, *common]) == 0
    assert main(["classify", "--ranks", str(tmp_path / "ranks.csv"), *common]) == 0
    assert digest(tmp_path / "labels.csv") == digest(run_dir / "labels.csv")
    labels = str(tmp_path / "labels.csv")
    assert main(["train", "--features", feats, "--labels", labels, *common]) == 0
    model = str(tmp_path / "model.json")
    assert main(["predict", "--features", feats, "--model", model, *common]) == 0
    assert digest(tmp_path / "predictions.csv") == digest(run_dir / "predictions.csv")
    assert main(["evaluate", "--scores", scores, "--labels", labels, "--features", feats, "--model", model,
                 *common]) == 0
    assert digest(tmp_path / "eer.csv") == digest(run_dir / "eer.csv")


def test_classify_from_scores_matches_ranks(run_dir, tmp_path):
    assert main(["classify", "--scores", str(run_dir / "scores.csv"), "--classes", "uniform5",
                 "--out-dir", str(tmp_path), *TINY]) == 0
    assert digest(tmp_path / "labels.csv") == digest(run_dir / "labels.csv")


def test_class_fractions_override(run_dir, tmp_path):
    assert main(["classify", "--ranks", str(run_dir / "ranks.csv"), "--classes", "uniform5",
                 "--class-fractions", "0.5,0.5", "--out-dir", str(tmp_path), *TINY]) == 0
    assert set(io.read_labels(tmp_path / "labels.csv").values()) == {1, 2}
    assert main(["classify", "--ranks", str(run_dir / "ranks.csv"), "--class-fractions", "0.5,0.6",
                 "--out-dir", str(tmp_path)]) == 2


def test_eer_file_content(run_dir):
    frame, _ = io.read_csv(run_dir / "eer.csv", ["selection", "eer"], {"eer": "float"})
    eer = dict(zip(frame["selection"], frame["eer"]))
    assert set(eer) == {"perfect", "naive", "trained"}
    assert all(0 < v < 0.5 for v in eer.values())
    assert (run_dir / "det_naive.csv").read_text().rstrip().splitlines()[-1] == f"# eer={io.fmt_float(eer['naive'])}"


def test_missing_out_dir(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path / "nope"), *TINY]) == 2


def test_missing_input(tmp_path):
    assert main(["rank", "--scores", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path)]) == 2


def test_bad_choice_is_usage_error(tmp_path):
    assert main(["classify", "--classes", "uniform7", "--out-dir", str(tmp_path)]) == 2


def test_malformed_input_exit_code(run_dir, tmp_path, capsys):
    lines = (run_dir / "labels.csv").read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0] + ",oops"
    bad = tmp_path / "labels.csv"
    bad.write_text("\n".join(lines) + "\n")
    code = main(["train", "--features", str(run_dir / "features.csv"), "--labels", str(bad), "--classes", "uniform5",
                 "--out-dir", str(tmp_path), *TINY])
    assert code == 3
    assert "labels.csv:6:" in capsys.readouterr().err


def test_config_file_and_override(run_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny\nseed = 7\nclasses = nfiq5\nsubjects = 6\nimpostors = 40\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    out1.mkdir()
    out2.mkdir()
    assert main(["classify", "--config", str(cfg), "--ranks", str(run_dir / "ranks.csv"), "--out-dir", str(out1)]) == 0
    assert set(io.read_labels(out1 / "labels.csv").values()) == {1, 2, 3, 4, 5}
    assert main(["classify", "--config", str(cfg), "--classes", "uniform5", "--ranks", str(run_dir / "ranks.csv"),
                 "--out-dir", str(out2), "--seed", "7"]) == 0
    assert digest(out2 / "labels.csv") != digest(out1 / "labels.csv")
    assert (out2 / "labels.csv").read_bytes().split(b"\n", 1)[1] == (run_dir / "labels.csv").read_bytes().split(b"\n", 1)[1]


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["synth", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def test_train_chain_scg_then_bfgs(run_dir, tmp_path):
    args = ["--features", str(run_dir / "features.csv"), "--labels", str(run_dir / "labels.csv"),
            "--classes", "uniform5", *TINY]
    first, second = tmp_path / "scg.json", tmp_path / "bfgs.json"
    assert main(["train", *args, "--out-dir", str(tmp_path), "--model", str(first)]) == 0
    assert main(["train", *args, "--out-dir", str(tmp_path), "--optimizer", "bfgs", "--init-model", str(first),
                 "--model", str(second)]) == 0
    a, b = load_model(first), load_model(second)
    assert b.train_config_echo["optimizer"] == "bfgs"
    assert np.array_equal(a.transform.mean, b.transform.mean)
