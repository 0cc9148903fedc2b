import json
import os

import numpy as np
import pytest

from defocr.checkpoint import checkpoint_save
from defocr.cli import main
from defocr.config import ModelConfig, RunConfig, TrainConfig
from defocr.data import read_pgm
from defocr.encoder import sinusoidal_pe
from defocr.model import init_params
from defocr.rng import SplitMix64

TINY_MODEL = {
    "channels": [4, 4, 8, 8],
    "strides": [2, 2, 2, 2],
    "deformable_stages": [4],
    "d": 8,
    "n_heads": 2,
    "n_layers": 1,
    "d_ff": 16,
    "max_len": 8,
}


def _write_config(tmp_path, name="run.json", **sections):
    doc = {"model": dict(TINY_MODEL)}
    doc.update(sections)
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _write_lexicon(tmp_path, words, name="words.txt"):
    path = tmp_path / name
    path.write_text("".join(w + "\n" for w in words), encoding="utf-8")
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _steered_checkpoint(tmp_path, word="state"):
    """Checkpoint whose decoder outputs `word` for any input image."""
    from defocr.alphabet import encode_target

    model = ModelConfig(
        channels=(4, 4, 8, 8),
        strides=(2, 2, 2, 2),
        deformable_stages=(4,),
        d=8,
        n_heads=2,
        n_layers=0,
        d_ff=16,
        max_len=8,
    )
    cfg = RunConfig(model=model, train=TrainConfig(epochs=1))
    params = init_params(SplitMix64(0), model)
    params.embed[:] = 0.0
    params.head_b[:] = 0.0
    pe = sinusoidal_pe(model.max_len, model.d)
    target = np.zeros((model.max_len, params.head_b.size))
    labels = encode_target(word, model.max_len)
    target[np.arange(model.max_len), labels] = 5.0
    params.head_w[:] = np.linalg.solve(pe, target)
    path = tmp_path / "steered.ckpt"
    checkpoint_save(params, cfg, path)
    return str(path)


# ------------------------------------------------------------ gen


def test_gen_writes_count_samples(tmp_path, capsys):
    lex = _write_lexicon(tmp_path, ["meat", "state"])
    out = tmp_path / "data"
    code, stdout, stderr = _run(
        capsys, "gen", "--lexicon", lex, "--out-dir", str(out), "--count", "10"
    )
    assert code == 0
    assert stdout == ""
    assert "10 samples" in stderr
    pgms = sorted(p.name for p in out.glob("*.pgm"))
    assert len(pgms) == 10
    assert pgms[0] == "img_00000.pgm"
    lines = (out / "labels.tsv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 10
    assert all(line.split("\t")[1] in ("meat", "state") for line in lines)


def test_gen_same_seed_is_byte_identical(tmp_path, capsys):
    lex = _write_lexicon(tmp_path, ["meat", "state", "carp"])
    dirs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _, _ = _run(
            capsys,
            "gen", "--lexicon", lex, "--out-dir", str(out),
            "--count", "6", "--seed", "9",
        )
        assert code == 0
        dirs.append(out)
    files_a = sorted(p.name for p in dirs[0].iterdir())
    files_b = sorted(p.name for p in dirs[1].iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_gen_count_zero_writes_empty_index(tmp_path, capsys):
    lex = _write_lexicon(tmp_path, ["meat"])
    out = tmp_path / "empty"
    code, _, _ = _run(
        capsys, "gen", "--lexicon", lex, "--out-dir", str(out), "--count", "0"
    )
    assert code == 0
    assert (out / "labels.tsv").read_bytes() == b""


def test_gen_missing_lexicon_exits_2(tmp_path, capsys):
    code, _, stderr = _run(
        capsys,
        "gen", "--lexicon", str(tmp_path / "nope.txt"),
        "--out-dir", str(tmp_path / "d"), "--count", "1",
    )
    assert code == 2
    assert stderr.startswith("error:")


def test_gen_paths_from_config(tmp_path, capsys):
    lex = _write_lexicon(tmp_path, ["meat"])
    out = tmp_path / "cfgdata"
    cfg = _write_config(
        tmp_path, paths={"lexicon": lex, "out_dir": str(out)}
    )
    code, _, _ = _run(capsys, "gen", "--config", cfg, "--count", "3")
    assert code == 0
    assert len(list(out.glob("*.pgm"))) == 3


def test_gen_flag_overrides_config_path(tmp_path, capsys):
    lex = _write_lexicon(tmp_path, ["meat"])
    cfg = _write_config(
        tmp_path, paths={"lexicon": lex, "out_dir": str(tmp_path / "ignored")}
    )
    out = tmp_path / "flagged"
    code, _, _ = _run(
        capsys, "gen", "--config", cfg, "--out-dir", str(out), "--count", "2"
    )
    assert code == 0
    assert len(list(out.glob("*.pgm"))) == 2
    assert not (tmp_path / "ignored").exists()


# ------------------------------------------------------------ train


def _gen_dataset(tmp_path, capsys, name, words, count, seed):
    lex = _write_lexicon(tmp_path, words, name=f"{name}.txt")
    out = tmp_path / name
    code, _, _ = _run(
        capsys,
        "gen", "--lexicon", lex, "--out-dir", str(out),
        "--count", str(count), "--seed", str(seed),
    )
    assert code == 0
    return str(out)


def test_train_smoke_writes_checkpoint_and_metrics(tmp_path, capsys):
    data = _gen_dataset(tmp_path, capsys, "train", ["meat", "state"], 4, 1)
    val = _gen_dataset(tmp_path, capsys, "val", ["meat", "state"], 2, 2)
    ckpt = tmp_path / "model.ckpt"
    cfg = _write_config(tmp_path, train={"epochs": 2, "batch_size": 2})
    code, stdout, stderr = _run(
        capsys,
        "train", "--config", cfg, "--data", data, "--val", val,
        "--out-checkpoint", str(ckpt),
    )
    assert code == 0
    assert ckpt.is_file()
    assert str(ckpt) in stderr
    rows = [json.loads(line) for line in stdout.splitlines()]
    assert len(rows) == 2
    for i, row in enumerate(rows):
        assert row["epoch"] == i + 1
        assert set(row) == {
            "epoch", "train_loss", "val_loss", "val_acc", "dropout_rate", "lr"
        }


def test_train_missing_index_exits_2(tmp_path, capsys):
    val = _gen_dataset(tmp_path, capsys, "val2", ["meat"], 2, 3)
    code, _, stderr = _run(
        capsys,
        "train", "--data", str(tmp_path / "absent"), "--val", val,
        "--out-checkpoint", str(tmp_path / "x.ckpt"),
    )
    assert code == 2
    assert "labels.tsv" in stderr


def test_train_malformed_tsv_names_line(tmp_path, capsys):
    data = _gen_dataset(tmp_path, capsys, "bad", ["meat"], 2, 4)
    with open(os.path.join(data, "labels.tsv"), "a", encoding="utf-8") as fh:
        fh.write("oops\n")
    code, _, stderr = _run(
        capsys,
        "train", "--data", data, "--val", data,
        "--out-checkpoint", str(tmp_path / "x.ckpt"),
    )
    assert code == 2
    assert "line 3" in stderr


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exits_3(tmp_path, capsys):
    data = _gen_dataset(tmp_path, capsys, "div", ["meat", "state"], 4, 5)
    cfg = _write_config(
        tmp_path, train={"epochs": 5, "batch_size": 2, "lr": 1e12}
    )
    code, _, stderr = _run(
        capsys,
        "train", "--config", cfg, "--data", data, "--val", data,
        "--out-checkpoint", str(tmp_path / "x.ckpt"),
    )
    assert code == 3
    assert "non-finite loss" in stderr
    assert "batch seed" in stderr
    assert not (tmp_path / "x.ckpt").exists()


# ------------------------------------------------------------ eval


def test_eval_perfect_predictions(tmp_path, capsys):
    ckpt = _steered_checkpoint(tmp_path, "state")
    data = _gen_dataset(tmp_path, capsys, "states", ["state"], 5, 6)
    code, stdout, _ = _run(capsys, "eval", "--checkpoint", ckpt, "--data", data)
    assert code == 0
    doc = json.loads(stdout)
    assert doc == {"n": 5, "word_accuracy": 1.0, "with_lexicon": False, "crf": True}


def test_eval_flags_show_in_output(tmp_path, capsys):
    ckpt = _steered_checkpoint(tmp_path, "state")
    data = _gen_dataset(tmp_path, capsys, "states2", ["state"], 2, 7)
    lex = _write_lexicon(tmp_path, ["state", "meat"], name="eval_lex.txt")
    code, stdout, _ = _run(
        capsys,
        "eval", "--checkpoint", ckpt, "--data", data,
        "--lexicon", lex, "--ablate-crf",
    )
    assert code == 0
    doc = json.loads(stdout)
    assert doc["with_lexicon"] is True
    assert doc["crf"] is False
    assert doc["word_accuracy"] == 1.0


def test_eval_corrupt_checkpoint_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"junkjunkjunk")
    data = _gen_dataset(tmp_path, capsys, "states3", ["state"], 1, 8)
    code, _, stderr = _run(capsys, "eval", "--checkpoint", str(bad), "--data", data)
    assert code == 2
    assert "bad magic" in stderr


# ------------------------------------------------------------ recognize


def test_recognize_prints_decoded_string(tmp_path, capsys):
    ckpt = _steered_checkpoint(tmp_path, "state")
    data = _gen_dataset(tmp_path, capsys, "one", ["meat"], 1, 9)
    image = os.path.join(data, "img_00000.pgm")
    code, stdout, _ = _run(capsys, "recognize", "--checkpoint", ckpt, "--image", image)
    assert code == 0
    assert stdout == "state\n"


def test_recognize_lexicon_correction(tmp_path, capsys):
    ckpt = _steered_checkpoint(tmp_path, "parishan")
    data = _gen_dataset(tmp_path, capsys, "one2", ["meat"], 1, 10)
    image = os.path.join(data, "img_00000.pgm")
    lex = _write_lexicon(tmp_path, ["PARISIAN", "BROTHERS"], name="signs.txt")
    code, stdout, _ = _run(
        capsys,
        "recognize", "--checkpoint", ckpt, "--image", image, "--lexicon", lex,
    )
    assert code == 0
    assert stdout == "PARISIAN\n"


def test_recognize_wrong_dims_exits_2(tmp_path, capsys):
    from defocr.data import write_pgm

    ckpt = _steered_checkpoint(tmp_path)
    small = tmp_path / "small.pgm"
    write_pgm(small, np.zeros((16, 64)))
    code, _, stderr = _run(
        capsys, "recognize", "--checkpoint", ckpt, "--image", str(small)
    )
    assert code == 2
    assert "image is 64x16, expected 128x32" in stderr


def test_recognize_missing_checkpoint_exits_2(tmp_path, capsys):
    data = _gen_dataset(tmp_path, capsys, "one3", ["meat"], 1, 11)
    image = os.path.join(data, "img_00000.pgm")
    code, _, stderr = _run(
        capsys,
        "recognize", "--checkpoint", str(tmp_path / "ghost.ckpt"),
        "--image", image,
    )
    assert code == 2
    assert stderr.startswith("error:")


# ------------------------------------------------------------ saliency


def test_saliency_writes_valid_pgm(tmp_path, capsys):
    ckpt = _steered_checkpoint(tmp_path)
    data = _gen_dataset(tmp_path, capsys, "one4", ["meat"], 1, 12)
    image = os.path.join(data, "img_00000.pgm")
    out = tmp_path / "heat.pgm"
    code, stdout, stderr = _run(
        capsys,
        "saliency", "--checkpoint", ckpt, "--image", image, "--out", str(out),
    )
    assert code == 0
    assert str(out) in stderr
    heat = read_pgm(out)
    assert heat.shape == (32, 128)
    assert heat.min() >= 0.0
    assert heat.max() <= 1.0


# ------------------------------------------------------------ determinism


def test_eval_reruns_byte_identical(tmp_path, capsys):
    ckpt = _steered_checkpoint(tmp_path, "state")
    data = _gen_dataset(tmp_path, capsys, "rerun", ["state", "meat"], 4, 13)
    outs = []
    for _ in range(2):
        code, stdout, _ = _run(capsys, "eval", "--checkpoint", ckpt, "--data", data)
        assert code == 0
        outs.append(stdout)
    assert outs[0] == outs[1]
