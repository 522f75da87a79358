import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from text2scene.checkpoint import (
    CheckpointError, load_checkpoint, save_checkpoint, tensor_from_bytes,
    tensor_to_bytes,
)
from text2scene.schema import ConfigError
from text2scene.training import Adam, TrainConfig, TrainingError, clip_gradients, train


def _sha(p):
    return hashlib.sha256(Path(p).read_bytes()).hexdigest()


def _cfg(corpus_dir, **kw):
    base = dict(mode="static", corpus_dir=str(corpus_dir), epochs=4,
                batch_size=16, enc_dim=24, attn_dim=24, hidden_dim=24,
                seed=0, val_interval=2)
    base.update(kw)
    return TrainConfig(**base)


def test_config_validation(tiny_corpus_dir):
    with pytest.raises(ConfigError):
        _cfg(tiny_corpus_dir, mode="bogus").validate()
    with pytest.raises(ConfigError):
        _cfg(tiny_corpus_dir, tf_ratio=1.5).validate()
    with pytest.raises(ConfigError):
        _cfg(tiny_corpus_dir, optimizer="rmsprop").validate()


def test_tensor_snapshot_roundtrip(rng):
    for shape in ((3,), (2, 4), (2, 3, 4), ()):
        arr = rng.normal(size=shape)
        back = tensor_from_bytes(tensor_to_bytes(arr))
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)


def test_snapshot_rejects_bad_magic():
    with pytest.raises(CheckpointError):
        tensor_from_bytes(b"XXXX" + b"\x00" * 20)


def test_training_writes_artifacts(tiny_corpus_dir, tmp_path):
    out = tmp_path / "run"
    summary = train(_cfg(tiny_corpus_dir), out)
    assert (out / "training_log.csv").exists()
    assert (out / "train_config.json").exists()
    assert (out / "best.ckpt").exists()
    assert (out / "last.ckpt").exists()
    lines = (out / "training_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_condA_acc,val_condB_acc,wall_time_s"
    assert len(lines) == 3  # epochs 2 and 4
    assert summary["best_val_condA_acc"] >= 0


def test_training_deterministic(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir), tmp_path / "a")
    train(_cfg(tiny_corpus_dir), tmp_path / "b")
    assert _sha(tmp_path / "a" / "last.ckpt") == _sha(tmp_path / "b" / "last.ckpt")


def test_seed_changes_results(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir), tmp_path / "a")
    train(_cfg(tiny_corpus_dir, seed=1), tmp_path / "b")
    assert _sha(tmp_path / "a" / "last.ckpt") != _sha(tmp_path / "b" / "last.ckpt")


def test_resume_is_bit_identical(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir, epochs=6), tmp_path / "full")
    train(_cfg(tiny_corpus_dir, epochs=4), tmp_path / "split")
    train(_cfg(tiny_corpus_dir, epochs=6), tmp_path / "split",
          resume=tmp_path / "split" / "last.ckpt")
    assert _sha(tmp_path / "full" / "last.ckpt") == _sha(tmp_path / "split" / "last.ckpt")
    # CSV rows match except wall time
    strip = lambda p: [",".join(l.split(",")[:4])
                       for l in (p / "training_log.csv").read_text().splitlines()]
    assert strip(tmp_path / "full") == strip(tmp_path / "split")


def test_resume_needs_training_state(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir), tmp_path / "run")
    with pytest.raises(TrainingError):
        # best.ckpt stores no optimizer state on purpose
        train(_cfg(tiny_corpus_dir, epochs=6), tmp_path / "run",
              resume=tmp_path / "run" / "best.ckpt")


def test_checkpoint_mode_mismatch(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir), tmp_path / "run")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "run" / "last.ckpt", expected_mode="animated")


def test_checkpoint_detects_corruption(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir), tmp_path / "run")
    params, cfg, vocab, schema, weights, _ = load_checkpoint(tmp_path / "run" / "last.ckpt")
    import zipfile
    src = tmp_path / "run" / "last.ckpt"
    dst = tmp_path / "corrupt.ckpt"
    with zipfile.ZipFile(src) as zin, zipfile.ZipFile(dst, "w") as zout:
        for item in zin.infolist():
            blob = zin.read(item.filename)
            if item.filename == "tensors/emb.bin":
                blob = blob[:-8] + b"\x00" * 8
            zout.writestr(item, blob)
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(dst)


def test_checkpoint_bytes_are_deterministic(tiny_corpus_dir, tmp_path):
    train(_cfg(tiny_corpus_dir), tmp_path / "a")
    params, cfg, vocab, schema, weights, _ = load_checkpoint(tmp_path / "a" / "best.ckpt")
    save_checkpoint(tmp_path / "c1.ckpt", params, cfg, vocab, schema, weights)
    save_checkpoint(tmp_path / "c2.ckpt", params, cfg, vocab, schema, weights)
    assert _sha(tmp_path / "c1.ckpt") == _sha(tmp_path / "c2.ckpt")


def test_loss_decreases_early(tiny_corpus_dir, tmp_path):
    out = tmp_path / "run"
    train(_cfg(tiny_corpus_dir, epochs=12, lr=3e-3, val_interval=12), out)
    rows = (out / "training_log.csv").read_text().splitlines()[1:]
    # single logged row at epoch 12: compare via a fresh 1-epoch run
    out2 = tmp_path / "short"
    train(_cfg(tiny_corpus_dir, epochs=1, lr=3e-3, val_interval=1), out2)
    first = float((out2 / "training_log.csv").read_text().splitlines()[1].split(",")[1])
    last = float(rows[-1].split(",")[1])
    assert last < first


def test_clip_gradients_scales_to_max_norm(rng):
    from text2scene import autodiff as ad
    params = {"w": ad.parameter(rng.normal(size=(4, 4)))}
    params["w"].grad = np.full((4, 4), 10.0)
    norm = clip_gradients(params, 5.0)
    assert norm == pytest.approx(40.0)
    assert np.linalg.norm(params["w"].grad) == pytest.approx(5.0)


def test_adam_state_roundtrip(rng):
    from text2scene import autodiff as ad
    params = {"w": ad.parameter(rng.normal(size=(3,)))}
    opt = Adam(1e-3)
    params["w"].grad = np.ones(3)
    opt.step(params)
    arrays = opt.state_arrays()
    opt2 = Adam(1e-3)
    opt2.load_state(arrays)
    assert opt2.t == 1
    assert np.array_equal(opt2.m["w"], opt.m["w"])
    assert np.array_equal(opt2.v["w"], opt.v["w"])


def test_corpus_mode_mismatch_raises(tiny_corpus_dir, tmp_path):
    with pytest.raises(ConfigError, match="mode"):
        train(_cfg(tiny_corpus_dir, mode="animated"), tmp_path / "run")
