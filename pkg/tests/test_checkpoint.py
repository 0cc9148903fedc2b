import struct
from dataclasses import replace

import numpy as np
import pytest

from defocr.checkpoint import MAGIC, VERSION, checkpoint_load, checkpoint_save
from defocr.config import ModelConfig, RunConfig, TrainConfig
from defocr.errors import CorruptCheckpointError, UnsupportedVersionError
from defocr.model import init_params, named_parameters
from defocr.rng import SplitMix64

SMALL = ModelConfig(
    channels=(4, 4, 8, 8),
    strides=(2, 2, 2, 2),
    deformable_stages=(4,),
    d=8,
    n_heads=2,
    n_layers=1,
    d_ff=16,
    max_len=8,
)


def _small_run_cfg():
    return RunConfig(model=SMALL, train=TrainConfig(epochs=2))


def _save(tmp_path, name="model.ckpt"):
    cfg = _small_run_cfg()
    params = init_params(SplitMix64(42), cfg.model, cfg.train.dropout)
    params.dropout = replace(params.dropout, rate=0.07)
    path = tmp_path / name
    checkpoint_save(params, cfg, path)
    return params, cfg, path


def test_header_layout(tmp_path):
    _, _, path = _save(tmp_path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC == b"DOTA"
    assert struct.unpack("<I", raw[4:8])[0] == VERSION == 1
    cfg_len = struct.unpack("<I", raw[8:12])[0]
    cfg_json = raw[12 : 12 + cfg_len].decode("utf-8")
    assert cfg_json.startswith("{")
    assert '"model"' in cfg_json


def test_round_trip_restores_everything(tmp_path):
    params, cfg, path = _save(tmp_path)
    loaded, loaded_cfg = checkpoint_load(path)
    assert loaded_cfg.model == cfg.model
    assert loaded_cfg.train == cfg.train
    assert loaded.dropout.rate == params.dropout.rate
    orig = dict(named_parameters(params))
    for name, tensor in named_parameters(loaded):
        assert np.array_equal(tensor, orig[name]), name


def test_save_load_save_is_byte_identical(tmp_path):
    params, cfg, path = _save(tmp_path)
    loaded, loaded_cfg = checkpoint_load(path)
    path2 = tmp_path / "again.ckpt"
    checkpoint_save(loaded, loaded_cfg, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_rejects_bad_magic(tmp_path):
    _, _, path = _save(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"junk"
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptCheckpointError, match=r"bad magic b'junk'"):
        checkpoint_load(path)


def test_rejects_future_version(tmp_path):
    _, _, path = _save(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", VERSION + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError, match=f"version {VERSION + 1}"):
        checkpoint_load(path)


def test_truncation_names_the_field(tmp_path):
    _, _, path = _save(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[:2])
    with pytest.raises(CorruptCheckpointError, match="magic"):
        checkpoint_load(path)
    path.write_bytes(raw[:6])
    with pytest.raises(CorruptCheckpointError, match="version"):
        checkpoint_load(path)
    path.write_bytes(raw[: len(raw) - 3])
    with pytest.raises(CorruptCheckpointError, match="truncated while reading"):
        checkpoint_load(path)


def test_rejects_corrupt_embedded_config(tmp_path):
    _, _, path = _save(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[12] = ord("X")  # first byte of the JSON document
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptCheckpointError, match="bad embedded config"):
        checkpoint_load(path)


def test_rejects_missing_tensor(tmp_path):
    _, _, path = _save(tmp_path)
    raw = path.read_bytes()
    # dropout.rate trailer: u32 len + 12-byte name + u32 rank + u32 dim + 8-byte payload
    trailer = 4 + len(b"dropout.rate") + 4 + 4 + 8
    path.write_bytes(raw[: len(raw) - trailer])
    with pytest.raises(CorruptCheckpointError, match="missing \\['dropout.rate'\\]"):
        checkpoint_load(path)


def test_rejects_flipped_payload_bit_in_rate(tmp_path):
    params, cfg, path = _save(tmp_path)
    raw = bytearray(path.read_bytes())
    # corrupt the stored dropout rate to an out-of-range value
    idx = raw.rfind(b"dropout.rate") + len(b"dropout.rate") + 4 + 4
    raw[idx : idx + 8] = struct.pack("<d", 1.5)
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptCheckpointError, match="bad stored dropout rate"):
        checkpoint_load(path)


def test_loaded_params_are_usable(tmp_path):
    from defocr.model import forward

    params, _, path = _save(tmp_path)
    loaded, _ = checkpoint_load(path)
    img = np.zeros((1, SMALL.image_h, SMALL.image_w))
    a, _ = forward(img, params)
    b, _ = forward(img, loaded)
    assert np.array_equal(a, b)
