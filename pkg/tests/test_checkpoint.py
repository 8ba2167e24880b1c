import json
import struct

import numpy as np
import pytest

from drnn.checkpoint import MAGIC, load_checkpoint, load_model, save_checkpoint, save_model
from drnn.errors import DataError
from drnn.model import MODEL_TENSOR_NAMES, ModelConfig, init_model, predict_sequence
from drnn.numerics import RandomSource


def _model(seed=0):
    return init_model(ModelConfig(input_dim=3, state_dim=4, classes=2, order=1), seed)


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "m.ckpt"
    cfg = {"alpha": 1, "beta": [1, 2, 3]}
    tensors = {
        "a": RandomSource(1).uniform(-1, 1, 12).reshape(3, 4),
        "b": np.array([2.5]),
        "c": RandomSource(2).uniform(-1, 1, 8).reshape(2, 2, 2),
    }
    save_checkpoint(path, cfg, tensors)
    cfg2, tensors2 = load_checkpoint(path)
    assert cfg2 == cfg
    assert set(tensors2) == set(tensors)
    for k in tensors:
        assert np.array_equal(tensors[k], tensors2[k])
        assert tensors2[k].dtype == np.float64


def test_checkpoint_bytes_deterministic(tmp_path):
    model = _model(seed=3)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_model(p1, model)
    save_model(p2, model)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_layout(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"k": 1}, {"w": np.arange(6, dtype=np.float64).reshape(2, 3)})
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    assert header["config"] == {"k": 1}
    assert header["tensors"] == [{"name": "w", "shape": [2, 3]}]
    data = np.frombuffer(raw, dtype="<f8", offset=12 + hlen)
    assert np.array_equal(data, np.arange(6.0))


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(path, _model())
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTAFILE"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="magic"):
        load_checkpoint(path)


def test_load_rejects_truncation_and_trailing(tmp_path):
    path = tmp_path / "m.ckpt"
    save_model(path, _model())
    raw = path.read_bytes()

    path.write_bytes(raw[:10])
    with pytest.raises(DataError):
        load_checkpoint(path)

    path.write_bytes(raw[:-16])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(path)

    path.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(DataError, match="trailing"):
        load_checkpoint(path)


def test_load_rejects_corrupt_header_json(tmp_path):
    path = tmp_path / "m.ckpt"
    blob = b"{not json"
    path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob)
    with pytest.raises(DataError, match="header"):
        load_checkpoint(path)


def test_model_round_trip_preserves_predictions(tmp_path):
    model = _model(seed=9)
    X = RandomSource(10).uniform(-1, 1, 18).reshape(6, 3)
    before = predict_sequence(model, X)
    path = tmp_path / "m.ckpt"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.config == model.config
    for name in MODEL_TENSOR_NAMES:
        assert np.array_equal(loaded.params[name], model.params[name])
    after = predict_sequence(loaded, X)
    assert np.array_equal(before.p, after.p)


def test_load_model_rejects_missing_tensor(tmp_path):
    model = _model()
    tensors = {name: model.params[name] for name in MODEL_TENSOR_NAMES if name != "b_y"}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model.config.to_dict(), tensors)
    with pytest.raises(DataError, match="missing"):
        load_model(path)


def test_load_model_rejects_bad_config(tmp_path):
    model = _model()
    tensors = {name: model.params[name] for name in MODEL_TENSOR_NAMES}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"state_dim": 4}, tensors)
    with pytest.raises(DataError, match="config"):
        load_model(path)
