import os
import struct

import pytest
import torch

from spdmotion.checkpoint import (
    ChecksumError,
    ModelFormatError,
    SpdCheckpointer,
    load_model,
    save_model,
)
from spdmotion.checkpoint.model_checkpoint import decode_model_file, encode_model_file
from spdmotion.modeling import build_model


def sample_tensors():
    return {
        "fc.weight": torch.randn(3, 6, dtype=torch.float64),
        "fc.bias": torch.zeros(3, dtype=torch.float64),
        "counts": torch.arange(4),
    }


def test_encode_decode_identity():
    tensors, meta = sample_tensors(), {"kind": "classifier", "classes": ["a", "b"]}
    data = encode_model_file(tensors, meta)
    assert data[:8] == b"SPDMODEL"
    decoded, decoded_meta = decode_model_file(data)
    assert decoded_meta == meta
    assert set(decoded) == set(tensors)
    for name, t in tensors.items():
        assert torch.equal(decoded[name], t) and decoded[name].dtype == t.dtype
    assert encode_model_file(decoded, decoded_meta) == data


def test_insertion_order_does_not_change_bytes():
    tensors = sample_tensors()
    reordered = dict(reversed(list(tensors.items())))
    assert encode_model_file(tensors, {"b": 1, "a": 2}) == encode_model_file(reordered, {"a": 2, "b": 1})


def test_truncated_or_corrupted_files():
    data = encode_model_file(sample_tensors(), {})
    with pytest.raises(ChecksumError):
        decode_model_file(data[:-1])
    with pytest.raises(ChecksumError):
        decode_model_file(data[:10])
    flipped = bytearray(data)
    flipped[-1] ^= 0xFF
    with pytest.raises(ChecksumError):
        decode_model_file(bytes(flipped))


def test_bad_magic_and_version():
    data = encode_model_file(sample_tensors(), {})
    with pytest.raises(ModelFormatError, match="magic"):
        decode_model_file(b"NOTMODEL" + data[8:])
    bumped = data[:8] + struct.pack("<I", 2) + data[12:]
    with pytest.raises(ModelFormatError, match="version 2"):
        decode_model_file(bumped)


def test_unsupported_dtype():
    with pytest.raises(ModelFormatError, match="dtype"):
        encode_model_file({"w": torch.zeros(2, dtype=torch.float32)}, {})


def test_save_load_save_is_byte_identical(tmp_path):
    first, second = str(tmp_path / "a" / "m.spdm"), str(tmp_path / "b.spdm")
    save_model(first, sample_tensors(), {"window_size": 21})
    tensors, meta = load_model(first)
    save_model(second, tensors, meta)
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()


def test_checkpointer_round_trip(cfg, scheme, tmp_path):
    model = build_model(cfg, scheme)
    checkpointer = SpdCheckpointer(model, str(tmp_path), meta={"kind": "classifier"})
    checkpointer.save("model_final", iteration=7)
    path = os.path.join(str(tmp_path), "model_final.spdm")
    assert os.path.isfile(path)
    assert checkpointer.get_checkpoint_file() == path

    _, meta = load_model(path)
    assert meta == {"kind": "classifier", "iteration": 7}

    other = build_model(cfg, scheme)
    extra = SpdCheckpointer(other).load(path)
    assert extra["iteration"] == 7
    for (name, p), (_, q) in zip(model.state_dict().items(), other.state_dict().items()):
        assert torch.equal(p, q), name


def test_checkpointer_without_dir_writes_nothing(cfg, scheme, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    SpdCheckpointer(build_model(cfg, scheme), "").save("model_final")
    assert os.listdir(str(tmp_path)) == []
