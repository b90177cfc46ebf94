"""
Binary model files.

Layout (little endian)::

    magic "SPDMODEL" | uint32 version | sha256(payload) | payload
    payload = uint64 header length | header JSON | raw tensor bytes

The header lists every tensor (name, dtype, shape, byte offset) in name order
plus a free-form JSON ``meta`` dict; JSON is written with sorted keys, so
identical content always gives identical bytes.
"""
import hashlib
import json
import os
import struct
from typing import Dict, Tuple

import numpy as np
import torch
from fvcore.common.checkpoint import Checkpointer
from fvcore.common.file_io import PathManager

__all__ = [
    "MODEL_FORMAT_VERSION",
    "ModelFormatError",
    "ChecksumError",
    "encode_model_file",
    "decode_model_file",
    "save_model",
    "load_model",
    "SpdCheckpointer",
]

MAGIC = b"SPDMODEL"
MODEL_FORMAT_VERSION = 1
MODEL_SUFFIX = ".spdm"

_PREFIX = struct.Struct("<8sI32s")
_HEADER_LEN = struct.Struct("<Q")
_DTYPES = {
    "float64": (torch.float64, np.dtype("<f8")),
    "int64": (torch.int64, np.dtype("<i8")),
}


class ModelFormatError(ValueError):
    pass


class ChecksumError(ModelFormatError):
    pass


def _dtype_name(t: torch.Tensor) -> str:
    for name, (torch_dtype, _) in _DTYPES.items():
        if t.dtype == torch_dtype:
            return name
    raise ModelFormatError("cannot store tensors of dtype {}".format(t.dtype))


def encode_model_file(tensors: Dict[str, torch.Tensor], meta: dict) -> bytes:
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        dtype = _dtype_name(t)
        blob = t.numpy().astype(_DTYPES[dtype][1], copy=False).tobytes()
        entries.append(
            {"name": name, "dtype": dtype, "shape": list(t.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"meta": meta, "tensors": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    payload = _HEADER_LEN.pack(len(header)) + header + b"".join(blobs)
    return _PREFIX.pack(MAGIC, MODEL_FORMAT_VERSION, hashlib.sha256(payload).digest()) + payload


def decode_model_file(data: bytes) -> Tuple[Dict[str, torch.Tensor], dict]:
    if len(data) < _PREFIX.size + _HEADER_LEN.size:
        raise ChecksumError("truncated model file ({} bytes)".format(len(data)))
    magic, version, digest = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            "model file version {} is not supported (expected {})".format(
                version, MODEL_FORMAT_VERSION
            )
        )
    payload = data[_PREFIX.size :]
    if hashlib.sha256(payload).digest() != digest:
        raise ChecksumError("model file checksum mismatch (corrupted or truncated)")

    (header_len,) = _HEADER_LEN.unpack_from(payload)
    start = _HEADER_LEN.size
    header = json.loads(payload[start : start + header_len].decode("utf-8"))
    body = payload[start + header_len :]
    tensors = {}
    for entry in header["tensors"]:
        torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
        raw = body[entry["offset"] : entry["offset"] + entry["nbytes"]]
        array = np.frombuffer(raw, dtype=np_dtype).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(array.copy()).to(torch_dtype)
    return tensors, header["meta"]


def save_model(path: str, tensors: Dict[str, torch.Tensor], meta: dict) -> None:
    dirname = os.path.dirname(path)
    if dirname:
        PathManager.mkdirs(dirname)
    with PathManager.open(path, "wb") as f:
        f.write(encode_model_file(tensors, meta))


def load_model(path: str) -> Tuple[Dict[str, torch.Tensor], dict]:
    with PathManager.open(path, "rb") as f:
        return decode_model_file(f.read())


class SpdCheckpointer(Checkpointer):
    """
    Same as :class:`Checkpointer`, but writes the model weights in the binary
    model format (``.spdm``) with ``meta`` plus the save kwargs (e.g. the
    iteration) in the header. Native ``.pth`` checkpoints still load.
    """

    def __init__(self, model, save_dir="", *, save_to_disk=True, meta=None, **checkpointables):
        super().__init__(model, save_dir, save_to_disk=save_to_disk, **checkpointables)
        self.meta = dict(meta or {})

    def save(self, name: str, **kwargs) -> None:
        if not self.save_dir or not self.save_to_disk:
            return
        basename = "{}{}".format(name, MODEL_SUFFIX)
        save_file = os.path.join(self.save_dir, basename)
        self.logger.info("Saving checkpoint to {}".format(save_file))
        meta = dict(self.meta)
        meta.update(kwargs)
        save_model(save_file, self.model.state_dict(), meta)
        self.tag_last_checkpoint(basename)

    def _load_file(self, filename: str):
        if filename.endswith(MODEL_SUFFIX):
            tensors, meta = load_model(filename)
            model = {k[len("model.") :]: v for k, v in tensors.items() if k.startswith("model.")}
            if not model:
                model = tensors
            checkpoint = {k: v for k, v in meta.items() if k != "model"}
            checkpoint["model"] = model
            return checkpoint
        loaded = super()._load_file(filename)
        if "model" not in loaded:
            loaded = {"model": loaded}
        return loaded
