"""Binary checkpoint archive for model parameters.

Byte layout, little-endian throughout:

  offset 0   8 bytes   magic b"DRNNCKP1"
  offset 8   u32       header length L in bytes
  offset 12  L bytes   UTF-8 JSON header: {"config": {...},
                        "tensors": [{"name": ..., "shape": [...]}, ...]}
  offset 12+L          the tensors' float64 data, concatenated in header
                        order, row-major, no padding

JSON keys are sorted, so identical models produce identical bytes and
checkpoints round-trip bit-exactly.  Writes go to a temp file in the
target directory followed by an atomic rename.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import DataError
from .model import MODEL_TENSOR_NAMES, Model, ModelConfig

MAGIC = b"DRNNCKP1"


def save_checkpoint(path, config_dict, tensors):
    """Write named float64 tensors plus a JSON-able config dict."""
    names = list(tensors.keys())
    header = {
        "config": config_dict,
        "tensors": [{"name": k, "shape": list(np.asarray(tensors[k]).shape)} for k in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for k in names:
                arr = np.ascontiguousarray(tensors[k], dtype=np.float64)
                fh.write(arr.astype("<f8", copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Read back (config_dict, tensors); validates magic and sizes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    if 12 + hlen > len(raw):
        raise DataError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    offset = 12 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(int(d) for d in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise DataError(f"{path}: truncated data for tensor {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after tensor data")
    return header["config"], tensors


def save_model(path, model):
    tensors = {name: model.params[name] for name in MODEL_TENSOR_NAMES}
    save_checkpoint(path, model.config.to_dict(), tensors)


def load_model(path):
    config_dict, tensors = load_checkpoint(path)
    try:
        config = ModelConfig.from_dict(config_dict)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid model config in checkpoint: {exc}") from exc
    missing = [n for n in MODEL_TENSOR_NAMES if n not in tensors]
    if missing:
        raise DataError(f"{path}: checkpoint is missing tensors {missing}")
    return Model(config, tensors)
