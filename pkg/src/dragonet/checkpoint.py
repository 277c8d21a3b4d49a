"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"DRAGONET"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length H in bytes
    16      H     UTF-8 JSON header, keys sorted, padded with spaces so
                  that 16 + H is a multiple of 8
    16+H    ...   tensor payload: float64 little-endian, row-major, one
                  tensor after another in header order

The header holds ``model_config``, ``scenario``, ``vocab_sha256``,
``taxonomy_sha256`` and ``tensors``: a list of ``{"name", "shape",
"offset"}`` entries where ``offset`` counts bytes from the payload start.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from dragonet.errors import DataError
from dragonet.model import DragoNet, ModelConfig
from dragonet.taxonomy import Taxonomy
from dragonet.text import Vocabulary

MAGIC = b"DRAGONET"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def vocab_digest(vocab: Vocabulary) -> str:
    return hashlib.sha256(vocab.dumps().encode("utf-8")).hexdigest()


def dumps(model: DragoNet) -> bytes:
    tensors = []
    offset = 0
    for name, arr in model.params.items():
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "model_config": model.config.to_dict(),
        "scenario": model.scenario,
        "taxonomy_sha256": model.taxonomy.digest(),
        "tensors": tensors,
        "vocab_sha256": vocab_digest(model.vocab),
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    raw += b" " * (-(len(raw) + _PREFIX.size) % 8)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in model.params.values())
    return _PREFIX.pack(MAGIC, VERSION, len(raw)) + raw + payload


def loads(blob: bytes, vocab: Vocabulary, taxonomy: Taxonomy) -> DragoNet:
    if len(blob) < _PREFIX.size:
        raise DataError("checkpoint: truncated file")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise DataError("checkpoint: bad magic")
    if version != VERSION:
        raise DataError(f"checkpoint: unsupported version {version}")
    header = json.loads(blob[_PREFIX.size : _PREFIX.size + hlen].decode("utf-8"))
    if header["vocab_sha256"] != vocab_digest(vocab):
        raise DataError("checkpoint: vocabulary does not match the one used for training")
    if header["taxonomy_sha256"] != taxonomy.digest():
        raise DataError("checkpoint: taxonomy does not match the one used for training")
    config = ModelConfig.from_dict(header["model_config"])
    start = _PREFIX.size + hlen
    params = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        lo = start + t["offset"]
        if lo + count * 8 > len(blob):
            raise DataError(f"checkpoint: tensor {t['name']!r} runs past end of file")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=lo)
        params[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
    return DragoNet(config, params, vocab, taxonomy, header["scenario"])


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def save(path, model: DragoNet) -> None:
    atomic_write(path, dumps(model))


def load(path, vocab: Vocabulary, taxonomy: Taxonomy) -> DragoNet:
    return loads(Path(path).read_bytes(), vocab, taxonomy)
