"""Self-describing checkpoint files.

Layout (all integers little-endian)::

    bytes 0-7     magic b"MHSERCK1"
    bytes 8-15    uint64 header length H
    bytes 16-16+H UTF-8 JSON header (sorted keys)
    remainder     float64 ('<f8') tensor payload, row-major, concatenated

The header echoes the estimator parameters, carries the vocabulary and its
SHA-256, and lists every tensor as {name, shape, offset, count} where offset
counts float64 elements from the start of the payload.
"""

from __future__ import annotations

import json
import struct

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .data import EMOTIONS, Vocabulary
from .estimator import EmotionClassifier

MAGIC = b"MHSERCK1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, estimator, extra=None):
    check_is_fitted(estimator, "network_")
    params = estimator.network_.params
    table, offset = [], 0
    for name, p in params.items():
        table.append({"name": name, "shape": list(p.shape), "offset": offset, "count": int(p.size)})
        offset += int(p.size)
    vocab = estimator.vocabulary_
    header = {
        "format": FORMAT_VERSION,
        "estimator": estimator.get_params(),
        "d_audio_in": estimator.d_audio_in_,
        "vocabulary": vocab.tokens,
        "vocab_sha256": vocab.digest,
        "best_epoch": estimator.best_epoch_,
        "tensors": table,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Header dict and name -> array mapping."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (length,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + length].decode("utf-8"))
    if header.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format {header.get('format')}")
    payload = np.frombuffer(raw, dtype="<f8", offset=16 + length)
    tensors = {}
    for entry in header["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size:
            raise CheckpointError(f"{path}: truncated payload at {entry['name']}")
        tensors[entry["name"]] = payload[start : start + count].reshape(entry["shape"]).astype(np.float64)
    return header, tensors


def load_checkpoint(path):
    """Rebuild a fitted EmotionClassifier."""
    header, tensors = read_checkpoint(path)
    vocab = Vocabulary(list(header["vocabulary"]))
    if vocab.digest != header["vocab_sha256"]:
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    est = EmotionClassifier(**header["estimator"])
    est._build(header["d_audio_in"], vocab)
    est.network_.load_state_dict(tensors)
    est.best_epoch_ = header.get("best_epoch")
    est.classes_ = np.array(EMOTIONS)
    return est
