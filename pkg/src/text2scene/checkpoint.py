"""Versioned checkpoint container.

A checkpoint is a zip archive with a JSON header plus one binary snapshot per
tensor. Snapshot layout: magic b"TSNP", u32 version, u32 ndim, u64 extents,
little-endian float64 payload. Entry hashes live in the header, so corruption
and schema/version mismatches are detected at load time. Zip timestamps are
pinned, making checkpoint bytes a pure function of their contents.
"""
from __future__ import annotations

import hashlib
import json
import zipfile

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import ModelConfig, Vocab
from .schema import FeatureSchema, feature_schema

FORMAT_VERSION = 1
_MAGIC = b"TSNP"
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)  # keeps 0-d shape intact
    header = _MAGIC + np.array([1, arr.ndim], dtype="<u4").tobytes()
    extents = np.array(arr.shape, dtype="<u8").tobytes()
    return header + extents + arr.astype("<f8").tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != _MAGIC:
        raise CheckpointError("bad tensor snapshot magic")
    version, ndim = np.frombuffer(blob[4:12], dtype="<u4")
    if version != 1:
        raise CheckpointError(f"unsupported snapshot version {version}")
    shape = tuple(np.frombuffer(blob[12: 12 + 8 * ndim], dtype="<u8").astype(int))
    data = np.frombuffer(blob[12 + 8 * ndim:], dtype="<f8").reshape(shape)
    return data.copy()


def save_checkpoint(path, params: dict[str, Tensor], config: ModelConfig,
                    vocab: Vocab, schema: FeatureSchema,
                    class_weights: dict[str, np.ndarray],
                    training_state: dict | None = None) -> None:
    entries: dict[str, bytes] = {}
    for name, tensor in sorted(params.items()):
        entries[f"tensors/{name}.bin"] = tensor_to_bytes(tensor.data)
    opt_arrays = {}
    if training_state:
        for name, arr in sorted(training_state.get("arrays", {}).items()):
            entries[f"optimizer/{name}.bin"] = tensor_to_bytes(arr)
            opt_arrays[name] = True
    meta = {
        "format_version": FORMAT_VERSION,
        "mode": config.mode,
        "model_config": config.to_dict(),
        "vocab": list(vocab.tokens),
        "class_weights": {k: list(map(float, v)) for k, v in class_weights.items()},
        "training_state": (
            {k: v for k, v in training_state.items() if k != "arrays"}
            if training_state else None),
        "hashes": {name: hashlib.sha256(blob).hexdigest()
                   for name, blob in entries.items()},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_EPOCH)
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for name, blob in entries.items():
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            zf.writestr(info, blob)


def load_checkpoint(path, expected_mode: str | None = None):
    """Returns (params, config, vocab, schema, class_weights, training_state)."""
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {meta.get('format_version')} unsupported")
        if expected_mode is not None and meta["mode"] != expected_mode:
            raise CheckpointError(
                f"checkpoint mode {meta['mode']!r} does not match {expected_mode!r}")
        blobs = {}
        for name, digest in meta["hashes"].items():
            blob = zf.read(name)
            if hashlib.sha256(blob).hexdigest() != digest:
                raise CheckpointError(f"checksum mismatch for {name}")
            blobs[name] = blob
    config = ModelConfig(**meta["model_config"])
    vocab = Vocab(tokens=tuple(meta["vocab"]))
    schema = feature_schema(config.mode)
    class_weights = {k: np.asarray(v) for k, v in meta["class_weights"].items()}
    params = {}
    opt_arrays = {}
    for name, blob in blobs.items():
        arr = tensor_from_bytes(blob)
        if name.startswith("tensors/"):
            params[name[len("tensors/"):-4]] = ad.parameter(arr)
        elif name.startswith("optimizer/"):
            opt_arrays[name[len("optimizer/"):-4]] = arr
    training_state = meta.get("training_state")
    if training_state is not None:
        training_state = dict(training_state)
        training_state["arrays"] = opt_arrays
    return params, config, vocab, schema, class_weights, training_state
