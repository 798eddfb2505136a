"""Model checkpoints: one JSON header line, then little-endian float32 arrays."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .model import ModelConfig, NMTModel

MAGIC = "morphnmt-checkpoint"
VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_checkpoint(model: NMTModel, path, vocab_hashes: dict[str, str] | None = None, extra: dict | None = None):
    config = model.config.to_dict()
    manifest, chunks, offset = [], [], 0
    for name, p in model.params.items():
        raw = np.ascontiguousarray(p.data, dtype=_DTYPE).tobytes()
        manifest.append({"name": name, "shape": list(p.data.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": MAGIC,
        "version": VERSION,
        "variant": model.variant,
        "seed": model.config.seed,
        "config": config,
        "config_hash": _config_hash(config),
        "vocab_sizes": {"source": model.config.src_vocab_size, "char": model.config.char_vocab_size,
                        "label": model.config.label_vocab_size},
        "vocab_hashes": dict(sorted((vocab_hashes or {}).items())),
        "extra": extra or {},
        "params": manifest,
        "data_bytes": offset,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for raw in chunks:
            fh.write(raw)


def read_checkpoint(path) -> tuple[dict, bytes]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    if header.get("format") != MAGIC:
        raise CheckpointError(f"{path}: not a morphnmt checkpoint")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    data = blob[nl + 1:]
    if len(data) != header["data_bytes"]:
        raise CheckpointError(f"{path}: expected {header['data_bytes']} data bytes, found {len(data)} (truncated?)")
    if _config_hash(header["config"]) != header["config_hash"]:
        raise CheckpointError(f"{path}: config hash mismatch")
    return header, data


def load_into(model: NMTModel, path, vocab_hashes: dict[str, str] | None = None) -> dict:
    """Fill ``model`` from a checkpoint whose manifest must match it exactly."""
    header, data = read_checkpoint(path)
    names = [e["name"] for e in header["params"]]
    if names != model.params.names():
        missing = sorted(set(model.params.names()) - set(names))
        unexpected = sorted(set(names) - set(model.params.names()))
        raise CheckpointError(f"{path}: parameter manifest mismatch (missing {missing}, unexpected {unexpected})")
    if header["variant"] != model.variant:
        raise CheckpointError(f"{path}: checkpoint holds variant {header['variant']!r}, model is {model.variant!r}")
    for key, expected in (vocab_hashes or {}).items():
        found = header["vocab_hashes"].get(key)
        if found != expected:
            raise CheckpointError(f"{path}: {key} vocabulary hash mismatch")
    values = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        p = model.params[entry["name"]]
        if shape != p.data.shape:
            raise CheckpointError(f"{path}: {entry['name']} has shape {shape}, model expects {p.data.shape}")
        end = entry["offset"] + entry["nbytes"]
        if entry["nbytes"] != int(np.prod(shape)) * _DTYPE.itemsize or end > len(data):
            raise CheckpointError(f"{path}: bad byte range for {entry['name']}")
        values[entry["name"]] = np.frombuffer(data[entry["offset"]: end], dtype=_DTYPE).reshape(shape).astype(np.float64)
    model.params.restore(values)
    return header


def load_model(path, vocab_hashes: dict[str, str] | None = None, variant: str | None = None) -> tuple[NMTModel, dict]:
    """Rebuild a model from the checkpoint header, then load its weights."""
    header, _ = read_checkpoint(path)
    if variant is not None and variant != header["variant"]:
        raise CheckpointError(f"{path}: checkpoint holds variant {header['variant']!r}, requested {variant!r}")
    model = NMTModel(ModelConfig(**header["config"]))
    return model, load_into(model, path, vocab_hashes)
