"""Binary checkpoints: b"SQFS", u32 version, u64 metadata length, JSON metadata, little-endian f64 arrays."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import DTYPE, InputSchema, ModelConfig, Seq2Seq, Vocabulary, build_model

MAGIC = b"SQFS"
VERSION = 1


def save_checkpoint(path, model: Seq2Seq, extra: dict | None = None) -> None:
    state = model.state_dict()
    names = list(state)
    meta = {
        "config": model.cfg.to_dict(),
        "vocab_size": model.vocab.size,
        "schema": model.schema.to_dict(),
        "params": [{"name": k, "shape": list(state[k].shape)} for k in names],
        **(extra or {}),
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(blob)))
        f.write(blob)
        for k in names:
            f.write(state[k].detach().cpu().numpy().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<IQ", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IQ")
    meta = json.loads(data[off : off + n])
    off += n
    cfg = ModelConfig(**meta["config"])
    schema = InputSchema(tuple(meta["schema"]["categorical_sizes"]), meta["schema"]["n_continuous"])
    model = build_model(cfg, Vocabulary(meta["vocab_size"]), schema)
    state = {}
    for p in meta["params"]:
        count = int(np.prod(p["shape"])) if p["shape"] else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(p["shape"])
        off += 8 * count
        state[p["name"]] = torch.tensor(arr.copy(), dtype=DTYPE)
    model.load_state_dict(state)
    model.eval()
    return model, meta
