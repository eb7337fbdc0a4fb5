"""Single-file model checkpoints.

Layout: magic "VMMT1", little-endian u32 length + UTF-8 JSON block
(model configuration and both vocabularies), u32 tensor count, then per
tensor: u32 name length + name, u32 rank, u32 dims, row-major f32 data.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from .config import ModelConfig
from .transformer import Seq2SeqModel

CHECKPOINT_MAGIC = b"VMMT1"


def save_checkpoint(model: Seq2SeqModel, path) -> None:
    meta = {
        "config": vars(model.config),
        "src_tokens": model.src_tokens,
        "tgt_tokens": model.tgt_tokens,
    }
    blob = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    state = model.state_dict()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            raw_name = name.encode("utf-8")
            array = tensor.detach().cpu().numpy().astype(np.float32)
            f.write(struct.pack("<I", len(raw_name)))
            f.write(raw_name)
            f.write(struct.pack("<I", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            np.ascontiguousarray(array).tofile(f)


def load_checkpoint(path) -> Seq2SeqModel:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a model checkpoint: bad magic {magic!r}")
        (blob_len,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(blob_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", f.read(4))
        state = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            data = np.fromfile(f, dtype=np.float32, count=count).reshape(shape)
            state[name] = torch.from_numpy(data.copy())
    config = ModelConfig(**meta["config"])
    model = Seq2SeqModel(config, meta["src_tokens"], meta["tgt_tokens"])
    model.load_state_dict(state)
    model.eval()
    return model
