"""Binary checkpoint format.

Layout: magic ``TEPC``, u32 format version, u32 header length, JSON header
(tensor table with name/dtype/shape/offset plus model configs, preprocess
stats, RNG seed info, and the training log), then a little-endian fp32
payload.  Round-trips are bit-exact: the checkpoint itself stores fp32 and
prediction always materializes parameters from the stored fp32 values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..datapipe import PreprocessStats
from ..nets import build_model, config_from_dict
from .model import MultimodalModel, build_multimodal

MAGIC = b"TEPC"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model_meta: dict  # per-channel kind/config/window/features + rep_width
    tensors: Dict[str, np.ndarray]  # fp32
    preprocess: dict
    rng_state: dict
    training_log: list = field(default_factory=list)
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: MultimodalModel, preprocess: PreprocessStats,
                   rng_state: dict, training_log: list) -> "Checkpoint":
        meta = {
            "rep_width": model.rep_width,
            "channels": {
                ch: {
                    "kind": m.kind,
                    "config": m.config_dict(),
                    "window": m.window,
                    "n_features": m.n_features,
                }
                for ch, m in model.channels.items()
            },
        }
        tensors = {
            name: np.asarray(t.data, dtype=np.float32)
            for name, t in sorted(model.parameters().items())
        }
        return cls(meta, tensors, preprocess.to_dict(), rng_state, training_log)

    def to_model(self) -> MultimodalModel:
        """Materialize an fp64 model from the stored fp32 tensor table."""
        rng = np.random.default_rng(0)  # shapes only; values overwritten below
        channels = {}
        for ch, m in self.model_meta["channels"].items():
            cfg = config_from_dict(m["kind"], m["config"])
            channels[ch] = build_model(m["kind"], m["window"], m["n_features"], cfg, rng)
        model = build_multimodal(channels, self.model_meta["rep_width"], rng)
        params = model.parameters()
        missing = set(params) - set(self.tensors)
        extra = set(self.tensors) - set(params)
        if missing or extra:
            raise ValueError(f"checkpoint tensor table mismatch: missing={missing}, extra={extra}")
        for name, t in params.items():
            stored = self.tensors[name]
            if stored.shape != t.data.shape:
                raise ValueError(f"tensor {name!r} shape {stored.shape} != expected {t.data.shape}")
            t.data = stored.astype(np.float64)
        return model

    def preprocess_stats(self) -> PreprocessStats:
        return PreprocessStats.from_dict(self.preprocess)

    def to_bytes(self) -> bytes:
        names = sorted(self.tensors)
        table = []
        offset = 0
        payload = bytearray()
        for name in names:
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f4")
            table.append({"name": name, "dtype": "f4", "shape": list(arr.shape), "offset": offset})
            payload.extend(arr.tobytes())
            offset += arr.nbytes
        header = {
            "tensor_table": table,
            "model_meta": self.model_meta,
            "preprocess": self.preprocess,
            "rng_state": self.rng_state,
            "training_log": self.training_log,
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<II", self.version, len(header_bytes)) + header_bytes + bytes(payload)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if blob[:4] != MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<II", blob[4:12])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
        payload = blob[12 + hlen :]
        tensors = {}
        for entry in header["tensor_table"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            arr = np.frombuffer(payload[start : start + 4 * n], dtype="<f4").reshape(shape)
            tensors[entry["name"]] = arr.copy()
        return cls(
            header["model_meta"],
            tensors,
            header["preprocess"],
            header["rng_state"],
            header["training_log"],
            version,
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
