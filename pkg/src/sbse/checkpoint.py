"""Model checkpoint container.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"SBSECKPT"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length H in bytes
    16      H     UTF-8 JSON header, keys sorted, no whitespace padding
    16+H    8*P   float64 parameter vector (P = header["n_params"])
    ...     8*P   float64 EMA parameter vector, present iff header["has_ema"]

Header keys: ``kind`` ("conv_net" or "identity"), ``mode`` ("bridge" or
"predictive"), ``arch`` (ConvArch fields, or null), ``n_params``, ``has_ema``,
``step`` (training-step counter), ``dtype`` (always "<f8").

The writer is deterministic: identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .denoiser import ConvArch, ConvDenoiser, IdentityDenoiser

MAGIC = b"SBSECKPT"
VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    mode: str
    arch: ConvArch | None
    params: np.ndarray
    ema: np.ndarray | None
    step: int

    def model(self, use_ema: bool = True, compute_dtype=np.float64):
        if self.kind == "identity":
            return IdentityDenoiser()
        params = self.ema if (use_ema and self.ema is not None) else self.params
        return ConvDenoiser(self.arch, params.copy(), mode=self.mode, compute_dtype=compute_dtype)


def save_checkpoint(path, ckpt: Checkpoint):
    params = np.ascontiguousarray(ckpt.params, dtype="<f8")
    header = {
        "kind": ckpt.kind,
        "mode": ckpt.mode,
        "arch": ckpt.arch.to_dict() if ckpt.arch is not None else None,
        "n_params": int(params.size),
        "has_ema": ckpt.ema is not None,
        "step": int(ckpt.step),
        "dtype": "<f8",
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(params.tobytes())
        if ckpt.ema is not None:
            fh.write(np.ascontiguousarray(ckpt.ema, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16: 16 + hlen].decode("utf-8"))
    n = header["n_params"]
    off = 16 + hlen
    expected = off + 8 * n * (2 if header["has_ema"] else 1)
    if len(data) != expected:
        raise ValueError(f"{path}: truncated or oversized checkpoint ({len(data)} != {expected} bytes)")
    params = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
    ema = None
    if header["has_ema"]:
        ema = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8 * n).astype(np.float64)
    arch = ConvArch(**header["arch"]) if header["arch"] is not None else None
    if arch is not None and arch.n_params != n:
        raise ValueError(f"{path}: arch expects {arch.n_params} parameters, file has {n}")
    return Checkpoint(header["kind"], header["mode"], arch, params, ema, header["step"])


def identity_checkpoint() -> Checkpoint:
    return Checkpoint("identity", "bridge", None, np.zeros(0), None, 0)
