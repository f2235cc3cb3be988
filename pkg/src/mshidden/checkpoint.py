"""Versioned little-endian binary checkpoints with a trailing CRC-32.

Layout::

    b"MSHD"  u32 version
    u32 B  u32 k  u32 msg_bits  f32 lambda_i  f32 lambda_m  f32 lambda_g  f32 lr  u64 seed
    u32 tensor_count
    per tensor: u16 name_len, utf-8 name, u8 ndim, u32 dims[ndim], f32 data (row-major)
    u32 crc32 of everything above

Training bookkeeping rides along as two extra tensors, ``meta.step`` and
``meta.best`` (epoch, BER, PSNR), so the layout needs no extra fields.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .models import ModelConfig, StegoModel

MAGIC = b"MSHD"
VERSION = 1
_CONFIG = struct.Struct("<IIIffffQ")
STEP_KEY = "meta.step"
BEST_KEY = "meta.best"


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    cfg: ModelConfig
    params: dict
    step: int = 0
    best: Optional[tuple] = None

    @classmethod
    def from_model(cls, model: StegoModel, step: int = 0, best: Optional[tuple] = None) -> "Checkpoint":
        params = {name: t.data.copy() for name, t in model.named_parameters()}
        return cls(model.cfg, params, step, best)

    def to_model(self) -> StegoModel:
        model = StegoModel(self.cfg)
        model.load_state(self.params)
        return model


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    cfg = ckpt.cfg
    tensors = dict(ckpt.params)
    tensors[STEP_KEY] = np.array([ckpt.step], dtype=np.float32)
    if ckpt.best is not None:
        tensors[BEST_KEY] = np.array(ckpt.best, dtype=np.float32)

    parts = [MAGIC, struct.pack("<I", VERSION),
             _CONFIG.pack(cfg.block, cfg.k, cfg.msg_bits, cfg.lambda_i, cfg.lambda_m, cfg.lambda_g,
                          cfg.lr, cfg.seed),
             struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IntegrityError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if len(buf) < 8:
        raise IntegrityError("checkpoint is truncated")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"not a checkpoint (magic {buf[:4]!r})")
    (version,) = struct.unpack("<I", buf[4:8])
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}")
    if len(buf) < 8 + _CONFIG.size + 8:
        raise IntegrityError("checkpoint is truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError("checkpoint CRC-32 mismatch")

    r = _Reader(body)
    r.take(8)
    block, k, msg_bits, li, lm, lg, lr, seed = r.unpack(_CONFIG.format)
    try:
        cfg = ModelConfig(block=block, k=k, msg_bits=msg_bits, lambda_i=li, lambda_m=lm,
                          lambda_g=lg, lr=lr, seed=seed)
    except ValueError as exc:
        raise IntegrityError(f"invalid config in checkpoint: {exc}") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        size = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(body):
        raise IntegrityError("trailing bytes after tensor table")

    step_arr = tensors.pop(STEP_KEY, None)
    best_arr = tensors.pop(BEST_KEY, None)
    step = int(step_arr[0]) if step_arr is not None else 0
    best = tuple(float(v) for v in best_arr) if best_arr is not None else None

    expected = {name: t.shape for name, t in StegoModel(cfg).named_parameters()}
    if set(expected) != set(tensors):
        raise IntegrityError("checkpoint tensors do not match its config")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise IntegrityError(f"{name}: shape {tensors[name].shape} does not match config {shape}")
    return Checkpoint(cfg, tensors, step, best)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write atomically: a failed write leaves any previous file untouched."""
    path = Path(path)
    data = encode_checkpoint(ckpt)
    fd, tmp = tempfile.mkstemp(prefix=path.name, suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600 files
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
