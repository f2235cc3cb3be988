"""Block-tiled message embedding for covers of any size.

A payload is wrapped in a frame (``b"MS"``, u32 length, payload, CRC-32),
serialized MSB-first into bits and split into ``msg_bits``-sized chunks, one
per B x B block in row-major order. Only blocks lying fully inside the
original image carry frame bits; edge blocks that need padding, and any
blocks left over after the frame, get seeded random filler bits.
"""
from __future__ import annotations

import logging
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .checkpoint import Checkpoint
from .metrics import to_uint8
from .models import StegoModel, decode_bits

log = logging.getLogger(__name__)

FRAME_MAGIC = b"MS"
_HEADER = struct.Struct("<2sI")
FRAME_OVERHEAD = _HEADER.size + 4
HEADER_BITS = 8 * _HEADER.size
INFERENCE_BATCH = 64


class FrameError(ValueError):
    pass


class NotAStegoFrame(FrameError):
    def __init__(self):
        super().__init__("not a stego frame")


class CorruptedFrame(FrameError):
    def __init__(self, suspected: Optional[int] = None, detail: str = ""):
        self.suspected = suspected
        n = "unknown number of" if suspected is None else str(suspected)
        msg = f"corrupted message ({n} bit errors suspected)"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class CapacityError(ValueError):
    def __init__(self, required: int, available: int):
        self.required = required
        self.available = available
        super().__init__(f"message needs {required} bits but the cover holds only {available} bits")


def frame_bits(payload_len: int) -> int:
    return 8 * (FRAME_OVERHEAD + payload_len)


def frame_encode(payload: bytes) -> np.ndarray:
    """Frame ``payload`` and return its bits (uint8 0/1, MSB first in each byte)."""
    payload = bytes(payload)
    if len(payload) >= 2 ** 32:
        raise ValueError("payload too large for a u32 length field")
    raw = _HEADER.pack(FRAME_MAGIC, len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))


def frame_decode(bits: np.ndarray, confidence: Optional[np.ndarray] = None) -> bytes:
    """Parse a frame from a bit stream, ignoring any trailing bits.

    ``confidence`` optionally gives per-bit distances from the decision
    threshold; it is only used to estimate the error count on a CRC failure.
    """
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size < HEADER_BITS:
        raise NotAStegoFrame()
    magic, length = _HEADER.unpack(np.packbits(bits[:HEADER_BITS]).tobytes())
    if magic != FRAME_MAGIC:
        raise NotAStegoFrame()
    total = frame_bits(length)
    if total > bits.size:
        raise CorruptedFrame(_suspect(confidence, HEADER_BITS),
                             f"length field says {length} bytes, only {bits.size // 8 - FRAME_OVERHEAD} available")
    raw = np.packbits(bits[:total]).tobytes()
    payload = raw[_HEADER.size:_HEADER.size + length]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise CorruptedFrame(_suspect(confidence, total))
    return payload


def _suspect(confidence: Optional[np.ndarray], n: int) -> Optional[int]:
    # bits decoded close to the threshold are the likely flips; at least one is wrong
    if confidence is None:
        return None
    weak = int(np.count_nonzero(np.abs(np.asarray(confidence).reshape(-1)[:n]) < 0.25))
    return max(weak, 1)


@dataclass(frozen=True)
class BlockLayout:
    width: int
    height: int
    block: int

    @property
    def cols(self) -> int:
        return math.ceil(self.width / self.block)

    @property
    def rows(self) -> int:
        return math.ceil(self.height / self.block)

    @property
    def pad_right(self) -> int:
        return self.cols * self.block - self.width

    @property
    def pad_bottom(self) -> int:
        return self.rows * self.block - self.height

    @property
    def coords(self) -> list[tuple[int, int]]:
        """(row, col) of every block, row-major."""
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    @property
    def count(self) -> int:
        return self.rows * self.cols

    @property
    def interior(self) -> list[int]:
        """Indices (into ``coords``) of blocks that need no padding."""
        full_r = self.height // self.block
        full_c = self.width // self.block
        return [i for i, (r, c) in enumerate(self.coords) if r < full_r and c < full_c]


def plan_blocks(width: int, height: int, block: int) -> BlockLayout:
    if width < 1 or height < 1:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    return BlockLayout(width, height, block)


def tile(img: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """(h, w, c) image -> (n, B, B, c) blocks, edge-replicating the padding."""
    b = layout.block
    padded = np.pad(img, ((0, layout.pad_bottom), (0, layout.pad_right), (0, 0)), mode="edge")
    blocks = padded.reshape(layout.rows, b, layout.cols, b, img.shape[2]).swapaxes(1, 2)
    return blocks.reshape(layout.count, b, b, img.shape[2])


def untile(blocks: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """Inverse of :func:`tile`, cropped back to the original size."""
    b = layout.block
    c = blocks.shape[-1]
    grid = blocks.reshape(layout.rows, layout.cols, b, b, c).swapaxes(1, 2)
    full = grid.reshape(layout.rows * b, layout.cols * b, c)
    return full[:layout.height, :layout.width]


def capacity_bits(layout: BlockLayout, msg_bits: int) -> int:
    return len(layout.interior) * msg_bits


def max_payload_bytes(layout: BlockLayout, msg_bits: int) -> int:
    """Largest payload that fits; negative when not even an empty frame fits."""
    return capacity_bits(layout, msg_bits) // 8 - FRAME_OVERHEAD


def _as_model(model: Union[StegoModel, Checkpoint]) -> StegoModel:
    return model.to_model() if isinstance(model, Checkpoint) else model


def _as_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        log.info("grayscale cover replicated to RGB")
        img = np.repeat(img[:, :, None], 3, axis=2)
    elif img.ndim == 3 and img.shape[2] == 4:
        img = img[:, :, :3]
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an RGB image, got shape {img.shape}")
    return img


def embed_blocks(model: StegoModel, cover: np.ndarray, block_bits: np.ndarray) -> np.ndarray:
    """Run the embedder over every block; returns the float stego (h, w, 3) in [0, 1]."""
    cover = _as_rgb(cover)
    layout = plan_blocks(cover.shape[1], cover.shape[0], model.cfg.block)
    if block_bits.shape != (layout.count, model.cfg.msg_bits):
        raise ValueError(f"need bits of shape {(layout.count, model.cfg.msg_bits)}, got {block_bits.shape}")
    blocks = tile(cover, layout).transpose(0, 3, 1, 2).astype(np.float32) / np.float32(255.0)
    out = np.empty_like(blocks)
    for i in range(0, layout.count, INFERENCE_BATCH):
        sl = slice(i, i + INFERENCE_BATCH)
        out[sl] = model.embed(blocks[sl], block_bits[sl].astype(np.float32))
    return untile(out.transpose(0, 2, 3, 1), layout)


def extract_blocks(model: StegoModel, image: np.ndarray) -> np.ndarray:
    """Decoded message M' for every block of an image (uint8 or float in [0, 1])."""
    image = _as_rgb(image)
    if image.dtype == np.uint8:
        image = image.astype(np.float32) / np.float32(255.0)
    layout = plan_blocks(image.shape[1], image.shape[0], model.cfg.block)
    blocks = tile(image.astype(np.float32), layout).transpose(0, 3, 1, 2)
    return np.concatenate([model.extract(np.ascontiguousarray(blocks[i:i + INFERENCE_BATCH]))
                           for i in range(0, layout.count, INFERENCE_BATCH)])


def assign_bits(bits: np.ndarray, layout: BlockLayout, msg_bits: int,
                rng: np.random.Generator) -> np.ndarray:
    """Spread a bit stream over interior blocks row-major, random filler elsewhere."""
    out = rng.integers(0, 2, size=(layout.count, msg_bits)).astype(np.uint8)
    interior = layout.interior
    available = len(interior) * msg_bits
    if bits.size > available:
        raise CapacityError(bits.size, available)
    stream = out[interior].reshape(-1)
    stream[:bits.size] = bits
    out[interior] = stream.reshape(len(interior), msg_bits)
    return out


def embed_message(model: Union[StegoModel, Checkpoint], cover: np.ndarray, payload: bytes,
                  seed: int = 0) -> np.ndarray:
    """Hide ``payload`` in an 8-bit RGB cover and return the 8-bit stego image."""
    model = _as_model(model)
    cover = _as_rgb(cover)
    layout = plan_blocks(cover.shape[1], cover.shape[0], model.cfg.block)
    bits = frame_encode(payload)
    block_bits = assign_bits(bits, layout, model.cfg.msg_bits, np.random.default_rng(seed))
    return to_uint8(embed_blocks(model, cover, block_bits))


@dataclass
class ExtractResult:
    payload: bytes
    bits_used: int
    blocks_used: int


def extract_message(model: Union[StegoModel, Checkpoint], stego: np.ndarray) -> ExtractResult:
    """Recover a framed payload; raises :class:`FrameError` subclasses on failure."""
    model = _as_model(model)
    stego = _as_rgb(stego)
    b = model.cfg.block
    if stego.shape[0] < b or stego.shape[1] < b:
        raise ValueError(f"image {stego.shape[1]}x{stego.shape[0]} is smaller than the model block {b}x{b}")
    layout = plan_blocks(stego.shape[1], stego.shape[0], b)
    decoded = extract_blocks(model, stego)[layout.interior].reshape(-1)
    payload = frame_decode(decode_bits(decoded), confidence=decoded - 0.5)
    used = frame_bits(len(payload))
    return ExtractResult(payload, used, math.ceil(used / model.cfg.msg_bits))
