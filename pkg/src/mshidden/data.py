"""Image datasets for training and benchmarking, plus a procedural image generator."""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .images import list_images, read_image, write_image

log = logging.getLogger(__name__)

VAL_BUCKETS = 10


@dataclass
class Dataset:
    """8-bit RGB images, each at least ``block`` x ``block``."""

    images: list
    names: list
    block: int
    msg_bits: int

    def __len__(self) -> int:
        return len(self.images)

    @classmethod
    def from_dir(cls, directory, cfg) -> "Dataset":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"data directory {directory} does not exist")
        images, names, small = [], [], []
        for path in list_images(directory):
            try:
                img = read_image(path)
            except Exception as exc:  # noqa: BLE001 - any decoder failure skips the file
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            if min(img.shape[:2]) < cfg.block:
                small.append(path.name)
                continue
            images.append(img)
            names.append(path.name)
        if small:
            log.warning("skipping %d image(s) smaller than %dx%d, e.g. %s",
                        len(small), cfg.block, cfg.block, small[0])
        if not images:
            raise ValueError(f"no usable images in {directory}")
        return cls(images, names, cfg.block, cfg.msg_bits)

    @classmethod
    def from_arrays(cls, images: Sequence[np.ndarray], cfg, names: Optional[Sequence[str]] = None):
        names = list(names) if names is not None else [f"image_{i:05d}" for i in range(len(images))]
        return cls(list(images), names, cfg.block, cfg.msg_bits)

    def subset(self, idx: Sequence[int]) -> "Dataset":
        return Dataset([self.images[i] for i in idx], [self.names[i] for i in idx],
                       self.block, self.msg_bits)

    def split(self) -> tuple["Dataset", "Dataset"]:
        """(train, validation) with ~10% held out by CRC-32 of the file name."""
        buckets = [zlib.crc32(n.encode()) % VAL_BUCKETS for n in self.names]
        val = [i for i, b in enumerate(buckets) if b == 0]
        if not val and len(self) > 1:
            val = [min(range(len(self)), key=lambda i: zlib.crc32(self.names[i].encode()))]
        val_set = set(val)
        train = [i for i in range(len(self)) if i not in val_set]
        return self.subset(train), self.subset(val)

    def crops(self, idx: Sequence[int], rng: np.random.Generator) -> np.ndarray:
        """Random block x block crops of the chosen images as (n, 3, B, B) floats in [0, 1]."""
        b = self.block
        out = np.empty((len(idx), 3, b, b), dtype=np.float32)
        for n, i in enumerate(idx):
            img = self.images[i]
            y = int(rng.integers(0, img.shape[0] - b + 1))
            x = int(rng.integers(0, img.shape[1] - b + 1))
            out[n] = img[y:y + b, x:x + b].transpose(2, 0, 1)
        return out / np.float32(255.0)

    def center_crops(self) -> np.ndarray:
        b = self.block
        out = np.empty((len(self), 3, b, b), dtype=np.float32)
        for n, img in enumerate(self.images):
            y = (img.shape[0] - b) // 2
            x = (img.shape[1] - b) // 2
            out[n] = img[y:y + b, x:x + b].transpose(2, 0, 1)
        return out / np.float32(255.0)


def synthetic_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """A natural-looking test image: smooth colour field, shapes, stripes and sensor noise."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.empty((height, width, 3))

    # low-frequency colour field from a few random sinusoids per channel
    for c in range(3):
        field = np.full((height, width), rng.uniform(60, 190))
        for _ in range(3):
            fy, fx = rng.uniform(0.2, 2.5, size=2) * 2 * np.pi / np.array([height, width])
            field += rng.uniform(10, 45) * np.sin(fy * yy + fx * xx + rng.uniform(0, 2 * np.pi))
        img[..., c] = field

    for _ in range(int(rng.integers(1, 5))):
        colour = rng.uniform(0, 255, size=3)
        alpha = rng.uniform(0.4, 1.0)
        kind = rng.integers(0, 3)
        if kind == 0:
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            r = rng.uniform(0.1, 0.45) * min(height, width)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        elif kind == 1:
            y0, x0 = rng.integers(0, height), rng.integers(0, width)
            h, w = rng.integers(height // 8 + 1, height // 2 + 2), rng.integers(width // 8 + 1, width // 2 + 2)
            mask = (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
        else:
            period = rng.uniform(3, 12)
            angle = rng.uniform(0, np.pi)
            proj = yy * np.sin(angle) + xx * np.cos(angle)
            mask = (np.floor(proj / period) % 2 == 0) & (rng.uniform() < 0.7)
        img[mask] = (1 - alpha) * img[mask] + alpha * colour

    img += rng.normal(0, rng.uniform(1, 6), size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synthetic_images(n: int, size: int, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, size, size) for _ in range(n)]


def write_synthetic_dir(directory, n: int, size: int, seed: int = 0) -> Path:
    """Write ``n`` synthetic PNGs named img_00000.png ... into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(synthetic_images(n, size, seed)):
        write_image(directory / f"img_{i:05d}.png", img)
    return directory
