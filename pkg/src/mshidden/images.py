"""8-bit RGB image files: PNG and binary PPM (P6) only for stego output."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

LOSSLESS = {".png": "PNG", ".ppm": "PPM"}
LOSSY = {".jpg", ".jpeg", ".webp", ".jfif", ".heic", ".avif"}
READABLE = {".png", ".ppm", ".pnm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".webp"}


class ImageFormatError(ValueError):
    pass


def read_image(path) -> np.ndarray:
    """(h, w, 3) uint8 array; grayscale and palette images are converted to RGB."""
    with Image.open(path) as im:
        if im.mode != "RGB":
            if im.mode not in ("RGBA", "P"):
                log.info("%s: converting %s image to RGB", path, im.mode)
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    if ext in LOSSY:
        raise ImageFormatError(
            f"refusing to write {ext} stego output: lossy compression destroys the hidden message; use .png or .ppm")
    if ext not in LOSSLESS:
        raise ImageFormatError(f"unsupported output format {ext!r}; use .png or .ppm")
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError(f"expected (h, w, 3) uint8 image, got {img.shape} {img.dtype}")
    Image.fromarray(img, "RGB").save(path, LOSSLESS[ext])


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in READABLE)


def hwc_to_chw(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img).transpose(2, 0, 1))


def chw_to_hwc(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img).transpose(1, 2, 0))
