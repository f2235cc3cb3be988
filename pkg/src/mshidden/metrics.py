"""Bit-accuracy and cover-vs-stego image quality metrics."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .engine.tensor import DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MAX_VALUE = 255.0
LUMA = np.array([0.299, 0.587, 0.114])


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def to_uint8(x: np.ndarray) -> np.ndarray:
    """[0,1] floats -> 8-bit, rounding half away from zero after clamping."""
    scaled = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def to_float(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _same_shape(a, b)
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray, max_value: float = MAX_VALUE) -> float:
    """PSNR in dB over all subpixels; ``inf`` for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(max_value ** 2 / err))


def mae(a: np.ndarray, b: np.ndarray) -> float:
    _same_shape(a, b)
    return float(np.mean(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def ber(bits: np.ndarray, decoded: np.ndarray) -> float:
    """Fraction of positions where the two bit arrays differ."""
    bits = np.asarray(bits)
    decoded = np.asarray(decoded)
    _same_shape(bits, decoded)
    if bits.size == 0:
        return 0.0
    return float(np.count_nonzero((bits > 0.5) != (decoded > 0.5)) / bits.size)


def luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an (h, w, 3) image; 2-D input is returned as float."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"expected (h, w, 3) image, got {img.shape}")
    return img @ LUMA


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:x.shape[0] - r, r:x.shape[1] - r]


def ssim(a: np.ndarray, b: np.ndarray, max_value: float = MAX_VALUE) -> float:
    """Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5), valid positions only."""
    _same_shape(np.asarray(a), np.asarray(b))
    x, y = luma(a), luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise DimensionError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    mu_x, mu_y = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x * mu_x
    syy = _filter_valid(y * y, g) - mu_y * mu_y
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = (SSIM_K1 * max_value) ** 2
    c2 = (SSIM_K2 * max_value) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def difference_image(cover: np.ndarray, stego: np.ndarray, gain: float = 15.0) -> np.ndarray:
    """|cover - stego| * gain as an 8-bit image."""
    _same_shape(cover, stego)
    d = np.abs(np.asarray(cover, dtype=np.float64) - np.asarray(stego, dtype=np.float64)) * gain
    return np.clip(np.floor(d + 0.5), 0, 255).astype(np.uint8)
