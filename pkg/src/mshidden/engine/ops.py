"""Differentiable operators on 4-D (batch, channels, height, width) tensors.

Every op computes its forward value eagerly with numpy and registers a
backward closure on the active tapes. Convolutions use 3x3 kernels with
padding 1 and an im2col layout of ``(c, 3, 3, b, h_out, w_out)`` so that
both the forward pass and the weight gradient are single matmuls.
"""
from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor, record

KERNEL = 3
PAD = 1


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# convolution kernels (plain numpy, no tape)
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, stride: int) -> tuple[np.ndarray, int, int]:
    b, c, h, w = x.shape
    ho = (h + 2 * PAD - KERNEL) // stride + 1
    wo = (w + 2 * PAD - KERNEL) // stride + 1
    xp = np.zeros((c, b, h + 2 * PAD, w + 2 * PAD), dtype=x.dtype)
    xp[:, :, PAD:PAD + h, PAD:PAD + w] = x.transpose(1, 0, 2, 3)
    cols = np.empty((c, KERNEL, KERNEL, b, ho, wo), dtype=x.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            cols[:, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(c * KERNEL * KERNEL, b * ho * wo), ho, wo


def _col2im(cols: np.ndarray, c: int, b: int, h: int, w: int, ho: int, wo: int,
            stride: int) -> np.ndarray:
    cols = cols.reshape(c, KERNEL, KERNEL, b, ho, wo)
    xp = np.zeros((c, b, h + 2 * PAD, w + 2 * PAD), dtype=cols.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j]
    return np.ascontiguousarray(xp[:, :, PAD:PAD + h, PAD:PAD + w].transpose(1, 0, 2, 3))


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int):
    """Cross-correlate x (b,ci,h,w) with w (co,ci,3,3); returns (out, cols)."""
    b = x.shape[0]
    co = w.shape[0]
    cols, ho, wo = _im2col(x, stride)
    out = w.reshape(co, -1) @ cols
    out = np.ascontiguousarray(out.reshape(co, b, ho, wo).transpose(1, 0, 2, 3))
    return out, cols


def _conv_input_grad(g: np.ndarray, w: np.ndarray, stride: int, h: int, width: int) -> np.ndarray:
    """Adjoint of :func:`_conv_forward` w.r.t. its input."""
    b, co, ho, wo = g.shape
    ci = w.shape[1]
    g2 = g.transpose(1, 0, 2, 3).reshape(co, -1)
    gcols = w.reshape(co, -1).T @ g2
    return _col2im(gcols, ci, b, h, width, ho, wo, stride)


def _conv_weight_grad(g: np.ndarray, cols: np.ndarray, w_shape: tuple) -> np.ndarray:
    co = g.shape[1]
    g2 = g.transpose(1, 0, 2, 3).reshape(co, -1)
    return (g2 @ cols.T).reshape(w_shape)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError("conv2d expects 4-D input and weight")
    if weight.shape[1] != x.shape[1]:
        raise DimensionError(
            f"conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    if weight.shape[2:] != (KERNEL, KERNEL):
        raise DimensionError(f"conv2d: only 3x3 kernels are supported, got {weight.shape[2:]}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({weight.shape[0]},)")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    h, w = x.shape[2:]
    if stride == 2 and (h % 2 or w % 2):
        raise DimensionError(f"conv2d stride 2 needs even spatial size, got {h}x{w}")

    wd = weight.data
    out, cols = _conv_forward(x.data, wd, stride)
    out += bias.data[None, :, None, None]

    def backward(g):
        gx = _conv_input_grad(g, wd, stride, h, w)
        gw = _conv_weight_grad(g, cols, weight.shape)
        return gx, gw, g.sum(axis=(0, 2, 3))

    return record("conv2d", Tensor(out), (x, weight, bias), backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 2) -> Tensor:
    """Transposed 3x3 convolution mapping (b,ci,h,w) to (b,co,2h,2w).

    ``weight`` has shape (ci, co, 3, 3). Geometry is padding 1 with output
    padding 1, i.e. the exact adjoint of a stride-2 ``conv2d`` on a 2h x 2w map.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError("conv_transpose2d expects 4-D input and weight")
    if weight.shape[0] != x.shape[1]:
        raise DimensionError(
            f"conv_transpose2d: input has {x.shape[1]} channels, weight expects {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"conv_transpose2d: bias shape {bias.shape} != ({weight.shape[1]},)")
    if stride != 2:
        raise ValueError("conv_transpose2d only supports stride 2")
    h, w = x.shape[2:]
    xd, wd = x.data, weight.data
    out = _conv_input_grad(xd, wd, stride, 2 * h, 2 * w)
    out += bias.data[None, :, None, None]

    def backward(g):
        gx, gcols = _conv_forward(g, wd, stride)
        gw = _conv_weight_grad(xd, gcols, weight.shape)
        return gx, gw, g.sum(axis=(0, 2, 3))

    return record("conv_transpose2d", Tensor(out), (x, weight, bias), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"linear: cannot apply weight {weight.shape} to input {x.shape}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
    xd, wd = x.data, weight.data
    out = xd @ wd.T + bias.data

    def backward(g):
        return g @ wd, g.T @ xd, g.sum(axis=0)

    return record("linear", Tensor(out), (x, weight, bias), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects (b,c,h,w), got {x.shape}")
    b, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], x.shape).copy(),)

    return record("global_avg_pool", Tensor(out), (x,), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 4 or b.ndim != 4 or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"concat_channels: incompatible {a.shape} and {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        return g[:, :ca], g[:, ca:]

    return record("concat_channels", Tensor(out), (a, b), backward)


def expand_planes(v: Tensor, h: int, w: int) -> Tensor:
    """Replicate each entry of a (b,n) tensor over an h x w plane -> (b,n,h,w)."""
    if v.ndim != 2:
        raise DimensionError(f"expand_planes expects (b,n), got {v.shape}")
    out = np.broadcast_to(v.data[:, :, None, None], v.shape + (h, w)).copy()

    def backward(g):
        return (g.sum(axis=(2, 3)),)

    return record("expand_planes", Tensor(out), (v,), backward)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(x.data <= 0, 0, x.data).astype(x.data.dtype)  # NaN passes through

    def backward(g):
        return (g * mask,)

    return record("relu", Tensor(out), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)

    def backward(g):
        return (g * out * (1 - out),)

    return record("sigmoid", Tensor(out), (x,), backward)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1 / (1 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1 + ez)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")

    def backward(g):
        return g, g

    return record("add", Tensor(a.data + b.data), (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")

    def backward(g):
        return g, -g

    return record("sub", Tensor(a.data - b.data), (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")

    ad, bd = a.data, b.data

    def backward(g):
        return g * bd, g * ad

    return record("mul", Tensor(ad * bd), (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)

    def backward(g):
        return (g * c,)

    return record("scale", Tensor(x.data * c), (x,), backward)


def shift(x: Tensor, c: float) -> Tensor:
    def backward(g):
        return (g,)

    return record("shift", Tensor(x.data + x.data.dtype.type(c)), (x,), backward)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        return (g * inside,)

    return record("clamp", Tensor(np.clip(x.data, lo, hi)), (x,), backward)


def log(x: Tensor) -> Tensor:
    xd = x.data

    def backward(g):
        return (g / xd,)

    return record("log", Tensor(np.log(xd)), (x,), backward)


def mean(x: Tensor) -> Tensor:
    n = x.size

    def backward(g):
        return (np.full(x.shape, g / n, dtype=x.data.dtype),)

    return record("mean", Tensor(x.data.mean(dtype=np.float64)), (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        return (np.full(x.shape, g, dtype=x.data.dtype),)

    return record("sum", Tensor(x.data.sum(dtype=np.float64)), (x,), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

EPS_LOG = 1e-6


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean of (a - b)^2 over every element."""
    _check_same(a, b, "mse_loss")
    diff = a.data.astype(np.float64) - b.data
    n = diff.size

    def backward(g):
        ga = (2.0 * g / n) * diff
        dt = a.data.dtype
        return ga.astype(dt), (-ga).astype(dt)

    return record("mse_loss", Tensor(np.mean(diff * diff)), (a, b), backward)


def adversarial_losses(p_cover: Tensor, p_stego: Tensor, eps: float = EPS_LOG):
    """Discriminator and generator losses from discriminator probabilities.

    Returns ``(l_d, l_g)`` with ``l_g = mean log(1 - p_stego)`` and
    ``l_d = -mean[log p_cover + log(1 - p_stego)]``. Probabilities are clamped
    to ``[eps, 1 - eps]`` first.
    """
    l_g = generator_loss(p_stego, eps)
    l_d = -(mean(log(clamp(p_cover, eps, 1 - eps))) + l_g)
    return l_d, l_g


def generator_loss(p_stego: Tensor, eps: float = EPS_LOG) -> Tensor:
    """mean log(1 - p_stego), the term the embedder minimises."""
    return mean(log(1.0 - clamp(p_stego, eps, 1 - eps)))

