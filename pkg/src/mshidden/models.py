"""Embedder, extractor and discriminator networks plus the training objective.

All three networks share the same encoder geometry: ``k`` stride-2 3x3
convolutions, each halving the spatial size and doubling the channels, from
``2**(k+1)`` up to ``(2**k)**2`` channels at the bottleneck.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .engine import ops
from .engine.tensor import DTYPE, DimensionError, Tensor


@dataclass(frozen=True)
class ModelConfig:
    block: int = 128
    k: int = 4
    msg_bits: int = 64
    lambda_i: float = 1.0
    lambda_m: float = 1.5
    lambda_g: float = 0.001
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.msg_bits < 1:
            raise ValueError(f"msg_bits must be >= 1, got {self.msg_bits}")
        if self.block < 2 ** self.k or self.block % 2 ** self.k:
            raise ValueError(f"block size {self.block} is not a positive multiple of 2**{self.k}")

    @property
    def channels(self) -> list[int]:
        """Encoder output channels per layer: 2**(k+1), ..., 2**(2k)."""
        return [2 ** (self.k + i) for i in range(1, self.k + 1)]

    @property
    def latent_size(self) -> int:
        return self.block // 2 ** self.k

    @property
    def feature_channels(self) -> int:
        return (2 ** self.k) ** 2


class ParamStore:
    """Ordered name -> Tensor mapping for one network."""

    def __init__(self, prefix: str):
        self.prefix = prefix
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        full = f"{self.prefix}.{name}"
        if full in self._params:
            raise KeyError(f"duplicate parameter {full}")
        t = Tensor(value, requires_grad=True, name=full)
        self._params[full] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def count(self) -> int:
        return sum(t.size for t in self._params.values())


def _kaiming(rng: np.random.Generator, shape: tuple, fan_in: int, gain: float = 2.0) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(gain / fan_in)).astype(DTYPE)


def _conv_params(store: ParamStore, rng, name: str, ci: int, co: int, gain: float = 2.0):
    w = store.add(f"{name}.weight", _kaiming(rng, (co, ci, 3, 3), ci * 9, gain))
    b = store.add(f"{name}.bias", np.zeros(co, DTYPE))
    return w, b


def _encoder(store: ParamStore, rng, cfg: ModelConfig) -> list:
    layers = []
    ci = 3
    for i, co in enumerate(cfg.channels):
        layers.append(_conv_params(store, rng, f"enc.{i}", ci, co))
        ci = co
    return layers


def _run_encoder(layers, x: Tensor) -> Tensor:
    for w, b in layers:
        x = ops.relu(ops.conv2d(x, w, b, stride=2))
    return x


def _check_image(x: Tensor, cfg: ModelConfig, who: str) -> None:
    if x.ndim != 4 or x.shape[1:] != (3, cfg.block, cfg.block):
        raise DimensionError(f"{who}: expected (b,3,{cfg.block},{cfg.block}) image, got {x.shape}")


def _rng(cfg: ModelConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


class Embedder:
    """Multi-scale autoencoder producing a stego image from (cover, message)."""

    def __init__(self, cfg: ModelConfig, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        rng = _rng(cfg, 0) if rng is None else rng
        self.params = ParamStore("embedder")
        self.encoder = _encoder(self.params, rng, cfg)
        # decoder mirrors the encoder: (f_c + m_c) -> 2**(2k-1) -> ... -> 2**(k+1) -> 3
        widths = [cfg.feature_channels + cfg.msg_bits] + cfg.channels[-2::-1] + [3]
        self.decoder = []
        for i, (ci, co) in enumerate(zip(widths[:-1], widths[1:])):
            w = self.params.add(f"dec.{i}.weight", _kaiming(rng, (ci, co, 3, 3), ci * 9))
            b = self.params.add(f"dec.{i}.bias", np.zeros(co, DTYPE))
            self.decoder.append((w, b))
        # blend starts as the identity so the stego image starts at cover + residual
        dirac = np.zeros((3, 3, 3, 3), DTYPE)
        dirac[np.arange(3), np.arange(3), 1, 1] = 1.0
        self.blend = (self.params.add("blend.weight", dirac),
                      self.params.add("blend.bias", np.zeros(3, DTYPE)))

    def bottleneck(self, cover: Tensor, msg: Tensor) -> Tensor:
        _check_image(cover, self.cfg, "embedder")
        if msg.ndim != 2 or msg.shape != (cover.shape[0], self.cfg.msg_bits):
            raise DimensionError(
                f"embedder: expected message of shape ({cover.shape[0]},{self.cfg.msg_bits}), got {msg.shape}")
        features = _run_encoder(self.encoder, cover)
        side = self.cfg.latent_size
        return ops.concat_channels(features, ops.expand_planes(msg, side, side))

    def residual(self, cover: Tensor, msg: Tensor) -> Tensor:
        x = self.bottleneck(cover, msg)
        last = len(self.decoder) - 1
        for i, (w, b) in enumerate(self.decoder):
            x = ops.conv_transpose2d(x, w, b)
            if i < last:
                x = ops.relu(x)
        return x

    def __call__(self, cover: Tensor, msg: Tensor) -> Tensor:
        mixed = ops.add(cover, self.residual(cover, msg))
        return ops.conv2d(mixed, *self.blend, stride=1)


class Extractor:
    """Encoder stack, global average pool and a linear layer of ``msg_bits`` outputs.

    The outputs are the decoded message M' directly; bits are ``M' > 0.5``.
    """

    def __init__(self, cfg: ModelConfig, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        rng = _rng(cfg, 1) if rng is None else rng
        self.params = ParamStore("extractor")
        self.encoder = _encoder(self.params, rng, cfg)
        fc = cfg.feature_channels
        self.head = (self.params.add("head.weight", _kaiming(rng, (cfg.msg_bits, fc), fc, 1.0)),
                     self.params.add("head.bias", np.zeros(cfg.msg_bits, DTYPE)))

    def __call__(self, image: Tensor) -> Tensor:
        _check_image(image, self.cfg, "extractor")
        pooled = ops.global_avg_pool(_run_encoder(self.encoder, image))
        return ops.linear(pooled, *self.head)


class Discriminator:
    """Encoder stack, global average pool, one linear node and a sigmoid: P(cover)."""

    def __init__(self, cfg: ModelConfig, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        rng = _rng(cfg, 2) if rng is None else rng
        self.params = ParamStore("discriminator")
        self.encoder = _encoder(self.params, rng, cfg)
        fc = cfg.feature_channels
        self.head = (self.params.add("head.weight", _kaiming(rng, (1, fc), fc, 1.0)),
                     self.params.add("head.bias", np.zeros(1, DTYPE)))

    def __call__(self, image: Tensor) -> Tensor:
        _check_image(image, self.cfg, "discriminator")
        pooled = ops.global_avg_pool(_run_encoder(self.encoder, image))
        return ops.sigmoid(ops.linear(pooled, *self.head))


def build_embedder(cfg: ModelConfig) -> Embedder:
    return Embedder(cfg)


def build_extractor(cfg: ModelConfig) -> Extractor:
    return Extractor(cfg)


def build_discriminator(cfg: ModelConfig) -> Discriminator:
    return Discriminator(cfg)


def decode_bits(decoded: np.ndarray) -> np.ndarray:
    """Hard bits from the extractor output; exactly 0.5 decodes to 0."""
    return (np.asarray(decoded) > 0.5).astype(np.uint8)


class StegoModel:
    """The embedder/extractor/discriminator triple for one config."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.embedder = build_embedder(cfg)
        self.extractor = build_extractor(cfg)
        self.discriminator = build_discriminator(cfg)

    @property
    def stores(self) -> list[ParamStore]:
        return [self.embedder.params, self.extractor.params, self.discriminator.params]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [item for store in self.stores for item in store.items()]

    def generator_params(self) -> list[Tensor]:
        return self.embedder.params.tensors() + self.extractor.params.tensors()

    def discriminator_params(self) -> list[Tensor]:
        return self.discriminator.params.tensors()

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        names = [n for n, _ in self.named_parameters()]
        missing = set(names) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:3]}")
        for name, t in self.named_parameters():
            if state[name].shape != t.shape:
                raise DimensionError(f"{name}: stored shape {state[name].shape} != {t.shape}")
            t.data = np.array(state[name], dtype=DTYPE)

    # Inference helpers on plain float arrays in [0, 1]; no tape involved.
    def embed(self, covers: np.ndarray, msgs: np.ndarray, clamp: bool = True) -> np.ndarray:
        out = self.embedder(Tensor(covers), Tensor(msgs)).data
        return np.clip(out, 0.0, 1.0) if clamp else out

    def extract(self, images: np.ndarray) -> np.ndarray:
        """Decoded message M' (real-valued) for a batch of images."""
        return self.extractor(Tensor(images)).data

    def extract_bits(self, images: np.ndarray) -> np.ndarray:
        return decode_bits(self.extract(images))


@dataclass
class LossTerms:
    total: Tensor
    image: Tensor
    message: Tensor
    adversarial: Tensor

    def values(self) -> tuple[float, float, float, float]:
        return (self.total.item(), self.image.item(), self.message.item(), self.adversarial.item())


def total_loss(cfg: ModelConfig, cover: Tensor, stego: Tensor, msg: Tensor, decoded: Tensor,
               p_stego: Tensor) -> LossTerms:
    """Weighted sum of image distortion, message distortion and adversarial terms.

    ``decoded`` is the raw extractor output; no squashing before the l2
    distance, since a sigmoid there traps confidently wrong bits.
    """
    l_i = ops.mse_loss(cover, stego)
    l_m = ops.mse_loss(msg, decoded)
    l_g = ops.generator_loss(p_stego)
    e = l_i * cfg.lambda_i + l_m * cfg.lambda_m + l_g * cfg.lambda_g
    return LossTerms(e, l_i, l_m, l_g)


@dataclass(frozen=True)
class FeatureCapacity:
    k: int
    msg_bits: int

    @property
    def feature_channels(self) -> int:
        return 2 ** (2 * self.k)

    @property
    def message_channels(self) -> int:
        return self.msg_bits

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.msg_bits, self.feature_channels)

    def __str__(self) -> str:
        return f"rho(k={self.k}, |M|={self.msg_bits}) = {float(self.ratio):.4f}"


def feature_capacity(k: int, msg_bits: int) -> FeatureCapacity:
    if k < 1 or msg_bits < 1:
        raise ValueError("k and msg_bits must be >= 1")
    return FeatureCapacity(k, msg_bits)


def bits_per_pixel(block: int, msg_bits: int) -> Fraction:
    """Embedded bits per subpixel of one block (w * h * 3 denominator)."""
    return Fraction(msg_bits, block * block * 3)


def model_complexity(cfg: ModelConfig) -> tuple[int, int]:
    """(parameter count of all three networks, FLOPs of one embed pass over a block).

    FLOPs are two per multiply-accumulate of the conv and transposed-conv layers.
    """
    model = StegoModel(cfg)
    params = sum(store.count() for store in model.stores)

    macs = 0
    side = cfg.block
    ci = 3
    for co in cfg.channels:
        side //= 2
        macs += ci * co * 9 * side * side
        ci = co
    widths = [cfg.feature_channels + cfg.msg_bits] + cfg.channels[-2::-1] + [3]
    for c_in, c_out in zip(widths[:-1], widths[1:]):
        # every input pixel scatters a 3x3 kernel into each output channel
        macs += c_in * c_out * 9 * side * side
        side *= 2
    macs += 3 * 3 * 9 * cfg.block * cfg.block
    return params, 2 * macs
