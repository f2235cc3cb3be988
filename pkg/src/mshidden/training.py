"""Adversarial training: one discriminator step, then one embedder+extractor step per batch."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .checkpoint import Checkpoint, save_checkpoint
from .data import Dataset
from .engine import ops
from .engine.optim import AdamState, adam_step
from .engine.tensor import DTYPE, Tape, Tensor
from .models import ModelConfig, StegoModel, decode_bits, total_loss

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class StepMetrics:
    total: float
    image: float
    message: float
    adversarial: float
    discriminator: float
    ber: float


@dataclass
class Optimizers:
    generator: AdamState
    discriminator: AdamState

    @classmethod
    def for_model(cls, model: StegoModel) -> "Optimizers":
        cfg = model.cfg
        hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        return cls(AdamState.for_params(model.generator_params(), **hyper),
                   AdamState.for_params(model.discriminator_params(), **hyper))


def random_messages(rng: np.random.Generator, n: int, bits: int) -> np.ndarray:
    return rng.integers(0, 2, size=(n, bits)).astype(DTYPE)


def sample_batch(dataset: Dataset, batch_size: int, rng: np.random.Generator,
                 order: Optional[np.ndarray] = None, step: int = 0):
    """Covers for batch ``step`` of an epoch plus fresh fair-coin messages.

    ``order`` is the epoch's permutation of the dataset; when omitted a new one
    is drawn from ``rng``. Covers never repeat within an epoch.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if batch_size > len(dataset):
        raise ValueError(f"dataset smaller than batch ({len(dataset)} < {batch_size})")
    if order is None:
        order = rng.permutation(len(dataset))
    idx = order[step * batch_size:(step + 1) * batch_size]
    if len(idx) < batch_size:
        raise IndexError(f"step {step} is past the end of the epoch")
    covers = dataset.crops(idx, rng)
    msgs = random_messages(rng, batch_size, dataset.msg_bits)
    return covers, msgs


def _finite(name: str, value: float, step: int) -> float:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {name} loss ({value}) at step {step}")
    return value


def train_step(model: StegoModel, covers: np.ndarray, msgs: np.ndarray, opt: Optimizers,
               step: int = 0) -> StepMetrics:
    cfg = model.cfg
    cover = Tensor(covers)
    msg = Tensor(msgs)
    d_params = model.discriminator_params()
    g_params = model.generator_params()

    g_tape = Tape()
    with g_tape:
        stego = model.embedder(cover, msg)
        decoded = model.extractor(stego)

    # discriminator sees the current stego, detached from the generator graph
    with Tape() as d_tape:
        l_d, _ = ops.adversarial_losses(model.discriminator(cover),
                                        model.discriminator(stego.detach()))
    _finite("discriminator", l_d.item(), step)
    adam_step(d_params, d_tape.gradient(l_d, d_params), opt.discriminator)

    with g_tape:
        terms = total_loss(cfg, cover, stego, msg, decoded, model.discriminator(stego))

    for name, t in zip(("E", "L_I", "L_M", "L_G"),
                       (terms.total, terms.image, terms.message, terms.adversarial)):
        _finite(name, t.item(), step)
    adam_step(g_params, g_tape.gradient(terms.total, g_params), opt.generator)

    e, l_i, l_m, l_g = terms.values()
    return StepMetrics(e, l_i, l_m, l_g, l_d.item(), metrics.ber(msgs, decode_bits(decoded.data)))


def evaluate(model: StegoModel, covers: np.ndarray, msgs: np.ndarray, batch: int = 64):
    """Pre-quantization BER and 8-bit PSNR of a held-out set."""
    stegos, bits = [], []
    for i in range(0, len(covers), batch):
        s = model.embed(covers[i:i + batch], msgs[i:i + batch])
        stegos.append(s)
        bits.append(model.extract_bits(s))
    stego = np.concatenate(stegos)
    ber = metrics.ber(msgs, np.concatenate(bits))
    psnr = metrics.psnr(metrics.to_uint8(covers), metrics.to_uint8(stego))
    return ber, psnr


@dataclass
class EpochRecord:
    epoch: int
    total: float
    image: float
    message: float
    adversarial: float
    val_ber: float
    val_psnr: float


@dataclass
class TrainRun:
    cfg: ModelConfig
    data_dir: Optional[Path] = None
    epochs: int = 150
    batch_size: int = 30
    out: Optional[Path] = None
    dataset: Optional[Dataset] = None
    max_steps: Optional[int] = None  # stop early once this many batches have run
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def _better(candidate: tuple[float, float], best: Optional[tuple[float, float]]) -> bool:
    # lowest BER first, then highest PSNR
    if best is None:
        return True
    return (candidate[0], -candidate[1]) < (best[0], -best[1])


def train(run: TrainRun, log_path: Optional[Path] = None) -> Checkpoint:
    """Train for ``run.epochs`` epochs (or ``run.max_steps`` batches); returns the best checkpoint.

    When ``run.out`` is set, the best checkpoint is written there and the
    final one next to it with a ``.final`` suffix.
    """
    cfg = run.cfg
    dataset = run.dataset if run.dataset is not None else Dataset.from_dir(run.data_dir, cfg)
    train_set, val_set = dataset.split()
    if len(train_set) < run.batch_size:
        raise ValueError(f"dataset smaller than batch ({len(train_set)} < {run.batch_size})")

    model = StegoModel(cfg)
    opt = Optimizers.for_model(model)
    rng = np.random.default_rng([cfg.seed, 100])
    val_rng = np.random.default_rng([cfg.seed, 200])
    val_covers = val_set.center_crops()
    val_msgs = random_messages(val_rng, len(val_covers), cfg.msg_bits)

    best = Checkpoint.from_model(model, step=0)
    best_score = None
    steps = 0
    writer = None
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "E", "L_I", "L_M", "L_G", "val_BER", "val_PSNR"])
    try:
        for epoch in range(run.epochs):
            if run.max_steps is not None and steps >= run.max_steps:
                break
            order = rng.permutation(len(train_set))
            sums = np.zeros(4)
            n_steps = len(train_set) // run.batch_size
            if run.max_steps is not None:
                n_steps = min(n_steps, run.max_steps - steps)
            for s in range(n_steps):
                covers, msgs = sample_batch(train_set, run.batch_size, rng, order, s)
                m = train_step(model, covers, msgs, opt, steps)
                sums += (m.total, m.image, m.message, m.adversarial)
                steps += 1
            means = sums / max(n_steps, 1)
            val_ber, val_psnr = evaluate(model, val_covers, val_msgs)
            rec = EpochRecord(epoch + 1, *means, val_ber, val_psnr)
            run.history.append(rec)
            log.info("epoch %d E=%.5f L_I=%.6f L_M=%.5f L_G=%.4f val BER=%.4f PSNR=%.2f",
                     rec.epoch, *means, val_ber, val_psnr)
            if writer:
                writer.writerow([rec.epoch, *(f"{v:.6g}" for v in means), f"{val_ber:.6g}", f"{val_psnr:.4f}"])
                log_file.flush()
            if _better((val_ber, val_psnr), best_score):
                best_score = (val_ber, val_psnr)
                best = Checkpoint.from_model(model, step=steps, best=(epoch + 1, val_ber, val_psnr))
                if run.out is not None:
                    save_checkpoint(best, run.out)
    finally:
        if log_file:
            log_file.close()

    final = Checkpoint.from_model(model, step=steps, best=best.best)
    if run.out is not None:
        if best_score is None:
            save_checkpoint(best, run.out)
        save_checkpoint(final, Path(str(run.out) + ".final"))
    return best
