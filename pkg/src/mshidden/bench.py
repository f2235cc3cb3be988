"""Benchmark and feature-capacity sweep runners.

``bench`` embeds a random full-capacity message into every image and reports
bit error (before and after 8-bit quantization) alongside PSNR, SSIM and MAE.
``sweep`` trains one model per (B, k, |M|) setting and seed under a shared
step budget and benches each on held-out images.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .codec import embed_blocks, extract_blocks, plan_blocks
from .data import Dataset
from .images import list_images, read_image, write_image
from .models import ModelConfig, bits_per_pixel, decode_bits, feature_capacity, model_complexity

log = logging.getLogger(__name__)

JSON_FIELDS = ("ber", "ber_quantized", "psnr_db", "ssim", "mae", "bpp", "params", "flops", "embed_seconds")


@dataclass
class ImageRow:
    name: str
    ber: float
    ber_quantized: float
    psnr_db: float
    psnr_float_db: float
    ssim: float
    mae: float
    embed_seconds: float


@dataclass
class BenchReport:
    dataset: str
    config: dict
    rows: list
    ber: float
    ber_quantized: float
    psnr_db: float
    psnr_float_db: float
    ssim: float
    mae: float
    bpp: float
    params: int
    flops: int
    embed_seconds: float
    skipped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [
            f"dataset      {self.dataset}",
            f"config       B={self.config['block']} k={self.config['k']} |M|={self.config['msg_bits']}",
            f"images       {len(self.rows)} ({self.skipped} skipped)",
            f"bit-error    {self.ber:.6f}",
            f"bit-error/q8 {self.ber_quantized:.6f}",
            f"PSNR         {self.psnr_db:.2f} dB (float {self.psnr_float_db:.2f} dB)",
            f"SSIM         {self.ssim:.4f}",
            f"MAE          {self.mae:.2f}",
            f"BPP          {self.bpp:.4f}",
            f"params       {self.params / 1e6:.4f} M",
            f"FLOPS        {self.flops / 1e9:.4f} G per block",
            f"embed time   {self.embed_seconds:.4f} s/image",
        ]
        return "\n".join(lines)


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else float("nan")


def load_bench_images(directory) -> tuple[list, int]:
    """[(name, image)] for every decodable image, plus the count skipped."""
    out, skipped = [], 0
    for path in list_images(directory):
        try:
            out.append((path.name, read_image(path)))
        except Exception as exc:  # noqa: BLE001 - a broken file is counted, not fatal
            log.warning("skipping %s: %s", path, exc)
            skipped += 1
    return out, skipped


def bench(model, images, repeats: int = 100, seed: int = 0, dataset: str = "",
          diff_dir: Optional[Path] = None, skipped: int = 0) -> BenchReport:
    """Benchmark ``model`` on ``images`` (a directory or a list of (name, uint8 image)).

    ``model`` needs ``cfg``, ``embed(covers, msgs)`` and ``extract(images)``;
    anything with that shape works, including trivial stubs.
    """
    if isinstance(images, (str, Path)):
        dataset = dataset or Path(images).name
        images, skipped = load_bench_images(images)
    if not images:
        raise ValueError("no decodable images to benchmark")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    cfg = model.cfg
    rng = np.random.default_rng(seed)
    rows = []
    for name, cover in images:
        layout = plan_blocks(cover.shape[1], cover.shape[0], cfg.block)
        bers, bers_q, seconds = [], [], []
        first = None
        for r in range(repeats):
            bits = rng.integers(0, 2, size=(layout.count, cfg.msg_bits)).astype(np.uint8)
            t0 = time.perf_counter()
            stego = embed_blocks(model, cover, bits)
            seconds.append(time.perf_counter() - t0)
            stego8 = metrics.to_uint8(stego)
            bers.append(metrics.ber(bits, decode_bits(extract_blocks(model, stego))))
            bers_q.append(metrics.ber(bits, decode_bits(extract_blocks(model, stego8))))
            if first is None:
                first = (stego, stego8)
        stego, stego8 = first
        cover_f = cover.astype(np.float64) / 255.0
        rows.append(ImageRow(
            name=name,
            ber=_mean(bers),
            ber_quantized=_mean(bers_q),
            psnr_db=metrics.psnr(cover, stego8),
            psnr_float_db=metrics.psnr(cover_f, np.clip(stego, 0, 1), max_value=1.0),
            ssim=metrics.ssim(cover, stego8) if min(cover.shape[:2]) >= metrics.SSIM_WINDOW else float("nan"),
            mae=metrics.mae(cover, stego8),
            embed_seconds=_mean(seconds),
        ))
        if diff_dir is not None:
            diff_dir = Path(diff_dir)
            diff_dir.mkdir(parents=True, exist_ok=True)
            write_image(diff_dir / f"{Path(name).stem}_diff.png", metrics.difference_image(cover, stego8))

    params, flops = model_complexity(cfg)
    return BenchReport(
        dataset=dataset,
        config={"block": cfg.block, "k": cfg.k, "msg_bits": cfg.msg_bits},
        rows=rows,
        ber=_mean([r.ber for r in rows]),
        ber_quantized=_mean([r.ber_quantized for r in rows]),
        psnr_db=_mean([r.psnr_db for r in rows]),
        psnr_float_db=_mean([r.psnr_float_db for r in rows]),
        ssim=float(np.nanmean([r.ssim for r in rows])) if any(math.isfinite(r.ssim) for r in rows) else float("nan"),
        mae=_mean([r.mae for r in rows]),
        bpp=float(bits_per_pixel(cfg.block, cfg.msg_bits)),
        params=params,
        flops=flops,
        embed_seconds=_mean([r.embed_seconds for r in rows]),
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepSpec:
    settings: list  # (B, k, msg_bits) triples
    budget_steps: int = 1000
    seeds: list = field(default_factory=lambda: [0])
    batch_size: int = 16
    repeats: int = 1

    def __post_init__(self):
        for b, k, m in self.settings:
            ModelConfig(block=b, k=k, msg_bits=m)


def parse_settings(text: str) -> list[tuple[int, int, int]]:
    """Parse ``"B,k,M;B,k,M;..."``; raises ValueError naming the offending triple."""
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            b, k, m = (int(v) for v in part.split(","))
            ModelConfig(block=b, k=k, msg_bits=m)
        except ValueError as exc:
            raise ValueError(f"bad sweep setting {part!r}: expected B,k,M ({exc})") from exc
        out.append((b, k, m))
    if not out:
        raise ValueError("sweep spec is empty")
    return out


@dataclass
class SweepRow:
    block: int
    k: int
    msg_bits: int
    seed: int
    rho: float
    bpp: float
    ber: Optional[float] = None
    psnr_db: Optional[float] = None
    mae: Optional[float] = None
    error: Optional[str] = None


def sweep(spec: SweepSpec, data_dir=None, dataset: Optional[Dataset] = None) -> dict:
    """Train and bench every (setting, seed); returns {"rows": [...], "hypotheses": [...]}."""
    from .training import TrainRun, train

    rows = []
    for b, k, m in spec.settings:
        for seed in spec.seeds:
            cap = feature_capacity(k, m)
            row = SweepRow(b, k, m, seed, float(cap.ratio), float(bits_per_pixel(b, m)))
            try:
                cfg = ModelConfig(block=b, k=k, msg_bits=m, seed=seed)
                ds = Dataset.from_dir(data_dir, cfg) if dataset is None else \
                    Dataset(dataset.images, dataset.names, b, m)
                run = TrainRun(cfg, epochs=10 ** 9, batch_size=spec.batch_size, dataset=ds,
                               max_steps=spec.budget_steps)
                model = train(run).to_model()
                _, held_out = ds.split()
                crops = held_out.center_crops()
                images = [(n, metrics.to_uint8(c.transpose(1, 2, 0))) for n, c in zip(held_out.names, crops)]
                report = bench(model, images, repeats=spec.repeats, seed=seed)
                row.ber, row.psnr_db, row.mae = report.ber, report.psnr_db, report.mae
            except Exception as exc:  # noqa: BLE001 - one failed setting must not sink the sweep
                log.exception("sweep setting B=%d k=%d M=%d seed=%d failed", b, k, m, seed)
                row.error = str(exc)
            rows.append(row)
    return {"rows": [asdict(r) for r in rows], "hypotheses": hypothesis_summary(rows)}


def hypothesis_summary(rows: Sequence[SweepRow]) -> list[dict]:
    """Pairwise BER comparisons per seed.

    Equal-k pairs check "more bits, no lower BER"; equal-rho pairs report the
    BER gap. These are observations, not assertions.
    """
    out = []
    done = [r for r in rows if r.error is None]
    for i, a in enumerate(done):
        for b in done[i + 1:]:
            if a.seed != b.seed:
                continue
            if a.k == b.k and a.block == b.block and a.msg_bits != b.msg_bits:
                lo, hi = (a, b) if a.msg_bits < b.msg_bits else (b, a)
                out.append({"kind": "equal_k", "seed": a.seed, "k": a.k,
                            "smaller": [lo.block, lo.k, lo.msg_bits], "larger": [hi.block, hi.k, hi.msg_bits],
                            "ber_smaller": lo.ber, "ber_larger": hi.ber,
                            "holds": hi.ber >= lo.ber})
            if a.rho == b.rho and (a.k, a.msg_bits) != (b.k, b.msg_bits):
                out.append({"kind": "equal_rho", "seed": a.seed, "rho": a.rho,
                            "a": [a.block, a.k, a.msg_bits], "b": [b.block, b.k, b.msg_bits],
                            "ber_a": a.ber, "ber_b": b.ber, "ber_gap": abs(a.ber - b.ber)})
    return out


def sweep_to_text(result: dict) -> str:
    head = f"{'B':>4} {'k':>2} {'|M|':>4} {'seed':>4} {'rho':>7} {'BPP':>7} {'BER':>9} {'PSNR':>7} {'MAE':>6}"
    lines = [head]
    for r in result["rows"]:
        if r["error"]:
            lines.append(f"{r['block']:>4} {r['k']:>2} {r['msg_bits']:>4} {r['seed']:>4} "
                         f"{r['rho']:>7.4f} {r['bpp']:>7.4f}  failed: {r['error']}")
            continue
        lines.append(f"{r['block']:>4} {r['k']:>2} {r['msg_bits']:>4} {r['seed']:>4} {r['rho']:>7.4f} "
                     f"{r['bpp']:>7.4f} {r['ber']:>9.6f} {r['psnr_db']:>7.2f} {r['mae']:>6.2f}")
    for h in result["hypotheses"]:
        if h["kind"] == "equal_k":
            lines.append(f"seed {h['seed']}: BER{tuple(h['larger'])}={h['ber_larger']:.6f} >= "
                         f"BER{tuple(h['smaller'])}={h['ber_smaller']:.6f}: {'yes' if h['holds'] else 'no'}")
        else:
            lines.append(f"seed {h['seed']}: rho={h['rho']:.4f} BER{tuple(h['a'])}={h['ber_a']:.6f} vs "
                         f"BER{tuple(h['b'])}={h['ber_b']:.6f}")
    return "\n".join(lines)
