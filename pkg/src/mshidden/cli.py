"""``mshidden`` command line: train, embed, extract, bench, sweep, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 integrity error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .checkpoint import CheckpointError, load_checkpoint
from .codec import (CapacityError, FrameError, capacity_bits, embed_message, extract_message,
                    frame_bits, plan_blocks)
from .images import LOSSLESS, read_image, write_image
from .models import ModelConfig, bits_per_pixel, feature_capacity, model_complexity

log = logging.getLogger("mshidden")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTEGRITY = 0, 1, 2, 3
# published cost of the full-size (B=128, k=4, |M|=64) design, shown for comparison only
REFERENCE_CONFIG = (128, 4, 64)
REFERENCE_PARAMS_M = 1.2553
REFERENCE_GFLOPS = 0.3834


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class IntegrityError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_model(path):
    if not Path(path).is_file():
        raise DataError(f"model file not found: {path}")
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise IntegrityError(f"bad checkpoint {path}: {exc}") from exc


def _read(path):
    try:
        return read_image(path)
    except FileNotFoundError as exc:
        raise DataError(f"image not found: {path}") from exc
    except Exception as exc:  # noqa: BLE001 - Pillow raises a zoo of types for bad files
        raise DataError(f"cannot read image {path}: {exc}") from exc


def _write_report(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")


def cmd_train(args) -> int:
    from .training import TrainRun, train

    try:
        cfg = ModelConfig(block=args.block, k=args.k, msg_bits=args.msg_bits, lr=args.lr, seed=args.seed,
                          lambda_i=args.lambda_i, lambda_m=args.lambda_m, lambda_g=args.lambda_g)
        run = TrainRun(cfg, data_dir=Path(args.data), epochs=args.epochs, batch_size=args.batch,
                       out=Path(args.out))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not Path(args.data).is_dir():
        raise DataError(f"data directory not found: {args.data}")
    csv_path = Path(str(args.out) + ".csv")
    try:
        best = train(run, log_path=csv_path)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if run.history:
        last = run.history[-1]
        print(f"final val BER {last.val_ber:.6f}  PSNR {last.val_psnr:.2f} dB")
    if best.best is not None:
        epoch, ber, psnr = best.best
        print(f"best epoch {int(epoch)}: val BER {ber:.6f}  PSNR {psnr:.2f} dB")
    print(f"checkpoint {args.out} (final {args.out}.final, log {csv_path})")
    return EXIT_OK


def cmd_embed(args) -> int:
    if Path(args.out).suffix.lower() not in LOSSLESS:
        raise UsageError(f"--out must be a lossless {' or '.join(LOSSLESS)} file; lossy formats destroy the message")
    if args.message is not None:
        payload = args.message.encode("utf-8")
    else:
        try:
            payload = Path(args.message_file).read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read message file: {exc}") from exc
    ckpt = _load_model(args.model)
    cover = _read(args.cover)
    try:
        stego = embed_message(ckpt, cover, payload, seed=args.seed)
    except CapacityError as exc:
        raise DataError(f"message too large: required {exc.required} bits, available {exc.available} bits") from exc
    write_image(args.out, stego)
    layout = plan_blocks(stego.shape[1], stego.shape[0], ckpt.cfg.block)
    used, cap = frame_bits(len(payload)), capacity_bits(layout, ckpt.cfg.msg_bits)
    print(f"embedded {len(payload)} bytes: {used}/{cap} bits ({100.0 * used / cap:.1f}% of capacity)")
    print(f"PSNR vs cover {metrics.psnr(cover, stego):.2f} dB -> {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    ckpt = _load_model(args.model)
    stego = _read(args.stego)
    try:
        result = extract_message(ckpt, stego)
    except FrameError as exc:
        raise IntegrityError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if args.out:
        Path(args.out).write_bytes(result.payload)
        print(f"CRC ok: {len(result.payload)} bytes -> {args.out}", file=sys.stderr)
    else:
        sys.stdout.buffer.write(result.payload)
        sys.stdout.buffer.flush()
        print(f"\nCRC ok: {len(result.payload)} bytes", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import bench

    ckpt = _load_model(args.model)
    if not Path(args.data).is_dir():
        raise DataError(f"data directory not found: {args.data}")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    try:
        report = bench(ckpt.to_model(), Path(args.data), repeats=args.repeats, seed=args.seed,
                       diff_dir=Path(args.diff_dir) if args.diff_dir else None)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    _write_report(args.report, report.to_json())
    print(report.to_text())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .bench import SweepSpec, parse_settings, sweep, sweep_to_text

    try:
        settings = parse_settings(args.spec)
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not seeds:
        raise UsageError("--seeds is empty")
    if args.budget_steps < 1:
        raise UsageError("--budget-steps must be >= 1")
    if not Path(args.data).is_dir():
        raise DataError(f"data directory not found: {args.data}")
    spec = SweepSpec(settings, budget_steps=args.budget_steps, seeds=seeds, batch_size=args.batch)
    result = sweep(spec, data_dir=Path(args.data))
    _write_report(args.report, json.dumps(result, indent=2))
    print(sweep_to_text(result))
    return EXIT_OK


def cmd_inspect(args) -> int:
    ckpt = _load_model(args.model)
    cfg = ckpt.cfg
    cap = feature_capacity(cfg.k, cfg.msg_bits)
    params, flops = model_complexity(cfg)
    print("checkpoint   ok (magic, version, CRC-32, tensor shapes)")
    print(f"block        {cfg.block}")
    print(f"k            {cfg.k} (channels {', '.join(map(str, cfg.channels))})")
    print(f"msg bits     {cfg.msg_bits}")
    print(f"lambdas      I={cfg.lambda_i:g} M={cfg.lambda_m:g} G={cfg.lambda_g:g}")
    print(f"lr           {cfg.lr:g}")
    print(f"seed         {cfg.seed}")
    print(f"rho          {float(cap.ratio):.4f} ({cap.ratio})")
    print(f"BPP          {float(bits_per_pixel(cfg.block, cfg.msg_bits)):.4f}")
    ref = (cfg.block, cfg.k, cfg.msg_bits) == REFERENCE_CONFIG
    print(f"params       {params} ({params / 1e6:.4f} M)" + (f"; reference design {REFERENCE_PARAMS_M} M" if ref else ""))
    print(f"FLOPS        {flops} ({flops / 1e9:.4f} G per block)" + (f"; reference design {REFERENCE_GFLOPS} G" if ref else ""))
    print(f"step         {ckpt.step}")
    if ckpt.best is not None:
        epoch, ber, psnr = ckpt.best
        print(f"best         epoch {int(epoch)}, val BER {ber:.6f}, PSNR {psnr:.2f} dB")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="mshidden", description="Multi-scale autoencoder image steganography.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model", formatter_class=fmt)
    t.add_argument("--data", required=True, help="directory of training images")
    t.add_argument("--out", required=True, help="checkpoint path (best); FILE.final and FILE.csv are written too")
    t.add_argument("--block", type=int, default=128, help="block size B")
    t.add_argument("--k", type=int, default=4, help="encoder depth")
    t.add_argument("--msg-bits", type=int, default=64, help="message bits per block")
    t.add_argument("--epochs", type=int, default=150, help="training epochs")
    t.add_argument("--batch", type=int, default=30, help="batch size")
    t.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    t.add_argument("--seed", type=int, default=0, help="RNG seed")
    t.add_argument("--lambda-i", type=float, default=1.0, help="image loss weight")
    t.add_argument("--lambda-m", type=float, default=1.5, help="message loss weight")
    t.add_argument("--lambda-g", type=float, default=0.001, help="adversarial loss weight")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("embed", help="hide a message in a cover image", formatter_class=fmt)
    e.add_argument("--model", required=True, help="checkpoint file")
    e.add_argument("--cover", required=True, help="cover image")
    msg = e.add_mutually_exclusive_group(required=True)
    msg.add_argument("--message", help="text message (UTF-8 encoded)")
    msg.add_argument("--message-file", help="file whose raw bytes are embedded")
    e.add_argument("--out", required=True, help="stego image (.png or .ppm)")
    e.add_argument("--seed", type=int, default=0, help="seed for filler bits")
    e.set_defaults(func=cmd_embed)

    x = sub.add_parser("extract", help="recover a message from a stego image", formatter_class=fmt)
    x.add_argument("--model", required=True, help="checkpoint file")
    x.add_argument("--stego", required=True, help="stego image")
    x.add_argument("--out", default=None, help="write the payload here instead of stdout")
    x.set_defaults(func=cmd_extract)

    b = sub.add_parser("bench", help="benchmark a model on a directory of images", formatter_class=fmt)
    b.add_argument("--model", required=True, help="checkpoint file")
    b.add_argument("--data", required=True, help="directory of test images")
    b.add_argument("--repeats", type=int, default=100, help="random messages per image for BER averaging")
    b.add_argument("--report", required=True, help="JSON report path")
    b.add_argument("--seed", type=int, default=0, help="message RNG seed")
    b.add_argument("--diff-dir", default=None, help="write |cover - stego| x 15 difference images here")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", help="train and bench several (B, k, M) settings", formatter_class=fmt)
    s.add_argument("--data", required=True, help="directory of images")
    s.add_argument("--spec", required=True, help='settings as "B,k,M;B,k,M;..."')
    s.add_argument("--budget-steps", type=int, required=True, help="training batches per model")
    s.add_argument("--seeds", default="0", help='comma-separated seeds, e.g. "0,1,2"')
    s.add_argument("--batch", type=int, default=16, help="batch size")
    s.add_argument("--report", required=True, help="JSON report path")
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("inspect", help="print a checkpoint's configuration and cost", formatter_class=fmt)
    i.add_argument("--model", required=True, help="checkpoint file")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mshidden: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"mshidden: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IntegrityError as exc:
        print(f"mshidden: error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
