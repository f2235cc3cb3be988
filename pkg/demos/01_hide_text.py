# coding: utf-8

# # Hiding a short text in an image
#
# This walk-through trains a small model on synthetic images, hides a text
# message in a larger cover, reads it back and saves the amplified
# difference between cover and stego. Training takes about half a minute
# on a laptop CPU.

# In[1]:

import logging
from pathlib import Path

import numpy as np

from mshidden import metrics
from mshidden.bench import bench
from mshidden.checkpoint import save_checkpoint
from mshidden.codec import embed_message, extract_message, max_payload_bytes, plan_blocks
from mshidden.data import Dataset, synthetic_image, synthetic_images
from mshidden.images import read_image, write_image
from mshidden.models import ModelConfig, bits_per_pixel, feature_capacity
from mshidden.training import TrainRun, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
out = Path("demo_out")
out.mkdir(exist_ok=True)


# Each 32x32 block carries 16 bits. With k=3 the bottleneck has 64 feature
# channels, so the message takes a quarter of them.

# In[2]:

cfg = ModelConfig(block=32, k=3, msg_bits=16, seed=0, lambda_i=20.0)
print(feature_capacity(cfg.k, cfg.msg_bits))
print("bits per subpixel", float(bits_per_pixel(cfg.block, cfg.msg_bits)))


# Train on 512 synthetic 48x48 images; every batch takes random 32x32 crops.
# The image loss weight is raised to 20 so the stego stays above 30 dB.

# In[3]:

data = Dataset.from_arrays(synthetic_images(512, 48, seed=5), cfg)
ckpt = train(TrainRun(cfg, epochs=30, batch_size=16, dataset=data))
save_checkpoint(ckpt, out / "desk.ckpt")
print("best epoch, val BER, val PSNR:", ckpt.best)


# A 416x320 cover holds 130 blocks. The frame adds 10 bytes of header and
# CRC around the payload.

# In[4]:

model = ckpt.to_model()
cover = synthetic_image(np.random.default_rng(2024), 320, 416)
print("capacity", max_payload_bytes(plan_blocks(416, 320, cfg.block), cfg.msg_bits), "bytes")

text = ("Meet at the north gate at 7:40 tomorrow. Bring the blue folder, two spare keys and a "
        "map; leave the car by the old grain mills.").encode()
stego = embed_message(model, cover, text, seed=1)
(out / "covers").mkdir(exist_ok=True)
write_image(out / "covers" / "cover.png", cover)
write_image(out / "stego.png", stego)
print(len(text), "bytes embedded, PSNR", round(metrics.psnr(cover, stego), 2), "dB")


# Read the PNG back from disk and decode.

# In[5]:

result = extract_message(model, read_image(out / "stego.png"))
print(result.payload.decode())
print("exact match:", result.payload == text)


# The bench embeds random full-capacity messages into every cover in a folder
# and writes |cover - stego| x 15 for each one.

# In[6]:

report = bench(model, out / "covers", repeats=1, diff_dir=out / "diff")
print(report.to_text())
print(sorted(p.name for p in (out / "diff").iterdir()))
