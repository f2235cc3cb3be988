"""Regenerate the regression fixtures: ``python tests/fixtures/make_fixtures.py``.

Only needed after a deliberate change to the numerics or the file formats;
the checkpoint test compares fresh output against these files byte for byte.
"""
from pathlib import Path

import numpy as np

from mshidden.checkpoint import save_checkpoint
from mshidden.codec import embed_message
from mshidden.data import Dataset, synthetic_image, synthetic_images
from mshidden.images import write_image
from mshidden.models import ModelConfig
from mshidden.training import TrainRun, train

HERE = Path(__file__).parent
CFG = ModelConfig(block=16, k=2, msg_bits=8, seed=11)
PAYLOAD = b"regression"
EMBED_SEED = 5


def cover() -> np.ndarray:
    return synthetic_image(np.random.default_rng(42), 96, 96)


def main():
    data = Dataset.from_arrays(synthetic_images(256, 24, seed=8), CFG)
    ckpt = train(TrainRun(CFG, epochs=40, batch_size=16, dataset=data))
    save_checkpoint(ckpt, HERE / "regression.ckpt")
    write_image(HERE / "regression_cover.png", cover())
    write_image(HERE / "regression_stego.png", embed_message(ckpt, cover(), PAYLOAD, seed=EMBED_SEED))
    print("best", ckpt.best)


if __name__ == "__main__":
    main()
