import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from mshidden.checkpoint import (BadMagicError, Checkpoint, CheckpointError, IntegrityError,
                                 UnsupportedVersionError, decode_checkpoint, encode_checkpoint, load_checkpoint,
                                 save_checkpoint)
from mshidden.codec import embed_message, extract_message
from mshidden.images import read_image
from mshidden.models import ModelConfig, StegoModel

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def ckpt():
    return Checkpoint.from_model(StegoModel(ModelConfig(block=16, k=2, msg_bits=8, seed=4)), step=17,
                                 best=(3.0, 0.125, 31.5))


def test_encode_decode_round_trip(ckpt):
    back = decode_checkpoint(encode_checkpoint(ckpt))
    assert (back.cfg.block, back.cfg.k, back.cfg.msg_bits, back.cfg.seed) == (16, 2, 8, 4)
    assert back.step == 17
    assert back.best == (3.0, 0.125, 31.5)
    assert list(back.params) == list(ckpt.params)
    for name, arr in ckpt.params.items():
        np.testing.assert_array_equal(back.params[name], arr)


def test_save_load_save_is_byte_identical(ckpt, tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(ckpt, a)
    save_checkpoint(load_checkpoint(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_header_layout(ckpt):
    raw = encode_checkpoint(ckpt)
    assert raw[:4] == b"MSHD"
    assert struct.unpack("<I", raw[4:8]) == (1,)
    assert struct.unpack("<III", raw[8:20]) == (16, 2, 8)
    assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(raw[:-4])


def test_every_truncation_is_rejected(ckpt):
    raw = encode_checkpoint(ckpt)
    cuts = sorted(set(range(0, 64)) | set(np.random.default_rng(0).integers(64, len(raw), 200).tolist()))
    for n in cuts:
        with pytest.raises(CheckpointError):
            decode_checkpoint(raw[:n])


def test_bit_flip_fails_crc(ckpt):
    raw = bytearray(encode_checkpoint(ckpt))
    raw[len(raw) // 2] ^= 0x10
    with pytest.raises(IntegrityError, match="CRC"):
        decode_checkpoint(bytes(raw))


def test_bad_magic_and_version(ckpt):
    raw = encode_checkpoint(ckpt)
    with pytest.raises(BadMagicError):
        decode_checkpoint(b"XXXX" + raw[4:])
    with pytest.raises(UnsupportedVersionError):
        decode_checkpoint(raw[:4] + struct.pack("<I", 2) + raw[8:])


def test_config_tensor_mismatch_is_rejected(ckpt):
    other = Checkpoint(ModelConfig(block=16, k=2, msg_bits=9), ckpt.params)
    with pytest.raises(IntegrityError, match="shape|match"):
        decode_checkpoint(encode_checkpoint(other))


def test_failed_save_keeps_old_file(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    before = path.read_bytes()
    broken = Checkpoint(ckpt.cfg, {"x": object()})
    with pytest.raises(Exception):
        save_checkpoint(broken, path)
    assert path.read_bytes() == before
    assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]


def test_regression_fixture_reproduces_stego_png(tmp_path):
    from fixtures.make_fixtures import EMBED_SEED, PAYLOAD, cover
    from mshidden.images import write_image

    model = load_checkpoint(FIXTURES / "regression.ckpt")
    out = tmp_path / "stego.png"
    write_image(out, embed_message(model, cover(), PAYLOAD, seed=EMBED_SEED))
    assert out.read_bytes() == (FIXTURES / "regression_stego.png").read_bytes()
    assert extract_message(model, read_image(FIXTURES / "regression_stego.png")).payload == PAYLOAD
