from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mshidden.checkpoint import load_checkpoint
from mshidden.codec import (FRAME_OVERHEAD, CapacityError, CorruptedFrame, NotAStegoFrame, assign_bits,
                            capacity_bits, embed_message, extract_message, frame_bits, frame_decode, frame_encode,
                            max_payload_bytes, plan_blocks, tile, untile)
from mshidden.data import synthetic_image

from oracles import bytes_to_bits, frame_bytes

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def model():
    return load_checkpoint(FIXTURES / "regression.ckpt").to_model()


def test_frame_matches_oracle_on_1000_payloads():
    rng = np.random.default_rng(0)
    sizes = [0, 1, 65536] + np.exp(rng.uniform(0, np.log(65536), 997)).astype(int).tolist()
    for n in sizes:
        payload = rng.bytes(n)
        bits = frame_encode(payload)
        if n <= 512:
            assert bits.tolist() == bytes_to_bits(frame_bytes(payload))
        assert bits.size == frame_bits(n)
        assert frame_decode(bits) == payload


def test_empty_payload_frame_is_80_bits():
    assert frame_encode(b"").size == 80 == 8 * FRAME_OVERHEAD
    assert frame_decode(frame_encode(b"")) == b""


def test_trailing_bits_are_ignored():
    bits = np.concatenate([frame_encode(b"abc"), np.ones(37, np.uint8)])
    assert frame_decode(bits) == b"abc"


def test_bad_magic_is_not_a_frame():
    bits = frame_encode(b"hello")
    bits[3] ^= 1
    with pytest.raises(NotAStegoFrame, match="not a stego frame"):
        frame_decode(bits)
    with pytest.raises(NotAStegoFrame):
        frame_decode(np.zeros(20, np.uint8))


def test_flipped_payload_bit_is_corruption():
    bits = frame_encode(b"hello world")
    bits[60] ^= 1
    conf = np.full(bits.size, 0.4)
    conf[60] = 0.01
    with pytest.raises(CorruptedFrame, match=r"corrupted message \(1 bit errors suspected\)") as info:
        frame_decode(bits, confidence=conf)
    assert info.value.suspected == 1


def test_overlong_length_field_is_corruption():
    bits = frame_encode(b"hi")[:-8]
    with pytest.raises(CorruptedFrame):
        frame_decode(bits)


@settings(max_examples=200, deadline=None)
@given(payload=st.binary(max_size=300))
def test_frame_round_trip_property(payload):
    assert frame_decode(frame_encode(payload)) == payload


def test_tile_untile_identity_on_200_sizes():
    rng = np.random.default_rng(1)
    for _ in range(200):
        h, w = (int(v) for v in rng.integers(1, 301, 2))
        block = int(rng.choice([8, 16, 32, 128]))
        img = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        layout = plan_blocks(w, h, block)
        blocks = tile(img, layout)
        assert blocks.shape == (layout.rows * layout.cols, block, block, 3)
        np.testing.assert_array_equal(untile(blocks, layout), img)


def test_tile_is_row_major_with_edge_padding():
    img = np.arange(5 * 7 * 1).reshape(5, 7, 1)
    layout = plan_blocks(7, 5, 4)
    assert (layout.rows, layout.cols, layout.pad_bottom, layout.pad_right) == (2, 2, 3, 1)
    blocks = tile(img, layout)
    np.testing.assert_array_equal(blocks[1][:, :3, 0], img[:4, 4:7, 0])
    np.testing.assert_array_equal(blocks[1][:, 3, 0], img[:4, 6, 0])  # replicated right edge
    np.testing.assert_array_equal(blocks[2][1:, :, 0], np.repeat(img[4:5, :4, 0], 3, axis=0))


def test_interior_blocks_and_capacity():
    layout = plan_blocks(100, 70, 32)
    assert layout.count == 4 * 3
    assert layout.interior == [0, 1, 2, 4, 5, 6]
    assert capacity_bits(layout, 16) == 96
    assert max_payload_bytes(layout, 16) == 96 // 8 - 10
    assert max_payload_bytes(plan_blocks(31, 31, 32), 16) < 0


def test_assign_bits_places_stream_in_interior_order():
    layout = plan_blocks(40, 40, 16)  # 3x3 grid, interior = 0, 1, 3, 4
    bits = np.arange(20) % 2
    out = assign_bits(bits.astype(np.uint8), layout, 8, np.random.default_rng(0))
    stream = out[layout.interior].reshape(-1)
    np.testing.assert_array_equal(stream[:20], bits)
    again = assign_bits(bits.astype(np.uint8), layout, 8, np.random.default_rng(0))
    np.testing.assert_array_equal(out, again)
    with pytest.raises(CapacityError):
        assign_bits(np.zeros(33, np.uint8), layout, 8, np.random.default_rng(0))


def test_capacity_boundary(model):
    cover = synthetic_image(np.random.default_rng(3), 64, 80)
    layout = plan_blocks(80, 64, model.cfg.block)
    limit = max_payload_bytes(layout, model.cfg.msg_bits)
    assert limit == 20 * 8 // 8 - 10
    embed_message(model, cover, b"x" * limit)
    with pytest.raises(CapacityError) as info:
        embed_message(model, cover, b"x" * (limit + 1))
    assert info.value.required == 8 * (limit + 1 + FRAME_OVERHEAD)
    assert info.value.available == 160


@pytest.mark.parametrize("payload", [b"", b"hi", "unicode éø中".encode()])
def test_embed_extract_round_trip(model, payload):
    cover = synthetic_image(np.random.default_rng(17), 101, 133)
    stego = embed_message(model, cover, payload, seed=2)
    assert stego.shape == cover.shape and stego.dtype == np.uint8
    result = extract_message(model, stego)
    assert result.payload == payload
    assert result.bits_used == frame_bits(len(payload))


def test_grayscale_cover_is_replicated(model):
    gray = synthetic_image(np.random.default_rng(5), 64, 64)[:, :, 0]
    stego = embed_message(model, gray, b"g")
    assert stego.shape == (64, 64, 3)
    assert extract_message(model, stego).payload == b"g"


def test_plain_cover_is_not_a_frame(model):
    cover = synthetic_image(np.random.default_rng(8), 64, 64)
    with pytest.raises(NotAStegoFrame):
        extract_message(model, cover)


def test_image_smaller_than_block_cannot_be_read(model):
    with pytest.raises(ValueError, match="smaller than the model block"):
        extract_message(model, np.zeros((8, 40, 3), np.uint8))


def test_embedding_is_deterministic(model):
    cover = synthetic_image(np.random.default_rng(9), 64, 64)
    a = embed_message(model, cover, b"same", seed=1)
    b = embed_message(model, cover, b"same", seed=1)
    np.testing.assert_array_equal(a, b)
