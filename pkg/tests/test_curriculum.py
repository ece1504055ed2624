import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindloop import curriculum as cur
from mindloop.errors import ConsistencyError, FormatError, TransformRangeError
from mindloop.language import PAD, parse_sentence, quantity_oracle
from mindloop.seeding import make_rng


def _pixel_image(r, c, value=1.0):
    img = np.zeros((28, 28), dtype=np.float32)
    img[r, c] = value
    return img


# ---------------------------------------------------------------- transforms

def test_shift_moves_single_pixel_left():
    out = cur.shift(_pixel_image(10, 10), -3)
    assert out[10, 7] == 1.0
    assert out.sum() == 1.0


def test_shift_zero_is_identity():
    img = make_rng(0).uniform(0, 1, (28, 28)).astype(np.float32)
    np.testing.assert_array_equal(cur.shift(img, 0), img)


def test_shift_clips_at_border():
    out = cur.shift(_pixel_image(5, 2), -5)
    assert out.sum() == 0.0


def test_shift_range_error():
    with pytest.raises(TransformRangeError):
        cur.shift(_pixel_image(0, 0), 29)


@settings(max_examples=60, deadline=None)
@given(st.integers(-6, 6), st.integers(-6, 6), st.data())
def test_shift_additivity_away_from_borders(a, b, data):
    rng = make_rng(data.draw(st.integers(0, 10_000)))
    img = np.zeros((28, 28), dtype=np.float32)
    # bounded support: content stays >=7 px from the side borders
    img[10:18, 10:18] = rng.uniform(0, 1, (8, 8)).astype(np.float32)
    lhs = cur.shift(cur.shift(img, a), b)
    rhs = cur.shift(img, a + b)
    np.testing.assert_array_equal(lhs, rhs)


def test_rotate_180_reflection_formula():
    out = cur.rotate(_pixel_image(10, 7), 180)
    assert out[17, 20] == 1.0


def test_rotate_180_involution():
    img = make_rng(1).uniform(0, 1, (28, 28)).astype(np.float32)
    np.testing.assert_array_equal(cur.rotate(cur.rotate(img, 180), 180), img)


def test_rotate_90_order_four():
    img = make_rng(2).uniform(0, 1, (28, 28)).astype(np.float32)
    out = img
    for _ in range(4):
        out = cur.rotate(out, 90)
    np.testing.assert_array_equal(out, img)


def test_rotate_unsupported_angle():
    with pytest.raises(TransformRangeError):
        cur.rotate(_pixel_image(0, 0), 45)


def test_scale_one_is_identity():
    img = make_rng(3).uniform(0, 1, (28, 28)).astype(np.float32)
    np.testing.assert_array_equal(cur.scale(img, 1.0), img)


def test_scale_doubles_blob_extent():
    img = np.zeros((28, 28), dtype=np.float32)
    img[12:16, 12:16] = 1.0  # centered 4x4 blob
    out = cur.scale(img, 2.0)
    rows = np.where(out.any(axis=1))[0]
    side = rows[-1] - rows[0] + 1
    assert abs(side - 8) <= 1


def test_scale_uniform_field_stays_uniform():
    img = np.full((28, 28), 0.5, dtype=np.float32)
    out = cur.scale(img, 0.7)
    inside = out[out > 0]
    assert (inside == 0.5).all()


def test_scale_range_error():
    with pytest.raises(TransformRangeError):
        cur.scale(np.zeros((28, 28), dtype=np.float32), 2.5)


# ------------------------------------------------------------------- glyphs

def test_synth_glyph_deterministic_per_seed():
    a = cur.synth_glyph(7, make_rng(99))
    b = cur.synth_glyph(7, make_rng(99))
    np.testing.assert_array_equal(a, b)


def test_synth_glyph_one_narrower_than_zero():
    def col_extent(img):
        cols = np.where(img.any(axis=0))[0]
        return cols[-1] - cols[0] + 1

    rng = make_rng(5)
    ones = [col_extent(cur.synth_glyph(1, rng)) for _ in range(5)]
    zeros = [col_extent(cur.synth_glyph(0, rng)) for _ in range(5)]
    assert max(ones) < min(zeros)


def test_synth_glyph_all_digits_lit_and_central():
    rng = make_rng(6)
    for d in range(10):
        img = cur.synth_glyph(d, rng)
        assert (img > 0.5).sum() >= 30
        assert img[:4].sum() == 0 and img[24:].sum() == 0
        assert img[:, :4].sum() == 0 and img[:, 24:].sum() == 0
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_rotated_nine_overlaps_six_shape():
    rng = make_rng(8)
    nine = cur.synth_glyph(9, make_rng(42))
    six = cur.synth_glyph(6, make_rng(42))
    flipped = cur.rotate(nine, 180)
    corr_six = float((flipped * six).sum())
    corr_nine = float((flipped * nine).sum())
    assert corr_six > corr_nine


# ---------------------------------------------------------------------- idx

def _write_idx(tmp_path, images, labels):
    import struct

    img_path = tmp_path / "imgs.idx"
    lbl_path = tmp_path / "lbls.idx"
    n = len(labels)
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, n, 28, 28))
        fh.write(images.astype(np.uint8).tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x801, n))
        fh.write(bytes(int(v) for v in labels))
    return img_path, lbl_path


def test_load_idx_round_trip(tmp_path):
    rng = make_rng(4)
    raw = rng.integers(0, 256, (5, 28, 28))
    img_path, lbl_path = _write_idx(tmp_path, raw, [3, 1, 4, 1, 7])
    pool = cur.load_idx(img_path, lbl_path)
    assert len(pool) == 5
    assert pool.labels.tolist() == [3, 1, 4, 1, 7]
    np.testing.assert_allclose(pool.images[0], raw[0] / 255.0, atol=1e-7)
    assert pool.provenance == "idx"


def test_load_idx_truncated(tmp_path):
    rng = make_rng(4)
    raw = rng.integers(0, 256, (5, 28, 28))
    img_path, lbl_path = _write_idx(tmp_path, raw, [0, 1, 2, 3, 4])
    blob = img_path.read_bytes()
    img_path.write_bytes(blob[:-100])
    with pytest.raises(FormatError):
        cur.load_idx(img_path, lbl_path)


def test_load_idx_bad_magic(tmp_path):
    rng = make_rng(4)
    raw = rng.integers(0, 256, (2, 28, 28))
    img_path, lbl_path = _write_idx(tmp_path, raw, [0, 1])
    blob = bytearray(img_path.read_bytes())
    blob[3] = 0x99
    img_path.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as err:
        cur.load_idx(img_path, lbl_path)
    assert err.value.offset == 0


def test_load_idx_count_mismatch(tmp_path):
    import struct

    rng = make_rng(4)
    raw = rng.integers(0, 256, (2, 28, 28))
    img_path, lbl_path = _write_idx(tmp_path, raw, [0, 1])
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x801, 3))
        fh.write(bytes([0, 1, 2]))
    with pytest.raises(ConsistencyError):
        cur.load_idx(img_path, lbl_path)


# ------------------------------------------------------------------ episodes

@pytest.fixture(scope="module")
def pool():
    return cur.synth_pool(100, seed=123)


def test_episode_move_left_schema(pool):
    rng = make_rng(0)
    ep = cur.make_episode(1, pool, rng)
    sentence = ep.sentence
    assert sentence.startswith("move left ")
    T = len(sentence)
    assert len(ep.frames) == T + 1
    assert ep.frames[-1].symbol == PAD
    for f in ep.frames[:-1]:
        np.testing.assert_array_equal(f.image, ep.frames[0].image)
    dx = ep.meta["dx"]
    np.testing.assert_array_equal(ep.frames[-1].image, cur.shift(ep.frames[0].image, -dx))


def test_episode_give_me_blank_during_command(pool):
    rng = make_rng(1)
    ep = cur.make_episode(6, pool, rng)
    for f in ep.frames[:-1]:
        assert f.image.sum() == 0.0
    assert ep.frames[-1].image.sum() > 0.0
    assert ep.sentence == f"give me a {ep.meta['label']}."


def test_episode_this_is_constant_images(pool):
    rng = make_rng(2)
    ep = cur.make_episode(3, pool, rng)
    assert ep.sentence == f"this is {ep.meta['label']}."
    np.testing.assert_array_equal(ep.frames[-1].image, ep.frames[0].image)


def test_episode_size_not_picks_opposite_word(pool):
    rng = make_rng(3)
    for _ in range(20):
        ep = cur.make_episode(5, pool, rng)
        word = ep.meta["word"]
        opposite = "small" if word == "big" else "big"
        assert ep.sentence == f"the size is not {opposite}."


def test_size_label_bands():
    assert cur.size_label(1.3) == "big"
    assert cur.size_label(0.6) == "small"
    with pytest.raises(TransformRangeError):
        cur.size_label(1.0)


def test_every_syntax_sentence_parses_and_quantity_matches(pool):
    rng = make_rng(7)
    for sid in range(1, 9):
        for _ in range(25):
            ep = cur.make_episode(sid, pool, rng)
            got_sid, _ = parse_sentence(ep.sentence)
            assert got_sid == sid
            q = quantity_oracle(ep.sentence)
            if sid in (1, 2):
                assert q == ep.meta["dx"]
            elif sid == 8:
                assert q == ep.meta["angle"]
            elif sid in (3, 6):
                assert q == ep.meta["label"]
            else:
                assert q == 0


def test_outcome_equals_oracle_exactly(pool):
    rng = make_rng(11)
    for _ in range(200):
        sid = int(rng.integers(1, 9))
        ep = cur.make_episode(sid, pool, rng)
        if sid in (1, 2):
            dx = ep.meta["dx"] * (-1 if sid == 1 else 1)
            want = cur.shift(ep.frames[0].image, dx)
        elif sid == 7:
            # command frames show the source; outcome is its rescale
            src = ep.frames[0].image
            want = cur.scale(src, ep.meta["factor"])
        elif sid == 8:
            want = cur.rotate(ep.frames[0].image, ep.meta["angle"])
        else:
            want = ep.frames[-1].image
        np.testing.assert_array_equal(ep.frames[-1].image, want)


def test_invalid_syntax_id(pool):
    with pytest.raises(TransformRangeError):
        cur.make_episode(9, pool, make_rng(0))


def test_cache_round_trip(tmp_path, pool):
    rng = make_rng(21)
    episodes = [cur.make_episode(int(rng.integers(1, 9)), pool, rng) for _ in range(12)]
    path = tmp_path / "batch.lgie"
    cur.write_cache(episodes, path)
    back = cur.read_cache(path)
    assert len(back) == len(episodes)
    for a, b in zip(episodes, back):
        assert a.syntax_id == b.syntax_id
        assert a.sentence == b.sentence
        for fa, fb in zip(a.frames, b.frames):
            np.testing.assert_array_equal(fa.image, fb.image)


def test_cache_magic_and_truncation(tmp_path, pool):
    rng = make_rng(22)
    episodes = [cur.make_episode(3, pool, rng)]
    path = tmp_path / "batch.lgie"
    cur.write_cache(episodes, path)
    blob = path.read_bytes()
    assert blob[:4] == b"LGIE"
    path.write_bytes(blob[:-10])
    with pytest.raises(FormatError):
        cur.read_cache(path)


def test_vision_training_images_shape(pool):
    imgs = cur.vision_training_images(pool, 64, make_rng(1))
    assert imgs.shape == (64, 784)
    assert imgs.min() >= 0.0 and imgs.max() <= 1.0
