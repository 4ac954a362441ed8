import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stegokit.embedders import (
    PathKind,
    band_starts,
    capacity_bits,
    embed,
    extract_bits,
    extract_message,
    make_path,
)
from stegokit.errors import CapacityError, NotStegoFormatted
from stegokit.imaging import Channels, PixelImage, force_alpha
from stegokit.payload import AppId, PayloadBits, build_payload
from stegokit.prng import seeded_permutation

from conftest import random_image

CHANNELS_FOR = {
    AppId.STEGMASTER: (Channels.RGB, Channels.RGBA),
    AppId.DAVINCI: (Channels.RGB, Channels.RGBA),
    AppId.MOBISTEGO: (Channels.RGB, Channels.RGBA),
    AppId.POCKETSTEGO: (Channels.RGB, Channels.RGBA),
    AppId.STEGM: (Channels.GRAY, Channels.RGB),
}
UNIT = {AppId.STEGMASTER: 8, AppId.DAVINCI: 1, AppId.MOBISTEGO: 6, AppId.POCKETSTEGO: 1, AppId.STEGM: 1}


def _img(values, channels=Channels.RGB):
    return PixelImage(np.array([values], dtype=np.uint8), channels)


def test_stegmaster_digit_example():
    res = embed(AppId.STEGMASTER, _img([[123, 45, 200]]), PayloadBits.from_bytes(bytes([147])))
    assert res.stego.pixels[0, 0].tolist() == [121, 44, 207]
    assert extract_bits(AppId.STEGMASTER, res.stego, 8).to_bytes() == bytes([147])


def test_stegmaster_overflow_subtracts_ten():
    # value 9 -> digits (0,0,9); blue 252 -> 259 -> 249
    res = embed(AppId.STEGMASTER, _img([[100, 100, 252]]), PayloadBits.from_bytes(bytes([9])))
    assert res.stego.pixels[0, 0].tolist() == [100, 100, 249]
    # hundreds digit 2 on channel 255: 250 + 2 = 252, no overflow
    res = embed(AppId.STEGMASTER, _img([[255, 255, 255]]), PayloadBits.from_bytes(bytes([255])))
    assert res.stego.pixels[0, 0].tolist() == [252, 255, 255]


def test_stegmaster_reads_121_44_207():
    assert extract_bits(AppId.STEGMASTER, _img([[121, 44, 207]]), 8).to_bytes() == bytes([147])


def test_stegmaster_impossible_digits():
    with pytest.raises(NotStegoFormatted):
        extract_bits(AppId.STEGMASTER, _img([[9, 9, 9]]), 8)


def test_pocketstego_blue_lsb():
    cover = _img([[10, 10, 200], [10, 10, 200]])
    res = embed(AppId.POCKETSTEGO, cover, PayloadBits(np.array([1, 0])))
    assert res.stego.pixels[0, :, 2].tolist() == [201, 200]
    assert res.changed_samples == 1


def test_davinci_alphas():
    res = embed(AppId.DAVINCI, _img([[1, 2, 3], [4, 5, 6]]), PayloadBits(np.array([0, 1])))
    assert res.stego.channels is Channels.RGBA
    assert res.stego.pixels[0, :, 3].tolist() == [254, 255]


def test_davinci_reads_opaque_as_ones():
    img = PixelImage(np.full((3, 3, 4), 255, np.uint8), Channels.RGBA)
    assert extract_bits(AppId.DAVINCI, img, 9).bits.tolist() == [1] * 9


def test_davinci_bad_alpha():
    img = PixelImage(np.full((2, 2, 4), 100, np.uint8), Channels.RGBA)
    with pytest.raises(NotStegoFormatted):
        extract_bits(AppId.DAVINCI, img, 2)


def test_mobistego_bit_assignment():
    cover = _img([[0, 0, 0]])
    res = embed(AppId.MOBISTEGO, cover, PayloadBits(np.array([1, 0, 0, 1, 1, 1])))
    assert res.stego.pixels[0, 0].tolist() == [2, 1, 3]


@pytest.mark.parametrize("app, w, h, ch, expected", [
    (AppId.MOBISTEGO, 512, 512, Channels.RGB, 1572864),
    (AppId.DAVINCI, 1, 1, Channels.RGBA, 1),
    (AppId.STEGMASTER, 100, 100, Channels.RGB, 80000),
    (AppId.POCKETSTEGO, 512, 512, Channels.RGB, 262144),
    (AppId.STEGM, 256, 256, Channels.GRAY, 65536),
])
def test_capacity(app, w, h, ch, expected):
    img = PixelImage(np.zeros((h, w, ch.count), np.uint8), ch)
    assert capacity_bits(app, img) == expected


def test_incompatible_channels():
    gray = PixelImage(np.zeros((4, 4, 1), np.uint8), Channels.GRAY)
    with pytest.raises(ValueError):
        capacity_bits(AppId.POCKETSTEGO, gray)
    rgba = PixelImage(np.zeros((4, 4, 4), np.uint8), Channels.RGBA)
    with pytest.raises(ValueError):
        embed(AppId.STEGM, rgba, PayloadBits(np.zeros(8, np.uint8)), b"p")


def test_capacity_exceeded(rng):
    img = random_image(rng, 4, 4)
    with pytest.raises(CapacityError):
        embed(AppId.POCKETSTEGO, img, PayloadBits(np.zeros(17, np.uint8)))


def test_paths():
    img = PixelImage(np.zeros((2, 2, 3), np.uint8), Channels.RGB)
    assert make_path(PathKind.LEXICOGRAPHIC, img).order.tolist() == [0, 1, 2, 3]
    blk = make_path(PathKind.BLOCK_LEXICOGRAPHIC, img, blocks=1)
    assert blk.order.tolist() == [0, 1, 2, 3] and blk.band_starts == (0,)
    a = make_path(PathKind.SEEDED_PERMUTATION, img, b"pw").order
    b = make_path(PathKind.SEEDED_PERMUTATION, img, b"pw").order
    assert a.tolist() == b.tolist()
    with pytest.raises(ValueError):
        make_path(PathKind.SEEDED_PERMUTATION, img)
    with pytest.raises(ValueError):
        band_starts(2, 2, 3)
    with pytest.raises(ValueError):
        band_starts(2, 2, 0)


@st.composite
def embed_cases(draw):
    app = draw(st.sampled_from(list(AppId)))
    ch = draw(st.sampled_from(CHANNELS_FOR[app]))
    w, h = draw(st.integers(1, 24)), draw(st.integers(1, 24))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    cover = random_image(rng, w, h, ch)
    cap = capacity_bits(app, cover)
    unit = 8 if app is AppId.STEGMASTER else 1
    n = draw(st.integers(0, cap // unit)) * unit
    bits = PayloadBits(rng.integers(0, 2, n, dtype=np.uint8))
    password = draw(st.binary(min_size=1, max_size=8))
    blocks = draw(st.integers(1, h)) if app is AppId.MOBISTEGO else 1
    return app, cover, bits, password, blocks


@settings(max_examples=300, deadline=None)
@given(embed_cases())
def test_round_trip_and_bounds(case):
    app, cover, bits, password, blocks = case
    res = embed(app, cover, bits, password, blocks)
    assert extract_bits(app, res.stego, bits.len_bits, password, blocks) == bits
    # deterministic
    assert embed(app, cover, bits, password, blocks).stego == res.stego

    before = cover.pixels.astype(int)
    after = res.stego.pixels.astype(int)
    if app is AppId.DAVINCI:
        assert np.array_equal(after[:, :, :3], before[:, :, :3])
        assert np.all(np.abs(after[:, :, 3] - 255) <= 1)
    else:
        delta = np.abs(after - before)
        bound = {AppId.STEGMASTER: 9, AppId.MOBISTEGO: 3, AppId.POCKETSTEGO: 1, AppId.STEGM: 1}[app]
        assert delta.max(initial=0) <= bound
        if cover.channels is Channels.RGBA:
            assert np.array_equal(after[:, :, 3], before[:, :, 3])

    # pixels beyond the visited prefix are untouched
    if app is not AppId.STEGM and not (app is AppId.MOBISTEGO and blocks > 1):
        k = -(-bits.len_bits // UNIT[app])
        base = force_alpha(cover, 255) if app is AppId.DAVINCI else cover
        flat_b = base.pixels.reshape(cover.n_pixels, -1)
        flat_a = res.stego.pixels.reshape(cover.n_pixels, -1)
        assert np.array_equal(flat_a[k:], flat_b[k:])
    if app is AppId.STEGM:
        visited = seeded_permutation(password, cover.n_pixels, bits.len_bits)
        mask = np.ones(cover.n_pixels, bool)
        mask[visited] = False
        assert np.array_equal(res.stego.pixels.reshape(cover.n_pixels, -1)[mask],
                              cover.pixels.reshape(cover.n_pixels, -1)[mask])


@pytest.mark.parametrize("app", [AppId.POCKETSTEGO, AppId.STEGM])
def test_change_rate_near_half(app):
    rng = np.random.default_rng(7)
    cover = random_image(rng, 128, 128)
    bits = PayloadBits(rng.integers(0, 2, 8000, dtype=np.uint8))
    res = embed(app, cover, bits, b"pw")
    # binomial std at n=8000 is ~0.0056; 0.03 is > 5 sigma
    assert res.change_rate == pytest.approx(0.5, abs=0.03)
    assert res.visited_samples == 8000


def test_mobistego_band_split():
    cover = PixelImage(np.zeros((4, 2, 3), np.uint8), Channels.RGB)
    bits = PayloadBits(np.ones(12, np.uint8))
    res = embed(AppId.MOBISTEGO, cover, bits, blocks=2)
    # 12 bits split 6/6; band 1 starts at pixel 4
    flat = res.stego.pixels.reshape(8, 3)
    assert flat[0].tolist() == [3, 3, 3] and flat[4].tolist() == [3, 3, 3]
    assert flat[1].tolist() == [0, 0, 0] and flat[5].tolist() == [0, 0, 0]


@pytest.mark.parametrize("app", list(AppId))
def test_extract_message_end_to_end(app, rng):
    ch = CHANNELS_FOR[app][0]
    cover = random_image(rng, 40, 30, ch)
    payload = build_payload(app, b"meet at dawn", b"pw")
    res = embed(app, cover, payload, b"pw")
    assert extract_message(app, res.stego, b"pw") == b"meet at dawn"


def test_extract_message_stegm_wrong_password_fails(rng):
    cover = random_image(rng, 40, 30, Channels.GRAY)
    res = embed(AppId.STEGM, cover, build_payload(AppId.STEGM, b"hello", b"pw"), b"pw")
    try:
        out = extract_message(AppId.STEGM, res.stego, b"other")
    except NotStegoFormatted:
        return
    assert out != b"hello"
