"""Spatial-domain embedding techniques of the five modelled apps.

Every embedder visits pixels along its app's path and consumes payload units
until the payload runs out; pixels past that point are left untouched.

    StegMaster   8 bits/pixel  one byte -> decimal digits written into R,G,B ones places
    DaVinci      1 bit/pixel   alpha = 254 (bit 0) or 255 (bit 1)
    MobiStego    6 bits/pixel  two LSBs of R, G, B; row bands ("blocks") share the payload
    PocketStego  1 bit/pixel   blue LSB, lexicographic
    StegM        1 bit/pixel   gray (or blue) LSB along a password-seeded permutation
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, NotStegoFormatted
from .imaging import Channels, PixelImage, force_alpha
from .payload import AppId, PayloadBits
from .prng import prng_from_password, seeded_permutation  # noqa: F401  (re-exported)


class PathKind(enum.Enum):
    LEXICOGRAPHIC = "lexicographic"
    BLOCK_LEXICOGRAPHIC = "block_lexicographic"
    SEEDED_PERMUTATION = "seeded_permutation"


@dataclass(frozen=True)
class AppProfile:
    app: AppId
    domain: str
    path: PathKind
    technique: str
    bits_per_pixel: int
    channels: frozenset
    resizing: str = "none"
    encrypts: bool = False
    signature_fields: tuple = ()
    length_fields: bool = False


_COLOR = frozenset({Channels.RGB, Channels.RGBA})

APP_PROFILES: dict[AppId, AppProfile] = {
    AppId.STEGMASTER: AppProfile(
        AppId.STEGMASTER, "spatial", PathKind.LEXICOGRAPHIC,
        "base-10 ones digit of R,G,B", 8, _COLOR,
        signature_fields=("open1", "close1", "open2", "close2"),
    ),
    AppId.DAVINCI: AppProfile(
        AppId.DAVINCI, "spatial", PathKind.LEXICOGRAPHIC,
        "alpha 254/255", 1, _COLOR, resizing="user controlled",
        signature_fields=("sig",), length_fields=True,
    ),
    AppId.MOBISTEGO: AppProfile(
        AppId.MOBISTEGO, "spatial", PathKind.BLOCK_LEXICOGRAPHIC,
        "2 LSBs of R,G,B", 6, _COLOR, encrypts=True,
        signature_fields=("start", "end"),
    ),
    AppId.POCKETSTEGO: AppProfile(
        AppId.POCKETSTEGO, "spatial", PathKind.LEXICOGRAPHIC,
        "blue LSB replacement", 1, _COLOR, signature_fields=("terminator",),
    ),
    AppId.STEGM: AppProfile(
        AppId.STEGM, "spatial", PathKind.SEEDED_PERMUTATION,
        "LSB replacement", 1, frozenset({Channels.GRAY, Channels.RGB}),
        encrypts=True, length_fields=True,
    ),
}


def check_channels(app: AppId, img: PixelImage) -> None:
    profile = APP_PROFILES[AppId.parse(app)]
    if img.channels not in profile.channels:
        allowed = "/".join(sorted(c.name for c in profile.channels))
        raise ValueError(f"{profile.app.value} needs a {allowed} image, got {img.channels.name}")


def capacity_bits(app: AppId, img: PixelImage) -> int:
    app = AppId.parse(app)
    check_channels(app, img)
    return APP_PROFILES[app].bits_per_pixel * img.n_pixels


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True, eq=False)
class EmbedPath:
    kind: PathKind
    order: np.ndarray
    band_starts: tuple = (0,)  # pixel offset where each band begins (block paths)

    def __len__(self):
        return len(self.order)


def band_starts(height: int, width: int, blocks: int) -> tuple:
    if not 1 <= blocks <= height:
        raise ValueError(f"block count {blocks} must be in 1..{height}")
    band_h = height // blocks
    return tuple(k * band_h * width for k in range(blocks))


def make_path(
    kind: PathKind | str,
    img: PixelImage,
    password: bytes | None = None,
    blocks: int = 1,
) -> EmbedPath:
    kind = PathKind(kind)
    n = img.n_pixels
    if kind is PathKind.LEXICOGRAPHIC:
        return EmbedPath(kind, np.arange(n, dtype=np.int64))
    if kind is PathKind.BLOCK_LEXICOGRAPHIC:
        # bands are contiguous row ranges, so the visiting order stays row-major
        return EmbedPath(kind, np.arange(n, dtype=np.int64), band_starts(img.height, img.width, blocks))
    if not password:
        raise ValueError("seeded permutation path needs a password")
    return EmbedPath(kind, seeded_permutation(password, n))


def _pixel_prefix(app: AppId, img: PixelImage, n_pixels: int, password: bytes | None) -> np.ndarray:
    if APP_PROFILES[app].path is PathKind.SEEDED_PERMUTATION:
        if not password:
            raise ValueError(f"{app.value} derives its path from the password; none given")
        return seeded_permutation(password, img.n_pixels, n_pixels)
    return np.arange(n_pixels, dtype=np.int64)


def _mobistego_slots(img: PixelImage, n_bits: int, blocks: int) -> np.ndarray:
    """Global 2-LSB slot index (6 per pixel, MSB of each pair first) for every payload bit."""
    starts = band_starts(img.height, img.width, blocks) + (img.n_pixels,)
    total = img.n_pixels
    pieces = []
    for k in range(blocks):
        lo = (n_bits * starts[k]) // total
        hi = (n_bits * starts[k + 1]) // total
        pieces.append(6 * starts[k] + np.arange(hi - lo, dtype=np.int64))
    return np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.int64)


def _carrier_plane(app: AppId, img: PixelImage) -> int:
    if app is AppId.STEGM and img.channels is Channels.GRAY:
        return 0
    return 2  # blue


# ---------------------------------------------------------------------------
# embed / extract


@dataclass(frozen=True)
class EmbedResult:
    stego: PixelImage
    change_rate: float
    visited_samples: int
    changed_samples: int


def embed(
    app: AppId,
    cover: PixelImage,
    payload: PayloadBits,
    password: bytes | None = None,
    blocks: int = 1,
) -> EmbedResult:
    app = AppId.parse(app)
    check_channels(app, cover)
    bits = payload.bits
    n = payload.len_bits
    cap = capacity_bits(app, cover)
    if n > cap:
        raise CapacityError(f"{app.value}: payload of {n} bits exceeds capacity {cap}")

    if app is AppId.DAVINCI:
        cover = force_alpha(cover, 255)
    out = cover.copy_pixels()
    flat = out.reshape(cover.n_pixels, cover.channels.count)

    if app is AppId.STEGMASTER:
        if n % 8:
            raise ValueError("StegMaster payload must be whole bytes")
        values = np.packbits(bits).astype(np.int16)
        idx = _pixel_prefix(app, cover, len(values), password)
        digits = np.stack([values // 100, (values // 10) % 10, values % 10], axis=1)
        rgb = flat[idx, :3].astype(np.int16)
        new = rgb - rgb % 10 + digits
        new[new > 255] -= 10
        flat[idx, :3] = new.astype(np.uint8)
        before, after = rgb, new
    elif app is AppId.DAVINCI:
        idx = _pixel_prefix(app, cover, n, password)
        before = flat[idx, 3].copy()
        flat[idx, 3] = 254 + bits
        after = flat[idx, 3]
    elif app is AppId.MOBISTEGO:
        slots = _mobistego_slots(cover, n, blocks)
        rgb = flat[:, :3].reshape(-1)  # view into out
        samples = np.unique(slots // 2)
        before = rgb[samples].copy()
        for parity, shift in ((0, 1), (1, 0)):  # high bit of each pair, then low bit
            sel = slots % 2 == parity
            pos = slots[sel] // 2
            rgb[pos] = (rgb[pos] & np.uint8(0xFF ^ (1 << shift))) | (bits[sel] << shift).astype(np.uint8)
        flat[:, :3] = rgb.reshape(-1, 3)
        after = rgb[samples]
    else:
        plane = _carrier_plane(app, cover)
        idx = _pixel_prefix(app, cover, n, password)
        before = flat[idx, plane].copy()
        flat[idx, plane] = (before & 0xFE) | bits
        after = flat[idx, plane]

    visited = int(np.size(before))
    changed = int(np.count_nonzero(np.asarray(before) != np.asarray(after)))
    rate = changed / visited if visited else 0.0
    return EmbedResult(PixelImage(out, cover.channels), rate, visited, changed)


def extract_bits(
    app: AppId,
    img: PixelImage,
    n_bits: int,
    password: bytes | None = None,
    blocks: int = 1,
) -> PayloadBits:
    """Read ``n_bits`` back along the app's path.

    Raises NotStegoFormatted when a visited pixel holds a value the embedder can
    never produce (StegMaster digits above 255, DaVinci alpha outside 254/255).
    """
    app = AppId.parse(app)
    check_channels(app, img)
    cap = capacity_bits(app, img)
    if not 0 <= n_bits <= cap:
        raise CapacityError(f"{app.value}: cannot read {n_bits} bits from capacity {cap}")
    flat = img.pixels.reshape(img.n_pixels, img.channels.count)

    if app is AppId.STEGMASTER:
        n_px = -(-n_bits // 8)
        idx = _pixel_prefix(app, img, n_px, password)
        values = stegmaster_decode(flat[idx])
        if np.any(values > 255):
            raise NotStegoFormatted("digit triple above 255 on the StegMaster path")
        bits = np.unpackbits(values.astype(np.uint8))[:n_bits]
    elif app is AppId.DAVINCI:
        alpha = flat[_pixel_prefix(app, img, n_bits, password), 3]
        if np.any((alpha != 254) & (alpha != 255)):
            raise NotStegoFormatted("alpha outside {254, 255} on the DaVinci path")
        bits = (alpha - 254).astype(np.uint8)
    elif app is AppId.MOBISTEGO:
        slots = _mobistego_slots(img, n_bits, blocks)
        rgb = flat[:, :3].reshape(-1)
        shift = (1 - slots % 2).astype(np.uint8)
        bits = (rgb[slots // 2] >> shift) & 1
    else:
        idx = _pixel_prefix(app, img, n_bits, password)
        bits = flat[idx, _carrier_plane(app, img)] & 1
    return PayloadBits(bits)


def stegmaster_decode(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel value (R mod 10)*100 + (G mod 10)*10 + (B mod 10); may exceed 255."""
    rgb = np.asarray(rgb, dtype=np.int16)
    return (rgb[..., 0] % 10) * 100 + (rgb[..., 1] % 10) * 10 + rgb[..., 2] % 10


def lsb_stream(img: PixelImage, plane: int) -> np.ndarray:
    """LSBs of one plane in lexicographic order."""
    return img.pixels[:, :, plane].reshape(-1) & 1


def two_lsb_stream(img: PixelImage, start_pixel: int = 0, end_pixel: int | None = None) -> np.ndarray:
    """MobiStego bit stream (R1 R0 G1 G0 B1 B0 per pixel) over a pixel range."""
    rgb = img.pixels.reshape(img.n_pixels, img.channels.count)[start_pixel:end_pixel, :3]
    pairs = rgb.reshape(-1, 1)
    return np.concatenate([(pairs >> 1) & 1, pairs & 1], axis=1).reshape(-1)


def extract_message(
    app: AppId,
    img: PixelImage,
    password: bytes | None = None,
    sigs=None,
    blocks: int = 1,
    n_bits: int | None = None,
) -> bytes:
    """Receiver-side extraction: locate the payload from its own framing and decode it.

    MobiStego with more than one block splits the payload at offsets that depend
    on its length, so ``n_bits`` must be supplied in that case.
    """
    from .payload import DEFAULT_SIGNATURES, parse_payload_full

    app = AppId.parse(app)
    sigs = sigs or DEFAULT_SIGNATURES
    check_channels(app, img)
    if n_bits is not None:
        stream = extract_bits(app, img, n_bits, password, blocks).bits
    elif app is AppId.STEGMASTER:
        values = stegmaster_decode(img.pixels.reshape(img.n_pixels, -1))
        bad = np.flatnonzero(values > 255)
        stream = np.unpackbits(values[: bad[0] if bad.size else len(values)].astype(np.uint8))
    elif app is AppId.DAVINCI:
        alpha = img.pixels[:, :, 3].reshape(-1) if img.channels is Channels.RGBA else np.zeros(0, np.uint8)
        bad = np.flatnonzero((alpha != 254) & (alpha != 255))
        stream = (alpha[: bad[0] if bad.size else len(alpha)] - 254).astype(np.uint8)
    elif app is AppId.MOBISTEGO:
        if blocks != 1:
            raise ValueError("MobiStego with several blocks needs an explicit payload length")
        stream = two_lsb_stream(img)
    elif app is AppId.POCKETSTEGO:
        stream = lsb_stream(img, 2)
    else:
        head = extract_bits(app, img, 32, password).bits
        length = int.from_bytes(np.packbits(head).tobytes(), "big")
        if length % 8 or 32 + length > capacity_bits(app, img):
            raise NotStegoFormatted("StegM length field does not fit the image")
        stream = extract_bits(app, img, 32 + length, password).bits
    parsed = parse_payload_full(app, stream, password if password else None, sigs)
    if parsed is None:
        raise NotStegoFormatted(f"no {app.value} payload found")
    return parsed.message
