"""Signature-based detectors for the four apps with fixed embedding paths.

A detector pulls bits out of the image the way its app would and checks them
against the app's payload format. StegMaster, DaVinci and MobiStego anchor a
signature at payload start, so false positives need a 24+ bit collision at a
fixed location. PocketStego only has a one-byte terminator at an unknown
position, so its detector fires on most natural images.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .embedders import band_starts, lsb_stream, stegmaster_decode, two_lsb_stream
from .imaging import Channels, PixelImage
from .payload import (
    DEFAULT_SIGNATURES,
    AppId,
    SignatureTable,
    bits_to_bytes,
    parse_payload_full,
)

DETECTABLE_APPS = (AppId.STEGMASTER, AppId.DAVINCI, AppId.MOBISTEGO, AppId.POCKETSTEGO)

_PRINTABLE = frozenset(range(0x20, 0x7F)) | {0x09, 0x0A, 0x0D}


@dataclass(frozen=True)
class DetectionResult:
    verdict: bool
    matched_app: AppId
    recovered_message: bytes | None = None
    matched_at_bit: int | None = None
    recovered_password: bytes | None = None

    def __post_init__(self):
        if not self.verdict and self.recovered_message is not None:
            raise ValueError("a negative verdict cannot carry a recovered message")

    def to_json(self) -> dict:
        d = asdict(self)
        d["matched_app"] = self.matched_app.value
        for key in ("recovered_message", "recovered_password"):
            d[key] = None if d[key] is None else d[key].hex()
        return d


def _negative(app: AppId) -> DetectionResult:
    return DetectionResult(False, app)


def _color(img: PixelImage) -> bool:
    return img.channels in (Channels.RGB, Channels.RGBA)


def detect_stegmaster(img: PixelImage, sigs: SignatureTable = DEFAULT_SIGNATURES) -> DetectionResult:
    app = AppId.STEGMASTER
    if not _color(img):
        return _negative(app)
    flat = img.pixels.reshape(img.n_pixels, img.channels.count)
    head = sigs.stegmaster_head
    values = stegmaster_decode(flat[: len(head)])
    if len(values) < len(head) or np.any(values > 255) or values.astype(np.uint8).tobytes() != head:
        return _negative(app)
    # scan forward only as far as the values stay valid bytes
    values = stegmaster_decode(flat)
    bad = np.flatnonzero(values > 255)
    prefix = values[: bad[0] if bad.size else len(values)].astype(np.uint8)
    parsed = parse_payload_full(app, np.unpackbits(prefix), None, sigs)
    if parsed is None:
        return _negative(app)
    return DetectionResult(True, app, parsed.message, 0, parsed.password)


def detect_davinci(img: PixelImage, sigs: SignatureTable = DEFAULT_SIGNATURES) -> DetectionResult:
    app = AppId.DAVINCI
    if img.channels is not Channels.RGBA:
        return _negative(app)
    alpha = img.pixels[:, :, 3].reshape(-1)
    bad = np.flatnonzero((alpha != 254) & (alpha != 255))
    usable = alpha[: bad[0] if bad.size else len(alpha)]
    head_bits = 32 + 8 * len(sigs.davinci_sig)
    if len(usable) < head_bits:
        return _negative(app)
    head = bits_to_bytes((usable[:head_bits] - 254).astype(np.uint8))
    if int.from_bytes(head[:4], "big") != 8 * len(sigs.davinci_sig) or head[4:] != sigs.davinci_sig:
        return _negative(app)
    # length fields must point inside the readable stream (capacity bound)
    parsed = parse_payload_full(app, (usable - 254).astype(np.uint8), None, sigs)
    if parsed is None:
        return _negative(app)
    return DetectionResult(True, app, parsed.message, 0, parsed.password)


def detect_mobistego(
    img: PixelImage, sigs: SignatureTable = DEFAULT_SIGNATURES, blocks: int = 1
) -> DetectionResult:
    app = AppId.MOBISTEGO
    if not _color(img):
        return _negative(app)
    starts = band_starts(img.height, img.width, blocks) + (img.n_pixels,)
    first = two_lsb_stream(img, 0, starts[1])
    start_bits = 8 * len(sigs.mobistego_start)
    if len(first) < start_bits or bits_to_bytes(first[:start_bits]) != sigs.mobistego_start:
        return _negative(app)
    if blocks == 1:
        parsed = parse_payload_full(app, first, None, sigs)
        if parsed is None:
            return _negative(app)
        return DetectionResult(True, app, parsed.message, 0)
    # multi-band payloads are split at unknown bit offsets: only confirm the end
    # signature somewhere in the last band (bit-aligned search), no recovery
    last = two_lsb_stream(img, starts[-2], starts[-1])
    end = np.unpackbits(np.frombuffer(sigs.mobistego_end, np.uint8))
    if len(last) < len(end):
        return _negative(app)
    windows = np.lib.stride_tricks.sliding_window_view(last, len(end))
    if not np.any(np.all(windows == end, axis=1)):
        return _negative(app)
    return DetectionResult(True, app, None, 0)


def detect_pocketstego(
    img: PixelImage, sigs: SignatureTable = DEFAULT_SIGNATURES, strict: bool = False
) -> DetectionResult:
    """Terminator byte anywhere in the blue-LSB stream (byte-aligned) means stego.

    ``strict`` additionally requires the bytes before it to be printable text,
    which the naive detector does not do.
    """
    app = AppId.POCKETSTEGO
    if not _color(img):
        return _negative(app)
    raw = bits_to_bytes(lsb_stream(img, 2))
    k = raw.find(sigs.pocketstego_terminator)
    if k < 0:
        return _negative(app)
    message = raw[:k]
    if strict and (not message or not set(message) <= _PRINTABLE):
        return _negative(app)
    return DetectionResult(True, app, message, 8 * k)


def detect(
    app: AppId,
    img: PixelImage,
    sigs: SignatureTable = DEFAULT_SIGNATURES,
    *,
    mobistego_blocks: int = 1,
    strict_pocketstego: bool = False,
) -> DetectionResult:
    app = AppId.parse(app)
    if app is AppId.STEGMASTER:
        return detect_stegmaster(img, sigs)
    if app is AppId.DAVINCI:
        return detect_davinci(img, sigs)
    if app is AppId.MOBISTEGO:
        return detect_mobistego(img, sigs, mobistego_blocks)
    if app is AppId.POCKETSTEGO:
        return detect_pocketstego(img, sigs, strict_pocketstego)
    raise NotImplementedError(
        f"{app.value} embeds along a password-seeded path; there is no fixed-location signature"
    )


def scan_all(img: PixelImage, sigs: SignatureTable = DEFAULT_SIGNATURES, **kwargs) -> list[DetectionResult]:
    return [detect(app, img, sigs, **kwargs) for app in DETECTABLE_APPS]
