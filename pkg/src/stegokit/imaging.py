"""Pixel containers, lossless PNG I/O and the handful of transforms the pipeline uses.

Only 8-bit, non-interlaced Gray/RGB/RGBA PNGs are accepted. Anything else is
rejected loudly instead of being silently converted, because a silent palette
expansion or 16->8 bit reduction would destroy the LSB planes we care about.
"""

from __future__ import annotations

import enum
import io
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import PngDecodeError, UnsupportedFormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class Channels(enum.Enum):
    GRAY = 1
    RGB = 3
    RGBA = 4

    @property
    def count(self) -> int:
        return self.value


_PIL_MODE = {Channels.GRAY: "L", Channels.RGB: "RGB", Channels.RGBA: "RGBA"}
_PNG_COLOR_TYPE = {0: Channels.GRAY, 2: Channels.RGB, 6: Channels.RGBA}


@dataclass(frozen=True, eq=False)
class PixelImage:
    """Immutable HxWxC uint8 raster.

    ``pixels`` is always 3-D (a grayscale image has a trailing axis of 1) and is
    flagged read-only so images can be shared between workers without copies.
    """

    pixels: np.ndarray
    channels: Channels

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise ValueError(f"samples must be uint8, got {arr.dtype}")
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] != self.channels.count:
            raise ValueError(
                f"pixel array shape {arr.shape} does not match {self.channels.name}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.flags.writeable or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr).copy()
            arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "PixelImage":
        """Infer the channel layout from a 2-D or 3-D uint8 array."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            return cls(arr, Channels.GRAY)
        try:
            channels = Channels(arr.shape[2])
        except (ValueError, IndexError):
            raise ValueError(f"cannot infer channels from shape {arr.shape}") from None
        return cls(arr, channels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def samples(self) -> np.ndarray:
        """Row-major flat view, length width*height*channels."""
        return self.pixels.reshape(-1)

    def plane(self, index: int) -> np.ndarray:
        return self.pixels[:, :, index]

    def copy_pixels(self) -> np.ndarray:
        """Writable copy of the raster, for building a modified image."""
        return self.pixels.copy()

    def __eq__(self, other):
        if not isinstance(other, PixelImage):
            return NotImplemented
        return self.channels is other.channels and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"PixelImage({self.width}x{self.height}, {self.channels.name})"


def _read_ihdr(data: bytes) -> tuple[int, int, int, int, int]:
    if len(data) < 33 or not data.startswith(PNG_SIGNATURE):
        raise PngDecodeError("missing PNG signature")
    length, ctype = struct.unpack(">I4s", data[8:16])
    if ctype != b"IHDR" or length != 13:
        raise PngDecodeError("first chunk is not a 13-byte IHDR")
    body = data[16:29]
    (crc,) = struct.unpack(">I", data[29:33])
    if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
        raise PngDecodeError("IHDR checksum mismatch")
    width, height, depth, color_type, _comp, _filt, interlace = struct.unpack(">IIBBBBB", body)
    return width, height, depth, color_type, interlace


def load_png(data: bytes) -> PixelImage:
    """Decode PNG bytes pixel-exactly. Raises on anything but 8-bit Gray/RGB/RGBA."""
    width, height, depth, color_type, interlace = _read_ihdr(data)
    if depth != 8:
        raise UnsupportedFormatError(f"bit depth {depth} not supported (need 8)")
    if color_type not in _PNG_COLOR_TYPE:
        raise UnsupportedFormatError(f"PNG color type {color_type} not supported")
    if interlace != 0:
        raise UnsupportedFormatError("interlaced PNG not supported")
    channels = _PNG_COLOR_TYPE[color_type]
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode != _PIL_MODE[channels]:
                raise UnsupportedFormatError(f"decoder produced mode {im.mode}")
            arr = np.array(im, dtype=np.uint8)
    except UnsupportedFormatError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on corrupt streams
        raise PngDecodeError(f"corrupt PNG: {exc}") from exc
    if arr.shape[:2] != (height, width):
        raise PngDecodeError("decoded size disagrees with IHDR")
    return PixelImage(arr.reshape(height, width, channels.count), channels)


def save_png(img: PixelImage, compress_level: int = 6) -> bytes:
    arr = img.pixels[:, :, 0] if img.channels is Channels.GRAY else img.pixels
    buf = io.BytesIO()
    Image.fromarray(arr, _PIL_MODE[img.channels]).save(
        buf, format="PNG", compress_level=compress_level
    )
    return buf.getvalue()


def read_png(path: str | Path) -> PixelImage:
    return load_png(Path(path).read_bytes())


def write_png(path: str | Path, img: PixelImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_png(img))


def to_grayscale(img: PixelImage) -> PixelImage:
    """ITU-R 601 luma, rounded half up. Alpha is ignored; gray input passes through."""
    if img.channels is Channels.GRAY:
        return img
    rgb = img.pixels[:, :, :3].astype(np.int64)
    # integer form of round(0.299R + 0.587G + 0.114B) with halves going up
    luma = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return PixelImage(luma.astype(np.uint8), Channels.GRAY)


def center_crop(img: PixelImage, w: int, h: int) -> PixelImage:
    if w < 1 or h < 1 or w > img.width or h > img.height:
        raise ValueError(f"cannot crop {w}x{h} from {img.width}x{img.height}")
    x0 = (img.width - w) // 2
    y0 = (img.height - h) // 2
    return PixelImage(img.pixels[y0:y0 + h, x0:x0 + w], img.channels)


def force_alpha(img: PixelImage, value: int) -> PixelImage:
    """Return an RGBA copy whose alpha plane is constant ``value``."""
    if not 0 <= value <= 255:
        raise ValueError("alpha must be in 0..255")
    if img.channels is Channels.GRAY:
        rgb = np.repeat(img.pixels, 3, axis=2)
    else:
        rgb = img.pixels[:, :, :3]
    alpha = np.full(rgb.shape[:2] + (1,), value, dtype=np.uint8)
    return PixelImage(np.concatenate([rgb, alpha], axis=2), Channels.RGBA)
