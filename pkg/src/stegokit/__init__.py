"""Spatial-domain stego-app toolkit: embedders, signature detectors, dataset
generation, SRM-mini features and an FLD ensemble detector."""

from .embedders import APP_PROFILES, capacity_bits, embed, extract_bits, extract_message, make_path
from .errors import (
    CapacityError,
    CapacityTooSmallError,
    NotStegoFormatted,
    PayloadAmbiguityError,
    PngDecodeError,
    StegoError,
    UnsupportedFormatError,
)
from .imaging import Channels, PixelImage, center_crop, force_alpha, load_png, save_png, to_grayscale
from .payload import (
    DEFAULT_SIGNATURES,
    AppId,
    PayloadBits,
    SignatureTable,
    build_payload,
    message_len_for_target,
    parse_payload,
    payload_len_bits,
    xor_keystream,
)
from .sigdetect import DetectionResult, detect, scan_all

__version__ = "0.1.0"

__all__ = [
    "APP_PROFILES", "AppId", "CapacityError", "CapacityTooSmallError", "Channels",
    "DEFAULT_SIGNATURES", "DetectionResult", "NotStegoFormatted", "PayloadAmbiguityError",
    "PayloadBits", "PixelImage", "PngDecodeError", "SignatureTable", "StegoError",
    "UnsupportedFormatError", "build_payload", "capacity_bits", "center_crop", "detect",
    "embed", "extract_bits", "extract_message", "force_alpha", "load_png", "make_path",
    "message_len_for_target", "parse_payload", "payload_len_bits", "save_png", "scan_all",
    "to_grayscale", "xor_keystream",
]
