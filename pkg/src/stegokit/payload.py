"""Per-app payload bitstreams: signatures, length fields, passwords and encryption.

All bit sequences are MSB-first within each byte. Layouts:

    StegMaster   open1 | close1 | password | open2 | message | close2   (plaintext)
    DaVinci      len32 | sig | len32 | password | len32 | message       (len32 = bit count, big-endian)
    MobiStego    start | xor(message, password) | end
    PocketStego  message | terminator
    StegM        len32 | xor(message, password)                         (plaintext if no password)
"""

from __future__ import annotations

import codecs
import enum
import math
import re
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import CapacityTooSmallError, PayloadAmbiguityError
from .prng import prng_from_password


class AppId(enum.Enum):
    STEGMASTER = "stegmaster"
    DAVINCI = "davinci"
    MOBISTEGO = "mobistego"
    POCKETSTEGO = "pocketstego"
    STEGM = "stegm"

    @classmethod
    def parse(cls, value: "str | AppId") -> "AppId":
        if isinstance(value, AppId):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            names = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown app {value!r} (expected one of {names})") from None


# ---------------------------------------------------------------------------
# signatures


_SIG_SIZES = {
    "stegmaster": {"open1": 7, "close1": 7, "open2": 7, "close2": 7},
    "davinci": {"sig": 8},
    "mobistego": {"start": 3, "end": 3},
    "pocketstego": {"terminator": 1},
}


@dataclass(frozen=True)
class SignatureTable:
    """Signature byte strings. The real apps' strings are unknown; these are defaults."""

    stegmaster_open1: bytes = b"STGMST<"
    stegmaster_close1: bytes = b">STGMST"
    stegmaster_open2: bytes = b"MSGBEG<"
    stegmaster_close2: bytes = b">MSGEND"
    davinci_sig: bytes = b"DAVINCI1"
    mobistego_start: bytes = b"@!#"
    mobistego_end: bytes = b"#!@"
    pocketstego_terminator: bytes = b"#"

    def __post_init__(self):
        for app, sizes in _SIG_SIZES.items():
            for name, size in sizes.items():
                value = getattr(self, f"{app}_{name}")
                if not isinstance(value, bytes) or len(value) != size:
                    raise ValueError(f"{app}.{name} must be exactly {size} bytes, got {value!r}")

    @property
    def stegmaster_head(self) -> bytes:
        return self.stegmaster_open1 + self.stegmaster_close1

    @classmethod
    def from_config(cls, text: str) -> "SignatureTable":
        """Parse ``<app>.<field> = "bytes"`` lines; ``#`` starts a comment line."""
        known = {f.name for f in fields(cls)}
        overrides: dict[str, bytes] = {}
        line_re = re.compile(r'^\s*([a-z]+)\.([a-z0-9]+)\s*=\s*"((?:[^"\\]|\\.)*)"\s*$')
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            m = line_re.match(line)
            if not m:
                raise ValueError(f"signature config line {lineno}: cannot parse {line!r}")
            key = f"{m.group(1)}_{m.group(2)}"
            if key not in known:
                raise ValueError(f"signature config line {lineno}: unknown key {m.group(1)}.{m.group(2)}")
            raw = m.group(3).encode("latin-1")
            overrides[key] = codecs.escape_decode(raw)[0]
        return replace(cls(), **overrides)

    @classmethod
    def load(cls, path: str | Path | None) -> "SignatureTable":
        if path is None:
            return cls()
        return cls.from_config(Path(path).read_text(encoding="utf-8"))

    def to_config(self) -> str:
        lines = []
        for f in fields(self):
            app, name = f.name.split("_", 1)
            escaped = "".join(
                chr(b) if 0x20 <= b < 0x7F and b not in (0x22, 0x5C) else f"\\x{b:02x}"
                for b in getattr(self, f.name)
            )
            lines.append(f'{app}.{name} = "{escaped}"')
        return "\n".join(lines) + "\n"


DEFAULT_SIGNATURES = SignatureTable()


# ---------------------------------------------------------------------------
# bit containers


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits: np.ndarray) -> bytes:
    """Pack whole bytes; a trailing partial byte is dropped."""
    n = (len(bits) // 8) * 8
    return np.packbits(np.asarray(bits[:n], dtype=np.uint8)).tobytes()


@dataclass(frozen=True, eq=False)
class PayloadBits:
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.bits, dtype=np.uint8).copy()
        if arr.ndim != 1 or (arr.size and arr.max() > 1):
            raise ValueError("payload bits must be a 1-D array of 0/1")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PayloadBits":
        return cls(bytes_to_bits(data))

    @property
    def len_bits(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        return bits_to_bytes(self.bits)

    def __len__(self):
        return self.len_bits

    def __eq__(self, other):
        if not isinstance(other, PayloadBits):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"PayloadBits(len_bits={self.len_bits})"


# ---------------------------------------------------------------------------
# cipher


def xor_keystream(data: bytes, password: bytes) -> bytes:
    """XOR ``data`` with the password-seeded keystream. Applying it twice is the identity."""
    stream = prng_from_password(password).bytes(len(data))
    return (np.frombuffer(bytes(data), np.uint8) ^ np.frombuffer(stream, np.uint8)).tobytes()


def _len32(n_bytes: int) -> bytes:
    return (8 * n_bytes).to_bytes(4, "big")


# ---------------------------------------------------------------------------
# build / parse


def build_payload(
    app: AppId,
    message: bytes,
    password: bytes = b"",
    sigs: SignatureTable = DEFAULT_SIGNATURES,
) -> PayloadBits:
    app = AppId.parse(app)
    message, password = bytes(message), bytes(password)
    if app is AppId.STEGMASTER:
        raw = (sigs.stegmaster_open1 + sigs.stegmaster_close1 + password
               + sigs.stegmaster_open2 + message + sigs.stegmaster_close2)
    elif app is AppId.DAVINCI:
        sig = sigs.davinci_sig
        raw = _len32(len(sig)) + sig + _len32(len(password)) + password + _len32(len(message)) + message
    elif app is AppId.MOBISTEGO:
        raw = sigs.mobistego_start + xor_keystream(message, password) + sigs.mobistego_end
    elif app is AppId.POCKETSTEGO:
        raw = message + sigs.pocketstego_terminator
    else:
        body = xor_keystream(message, password) if password else message
        raw = _len32(len(message)) + body

    parsed = parse_payload_full(app, bytes_to_bits(raw), password, sigs)
    if parsed is None or parsed.message != message or parsed.n_bits != 8 * len(raw):
        raise PayloadAmbiguityError(
            f"{app.value}: message/password collide with a signature; extraction would not round-trip"
        )
    return PayloadBits(bytes_to_bits(raw))


@dataclass(frozen=True)
class ParsedPayload:
    message: bytes
    password: bytes | None
    n_bits: int


def parse_payload_full(
    app: AppId,
    bits,
    password: bytes | None = None,
    sigs: SignatureTable = DEFAULT_SIGNATURES,
) -> ParsedPayload | None:
    """Format-check a bit stream (which may run past the payload) and split it.

    ``password=None`` means "unknown": encrypted bodies are returned as ciphertext
    and embedded plaintext passwords are not compared.
    """
    app = AppId.parse(app)
    raw = bits_to_bytes(bits.bits if isinstance(bits, PayloadBits) else bits)

    if app is AppId.STEGMASTER:
        head = sigs.stegmaster_head
        if not raw.startswith(head):
            return None
        i = raw.find(sigs.stegmaster_open2, len(head))
        if i < 0:
            return None
        body_start = i + len(sigs.stegmaster_open2)
        k = raw.find(sigs.stegmaster_close2, body_start)
        if k < 0:
            return None
        embedded_pwd = raw[len(head):i]
        if password is not None and embedded_pwd != password:
            return None
        return ParsedPayload(raw[body_start:k], embedded_pwd, 8 * (k + len(sigs.stegmaster_close2)))

    if app is AppId.DAVINCI:
        sig = sigs.davinci_sig
        pos = 0
        segments = []
        for expected in (sig, None, None):
            if pos + 4 > len(raw):
                return None
            n_bits = int.from_bytes(raw[pos:pos + 4], "big")
            pos += 4
            if n_bits % 8 or pos + n_bits // 8 > len(raw):
                return None
            seg = raw[pos:pos + n_bits // 8]
            if expected is not None and seg != expected:
                return None
            segments.append(seg)
            pos += n_bits // 8
        _, embedded_pwd, message = segments
        if password is not None and embedded_pwd != password:
            return None
        return ParsedPayload(message, embedded_pwd, 8 * pos)

    if app is AppId.MOBISTEGO:
        start, end = sigs.mobistego_start, sigs.mobistego_end
        if not raw.startswith(start):
            return None
        k = raw.find(end, len(start))
        if k < 0:
            return None
        body = raw[len(start):k]
        message = xor_keystream(body, password) if password else body
        return ParsedPayload(message, None, 8 * (k + len(end)))

    if app is AppId.POCKETSTEGO:
        k = raw.find(sigs.pocketstego_terminator)
        if k < 0:
            return None
        return ParsedPayload(raw[:k], None, 8 * (k + 1))

    if len(raw) < 4:
        return None
    n_bits = int.from_bytes(raw[:4], "big")
    if n_bits % 8 or 4 + n_bits // 8 > len(raw):
        return None
    body = raw[4:4 + n_bits // 8]
    message = xor_keystream(body, password) if password else body
    return ParsedPayload(message, None, 32 + n_bits)


def parse_payload(
    app: AppId,
    bits,
    password: bytes | None = None,
    sigs: SignatureTable = DEFAULT_SIGNATURES,
) -> bytes | None:
    """Recovered message, or None when the stream does not match the app's format."""
    parsed = parse_payload_full(app, bits, password, sigs)
    return None if parsed is None else parsed.message


# ---------------------------------------------------------------------------
# rate arithmetic


def payload_len_bits(
    app: AppId, message_bytes: int, password_bytes: int = 0, sigs: SignatureTable = DEFAULT_SIGNATURES
) -> int:
    app = AppId.parse(app)
    if message_bytes < 0 or password_bytes < 0:
        raise ValueError("byte counts must be non-negative")
    if app is AppId.STEGMASTER:
        return 8 * (len(sigs.stegmaster_head) + password_bytes + len(sigs.stegmaster_open2)
                    + message_bytes + len(sigs.stegmaster_close2))
    if app is AppId.DAVINCI:
        return 96 + 8 * len(sigs.davinci_sig) + 8 * password_bytes + 8 * message_bytes
    if app is AppId.MOBISTEGO:
        return 8 * (len(sigs.mobistego_start) + len(sigs.mobistego_end)) + 8 * message_bytes
    if app is AppId.POCKETSTEGO:
        return 8 * message_bytes + 8 * len(sigs.pocketstego_terminator)
    return 32 + 8 * message_bytes


@dataclass(frozen=True)
class RateSpec:
    target: Fraction
    achieved: Fraction
    capacity_bits: int
    payload_bits: int
    message_bytes: int


def as_rate(value) -> Fraction:
    """Exact rational from a float/str/Fraction, using the decimal spelling for floats."""
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value))


def message_len_for_target(
    app: AppId,
    capacity_bits: int,
    target_rate,
    password_bytes: int = 0,
    sigs: SignatureTable = DEFAULT_SIGNATURES,
) -> RateSpec:
    """Longest message whose payload stays at or below ``floor(target * capacity)`` bits."""
    target = as_rate(target_rate)
    if not 0 < target <= 1:
        raise ValueError(f"target rate {target_rate} outside (0, 1]")
    lp_max = math.floor(target * capacity_bits)
    overhead = payload_len_bits(app, 0, password_bytes, sigs)
    message_bytes = (lp_max - overhead) // 8 if lp_max >= overhead else -1
    if message_bytes < 1:
        raise CapacityTooSmallError(
            f"{AppId.parse(app).value}: {lp_max} payload bits available at rate {target}, "
            f"need at least {overhead + 8}"
        )
    payload = payload_len_bits(app, message_bytes, password_bytes, sigs)
    return RateSpec(target, Fraction(payload, capacity_bits), capacity_bits, payload, message_bytes)
