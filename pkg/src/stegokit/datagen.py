"""Batch cover/stego generation with embedding-rate control, plus synthetic covers.

For every source image and app the generator saves the pre-processed cover,
computes the capacity, and for each target rate derives the longest message
that keeps the payload at or under the target, takes that many bytes from
the dictionary pool at a random offset, embeds, re-extracts as a self-check
and records the result. Everything random flows from ``master_seed``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .embedders import APP_PROFILES, capacity_bits, embed, extract_bits
from .errors import CapacityTooSmallError, PayloadAmbiguityError
from .imaging import Channels, PixelImage, force_alpha, read_png, write_png
from .payload import (
    DEFAULT_SIGNATURES,
    AppId,
    PayloadBits,
    RateSpec,
    SignatureTable,
    as_rate,
    build_payload,
    message_len_for_target,
    parse_payload,
    payload_len_bits,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
PASSWORD_ALPHABET = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_MAX_MESSAGE_DRAWS = 16


def default_dictionary() -> bytes:
    return resources.files("stegokit").joinpath("data/dictionary.txt").read_bytes()


def format_rate(rate) -> str:
    return f"{float(as_rate(rate)):g}"


# ---------------------------------------------------------------------------
# covers


def make_cover(app: AppId, image: PixelImage) -> PixelImage:
    """The app's pre-processed, payload-free image. Only DaVinci changes anything."""
    app = AppId.parse(app)
    if app is AppId.DAVINCI:
        return force_alpha(image, 255)
    return image


@dataclass(frozen=True)
class SynthSpec:
    count: int
    width: int
    height: int
    noise_sigma: float = 0.0
    smoothing_radius: int = 3
    seed: int = 0
    channels: str = "gray"

    def __post_init__(self):
        if self.count < 0 or self.width < 1 or self.height < 1:
            raise ValueError("synth spec needs count >= 0 and positive dimensions")
        if self.noise_sigma < 0 or self.smoothing_radius < 0:
            raise ValueError("noise_sigma and smoothing_radius must be non-negative")
        if self.channels not in ("gray", "rgb"):
            raise ValueError("channels must be 'gray' or 'rgb'")

    @classmethod
    def smooth(cls, count: int, width: int, height: int, seed: int = 0, channels: str = "gray",
               smoothing_radius: int = 3) -> "SynthSpec":
        return cls(count, width, height, 0.0, max(2, smoothing_radius), seed, channels)

    @classmethod
    def noisy(cls, count: int, width: int, height: int, seed: int = 0, channels: str = "gray",
              noise_sigma: float = 8.0) -> "SynthSpec":
        return cls(count, width, height, max(8.0, noise_sigma), 0, seed, channels)


def synth_covers(spec: SynthSpec) -> list[PixelImage]:
    """clamp(box_blur^passes(uniform field) + N(0, sigma)), one 3x3 box per pass."""
    rng = np.random.default_rng(spec.seed)
    n_planes = 3 if spec.channels == "rgb" else 1
    images = []
    for _ in range(spec.count):
        planes = []
        for _ in range(n_planes):
            field_ = rng.uniform(0.0, 255.0, size=(spec.height, spec.width))
            for _ in range(spec.smoothing_radius):
                field_ = ndimage.uniform_filter(field_, size=3, mode="reflect")
            if spec.noise_sigma:
                field_ = field_ + rng.normal(0.0, spec.noise_sigma, size=field_.shape)
            planes.append(np.clip(np.rint(field_), 0, 255).astype(np.uint8))
        arr = np.stack(planes, axis=2)
        images.append(PixelImage(arr, Channels.RGB if n_planes == 3 else Channels.GRAY))
    return images


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    role: str
    app: str
    source_id: str
    target_rate: float | None
    achieved_rate: float | None
    message_bytes: int | None
    password: str | None
    change_rate: float | None
    seed: int | None
    width: int
    height: int

    @property
    def is_stego(self) -> bool:
        return self.role == "stego"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        data = json.loads(line)
        names = {f.name for f in fields(cls)}
        missing = names - data.keys()
        if missing:
            raise ValueError(f"manifest record missing fields {sorted(missing)}")
        return cls(**{k: data[k] for k in names})

    def sort_key(self):
        return (self.source_id, self.app, -1.0 if self.target_rate is None else self.target_rate)


@dataclass
class DatasetManifest:
    root: Path
    records: list[ManifestRecord]
    skipped: list[dict] = field(default_factory=list)

    def covers(self, app: str | AppId | None = None) -> list[ManifestRecord]:
        app = None if app is None else AppId.parse(app).value
        return [r for r in self.records if r.role == "cover" and (app is None or r.app == app)]

    def stegos(self, app: str | AppId | None = None, rate=None) -> list[ManifestRecord]:
        app = None if app is None else AppId.parse(app).value
        return [
            r for r in self.records
            if r.is_stego and (app is None or r.app == app)
            and (rate is None or as_rate(r.target_rate) == as_rate(rate))
        ]

    def pairs(self, app, rate) -> list[tuple[ManifestRecord, ManifestRecord]]:
        """(cover, stego) records for one app and target rate, ordered by source_id."""
        covers = {r.source_id: r for r in self.covers(app)}
        out = [(covers[s.source_id], s) for s in self.stegos(app, rate) if s.source_id in covers]
        return sorted(out, key=lambda p: p[1].source_id)

    def resolve(self, record: ManifestRecord) -> Path:
        return self.root / record.path

    def write(self, path: Path | None = None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        ordered = sorted(self.records, key=ManifestRecord.sort_key)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in ordered:
                fh.write(rec.to_json() + "\n")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            records = [ManifestRecord.from_json(line) for line in fh if line.strip()]
        return cls(path.parent, records)


# ---------------------------------------------------------------------------
# generation


@dataclass
class GenConfig:
    output_dir: Path
    apps: Sequence[AppId]
    rates: Sequence
    input_dir: Path | None = None
    synth: SynthSpec | None = None
    dictionary: bytes | None = None
    password: bytes | None = None  # None -> random 8-char password per stego
    master_seed: int = 0
    threads: int = 1
    sigs: SignatureTable = DEFAULT_SIGNATURES
    mobistego_blocks: int = 1

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.apps = [AppId.parse(a) for a in self.apps]
        self.rates = [as_rate(r) for r in self.rates]
        if not self.apps or not self.rates:
            raise ValueError("need at least one app and one rate")
        if any(not 0 < r <= 1 for r in self.rates):
            raise ValueError("rates must lie in (0, 1]")
        if (self.input_dir is None) == (self.synth is None):
            raise ValueError("give exactly one of input_dir or synth")
        if self.dictionary is None:
            self.dictionary = default_dictionary()
        if not self.dictionary:
            raise ValueError("dictionary pool is empty")
        if self.password is not None and not self.password:
            raise ValueError("fixed password must be non-empty")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "GenConfig":
        base = base or Path.cwd()
        data = dict(data)

        def rel(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        synth = SynthSpec(**data["synth"]) if data.get("synth") else None
        dict_file = data.get("dictionary_file")
        sig_file = data.get("signature_config")
        password = data.get("password")
        return cls(
            output_dir=rel(data["output_dir"]),
            apps=data["apps"],
            rates=data["rates"],
            input_dir=rel(data.get("input_dir")),
            synth=synth,
            dictionary=rel(dict_file).read_bytes() if dict_file else None,
            password=password.encode() if password else None,
            master_seed=int(data.get("master_seed", 0)),
            threads=int(data.get("threads", 1)),
            sigs=SignatureTable.load(rel(sig_file)) if sig_file else DEFAULT_SIGNATURES,
            mobistego_blocks=int(data.get("mobistego_blocks", 1)),
        )

    def to_dict(self) -> dict:
        return {
            "output_dir": str(self.output_dir),
            "apps": [a.value for a in self.apps],
            "rates": [format_rate(r) for r in self.rates],
            "input_dir": None if self.input_dir is None else str(self.input_dir),
            "synth": None if self.synth is None else asdict(self.synth),
            "dictionary_sha256": hashlib.sha256(self.dictionary).hexdigest(),
            "password": None if self.password is None else self.password.decode("latin-1"),
            "master_seed": self.master_seed,
            "threads": self.threads,
            "mobistego_blocks": self.mobistego_blocks,
        }


def record_seed(master_seed: int, source_id: str, app: AppId, rate) -> int:
    key = f"{master_seed}/{source_id}/{app.value}/{format_rate(rate)}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def dictionary_slice(pool: bytes, offset: int, length: int) -> bytes:
    """``length`` bytes from ``offset``, wrapping around the end of the pool."""
    if length <= len(pool) - offset:
        return pool[offset:offset + length]
    reps = -(-(offset + length) // len(pool))
    return (pool * reps)[offset:offset + length]


@dataclass(frozen=True)
class StegoPlan:
    password: bytes
    rate: RateSpec
    message: bytes
    payload: PayloadBits


def plan_stego(
    app: AppId, capacity: int, rate, seed: int, pool: bytes,
    password: bytes | None = None, sigs: SignatureTable = DEFAULT_SIGNATURES,
) -> StegoPlan:
    """Deterministic password/message/payload for one stego, given its record seed."""
    rng = np.random.default_rng(seed)
    if password is None:
        password = bytes(rng.choice(np.frombuffer(PASSWORD_ALPHABET, np.uint8), size=8))
    spec = message_len_for_target(app, capacity, rate, len(password), sigs)
    for _ in range(_MAX_MESSAGE_DRAWS):
        offset = int(rng.integers(len(pool)))
        message = dictionary_slice(pool, offset, spec.message_bytes)
        try:
            payload = build_payload(app, message, password, sigs)
        except PayloadAmbiguityError:
            continue
        return StegoPlan(password, spec, message, payload)
    raise PayloadAmbiguityError(
        f"{app.value}: {_MAX_MESSAGE_DRAWS} dictionary segments all collide with a signature"
    )


def _iter_sources(cfg: GenConfig) -> list[tuple[str, PixelImage | Path]]:
    if cfg.synth is not None:
        return [(f"synth{i:05d}", img) for i, img in enumerate(synth_covers(cfg.synth))]
    root = Path(cfg.input_dir)
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".png")
    return [(str(p.relative_to(root).with_suffix("")).replace("/", "_"), p) for p in files]


def _process_source(cfg: GenConfig, source_id: str, source) -> tuple[list[ManifestRecord], list[dict]]:
    image = source if isinstance(source, PixelImage) else read_png(source)
    records: list[ManifestRecord] = []
    skipped: list[dict] = []
    for app in cfg.apps:
        if image.channels not in APP_PROFILES[app].channels and not (
            app is AppId.DAVINCI and image.channels is Channels.RGBA
        ):
            reason = f"{image.channels.name} input incompatible with {app.value}"
            log.warning("skip %s/%s: %s", source_id, app.value, reason)
            skipped.append({"source_id": source_id, "app": app.value, "reason": reason})
            continue
        cover = make_cover(app, image)
        cover_rel = Path(app.value) / "covers" / f"{source_id}.png"
        write_png(cfg.output_dir / cover_rel, cover)
        records.append(ManifestRecord(
            cover_rel.as_posix(), "cover", app.value, source_id,
            None, None, None, None, None, None, cover.width, cover.height,
        ))
        capacity = capacity_bits(app, cover)
        for rate in cfg.rates:
            seed = record_seed(cfg.master_seed, source_id, app, rate)
            try:
                plan = plan_stego(app, capacity, rate, seed, cfg.dictionary, cfg.password, cfg.sigs)
            except (CapacityTooSmallError, PayloadAmbiguityError) as exc:
                log.warning("skip %s/%s@%s: %s", source_id, app.value, format_rate(rate), exc)
                skipped.append({"source_id": source_id, "app": app.value,
                                "target_rate": float(rate), "reason": str(exc)})
                continue
            result = embed(app, cover, plan.payload, plan.password, cfg.mobistego_blocks)
            back = extract_bits(app, result.stego, plan.payload.len_bits, plan.password, cfg.mobistego_blocks)
            if parse_payload(app, back, plan.password, cfg.sigs) != plan.message:
                raise RuntimeError(f"self-check failed for {source_id}/{app.value}@{format_rate(rate)}")
            stego_rel = Path(app.value) / f"stego_{format_rate(rate)}" / f"{source_id}.png"
            write_png(cfg.output_dir / stego_rel, result.stego)
            records.append(ManifestRecord(
                stego_rel.as_posix(), "stego", app.value, source_id,
                float(rate), float(plan.rate.achieved), plan.rate.message_bytes,
                plan.password.decode("latin-1"), result.change_rate, seed,
                cover.width, cover.height,
            ))
    return records, skipped


def generate_dataset(
    cfg: GenConfig, sources: Iterable[tuple[str, PixelImage]] | None = None
) -> DatasetManifest:
    """Run the batch script; ``sources`` overrides ``input_dir``/``synth`` when given."""
    items = list(sources) if sources is not None else _iter_sources(cfg)
    ids = [sid for sid, _ in items]
    if len(set(ids)) != len(ids):
        raise ValueError("source ids must be unique")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda item: _process_source(cfg, *item), items))
    else:
        results = [_process_source(cfg, sid, src) for sid, src in items]
    records = [r for recs, _ in results for r in recs]
    skipped = [s for _, sk in results for s in sk]
    manifest = DatasetManifest(cfg.output_dir, sorted(records, key=ManifestRecord.sort_key), skipped)
    manifest.write()
    return manifest


# ---------------------------------------------------------------------------
# checks


def validate_manifest(manifest: DatasetManifest, sigs: SignatureTable = DEFAULT_SIGNATURES) -> list[str]:
    """Referential integrity and rate bookkeeping; returns a list of problems (empty if clean)."""
    problems = []
    covers = {(r.source_id, r.app): r for r in manifest.covers()}
    for rec in manifest.records:
        path = manifest.resolve(rec)
        if not path.is_file():
            problems.append(f"{rec.path}: file missing")
            continue
        if not rec.is_stego:
            continue
        cover = covers.get((rec.source_id, rec.app))
        if cover is None:
            problems.append(f"{rec.path}: no cover for {rec.source_id}/{rec.app}")
            continue
        if (cover.width, cover.height) != (rec.width, rec.height):
            problems.append(f"{rec.path}: dimensions differ from cover")
        app = AppId.parse(rec.app)
        capacity = APP_PROFILES[app].bits_per_pixel * rec.width * rec.height
        payload = payload_len_bits(app, rec.message_bytes, len(rec.password.encode("latin-1")), sigs)
        achieved = Fraction(payload, capacity)
        if float(achieved) != rec.achieved_rate:
            problems.append(f"{rec.path}: achieved_rate {rec.achieved_rate} != {float(achieved)}")
        target = as_rate(rec.target_rate)
        if achieved > target:
            problems.append(f"{rec.path}: achieved rate above target")
        if target - achieved >= Fraction(8, capacity):
            problems.append(f"{rec.path}: achieved rate more than one message byte below target")
    return problems


def verify_dataset(
    manifest: DatasetManifest,
    dictionary: bytes | None = None,
    sigs: SignatureTable = DEFAULT_SIGNATURES,
    mobistego_blocks: int = 1,
    fixed_password: bytes | None = None,
) -> list[str]:
    """Re-extract every stego and compare with the message regenerated from its seed."""
    pool = dictionary if dictionary is not None else default_dictionary()
    problems = []
    for rec in manifest.stegos():
        app = AppId.parse(rec.app)
        img = read_png(manifest.resolve(rec))
        capacity = capacity_bits(app, img)
        plan = plan_stego(app, capacity, rec.target_rate, rec.seed, pool, fixed_password, sigs)
        if plan.password.decode("latin-1") != rec.password:
            problems.append(f"{rec.path}: regenerated password differs")
            continue
        bits = extract_bits(app, img, plan.payload.len_bits, plan.password, mobistego_blocks)
        if parse_payload(app, bits, plan.password, sigs) != plan.message:
            problems.append(f"{rec.path}: extracted message differs")
    return problems
