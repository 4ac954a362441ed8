"""SRM-mini: a 1014-dimensional spatial rich model for grayscale images.

Three residual families (first order, second order, 3x3 "square"), each at
quantization steps 1 and 2, truncated to [-2, 2]. Fourth-order co-occurrences
are taken along the residual's own direction (both directions for the square
kernel), merged, folded under sign flip and reversal into 169 classes and
normalized per block.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .imaging import Channels, PixelImage

T = 2
ORDER = 4
QUANT_STEPS = (1, 2)
RESIDUALS = ("R1", "R2", "S3")
N_CLASSES = 169
FEATURE_DIM = len(RESIDUALS) * len(QUANT_STEPS) * N_CLASSES


def _build_class_map() -> tuple[np.ndarray, list[tuple[int, ...]]]:
    values = range(-T, T + 1)
    canon = {}
    for t in itertools.product(values, repeat=ORDER):
        neg = tuple(-v for v in t)
        canon[t] = min(t, neg, t[::-1], neg[::-1])
    reps = sorted(set(canon.values()))
    index = {r: i for i, r in enumerate(reps)}
    base = 2 * T + 1
    cmap = np.empty(base ** ORDER, dtype=np.int64)
    for t, rep in canon.items():
        code = 0
        for v in t:
            code = code * base + (v + T)
        cmap[code] = index[rep]
    return cmap, reps


CLASS_MAP, CLASS_REPRESENTATIVES = _build_class_map()
assert len(CLASS_REPRESENTATIVES) == N_CLASSES


def quantize(residual: np.ndarray, q: int) -> np.ndarray:
    """clamp(round_half_away_from_zero(r / q), -T, T) on integer residuals."""
    r = residual.astype(np.int64)
    if q == 1:
        d = r
    else:
        d = np.sign(r) * ((2 * np.abs(r) + q) // (2 * q))
    return np.clip(d, -T, T)


def residual_maps(x: np.ndarray) -> dict[str, list[tuple[np.ndarray, str]]]:
    """Each family -> list of (residual map, scan direction)."""
    x = x.astype(np.int64)
    r1h = x[:, 1:] - x[:, :-1]
    r1v = x[1:, :] - x[:-1, :]
    r2h = x[:, :-2] - 2 * x[:, 1:-1] + x[:, 2:]
    r2v = x[:-2, :] - 2 * x[1:-1, :] + x[2:, :]
    s3 = x[:-2, 1:-1] + x[2:, 1:-1] + x[1:-1, :-2] + x[1:-1, 2:] - 4 * x[1:-1, 1:-1]
    return {
        "R1": [(r1h, "h"), (r1v, "v")],
        "R2": [(r2h, "h"), (r2v, "v")],
        "S3": [(s3, "h"), (s3, "v")],
    }


def cooccurrence_counts(d: np.ndarray, direction: str) -> np.ndarray:
    """625-bin histogram of 4 consecutive values along rows ('h') or columns ('v')."""
    if direction == "v":
        d = d.T
    base = 2 * T + 1
    n = d.shape[1] - ORDER + 1
    if n <= 0:
        return np.zeros(base ** ORDER, dtype=np.int64)
    code = np.zeros((d.shape[0], n), dtype=np.int64)
    for k in range(ORDER):
        code = code * base + (d[:, k:k + n] + T)
    return np.bincount(code.ravel(), minlength=base ** ORDER)


def fold(counts: np.ndarray) -> np.ndarray:
    return np.bincount(CLASS_MAP, weights=counts, minlength=N_CLASSES)


def srm_mini(img: PixelImage) -> np.ndarray:
    if img.channels is not Channels.GRAY:
        raise ValueError("srm_mini needs a grayscale image")
    if img.width < 3 or img.height < 3:
        raise ValueError("srm_mini needs an image of at least 3x3")
    maps = residual_maps(img.pixels[:, :, 0])
    blocks = []
    for family in RESIDUALS:
        for q in QUANT_STEPS:
            counts = np.zeros((2 * T + 1) ** ORDER, dtype=np.int64)
            for residual, direction in maps[family]:
                counts += cooccurrence_counts(quantize(residual, q), direction)
            block = fold(counts)
            total = block.sum()
            blocks.append(block / total if total else block)
    return np.concatenate(blocks)


def feature_names() -> list[str]:
    return [f"f{i}" for i in range(FEATURE_DIM)]


def extract_many(images: Sequence[PixelImage], threads: int = 1) -> np.ndarray:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(srm_mini, images))
    else:
        rows = [srm_mini(img) for img in images]
    return np.vstack(rows) if rows else np.zeros((0, FEATURE_DIM))


def write_feature_csv(path: str | Path, ids: Sequence[str], labels: Sequence[int], X: np.ndarray) -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(ids) or len(ids) != len(labels):
        raise ValueError("ids, labels and feature rows must line up")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f{i}" for i in range(X.shape[1])])
        for sid, label, row in zip(ids, labels, X):
            w.writerow([sid, int(label)] + [repr(float(v)) for v in row])


def read_feature_csv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "label"]:
            raise ValueError(f"{path}: header must start with id,label")
        ids, labels, rows = [], [], []
        for row in reader:
            ids.append(row[0])
            labels.append(int(row[1]))
            rows.append([float(v) for v in row[2:]])
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header) - 2)
    return ids, np.asarray(labels, dtype=np.int64), X
