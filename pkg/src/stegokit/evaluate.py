"""Error metrics and the rate-grid / cover-source-mismatch experiment runners."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ensemble
from .datagen import DatasetManifest, ManifestRecord, format_rate
from .features import srm_mini
from .imaging import read_png, to_grayscale
from .payload import AppId, as_rate


@dataclass(frozen=True)
class ErrorReport:
    p_md: float
    p_fa: float
    p_e: float
    n_cover: int
    n_stego: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ErrorReport":
        return cls(float(data["p_md"]), float(data["p_fa"]), float(data["p_e"]),
                   int(data["n_cover"]), int(data["n_stego"]))


def p_e(truth: Sequence[int], pred: Sequence[int]) -> ErrorReport:
    """Average of missed-detection and false-alarm rates (labels: 0 cover, 1 stego)."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise ValueError("truth and predictions differ in length")
    stego = truth == 1
    cover = truth == 0
    if not stego.any() or not cover.any():
        raise ValueError("truth must contain both covers and stegos")
    p_md = float(np.mean(pred[stego] != 1))
    p_fa = float(np.mean(pred[cover] != 0))
    return ErrorReport(p_md, p_fa, (p_md + p_fa) / 2, int(cover.sum()), int(stego.sum()))


def _pooled(reports: Sequence[ErrorReport]) -> ErrorReport:
    """Pool counts from repeated runs into a single report."""
    md = sum(r.p_md * r.n_stego for r in reports)
    fa = sum(r.p_fa * r.n_cover for r in reports)
    n_s = sum(r.n_stego for r in reports)
    n_c = sum(r.n_cover for r in reports)
    p_md, p_fa = md / n_s, fa / n_c
    return ErrorReport(p_md, p_fa, (p_md + p_fa) / 2, n_c, n_s)


class FeatureStore:
    """Lazily extracted SRM-mini features keyed by manifest record path."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._cache: dict[str, np.ndarray] = {}

    def get(self, record: ManifestRecord) -> np.ndarray:
        key = str(self.manifest.resolve(record))
        if key not in self._cache:
            self._cache[key] = srm_mini(to_grayscale(read_png(key)))
        return self._cache[key]

    def matrix(self, pairs, ids) -> tuple[np.ndarray, np.ndarray]:
        """Cover rows then stego rows for the chosen source ids."""
        by_id = {c.source_id: (c, s) for c, s in pairs}
        covers = [self.get(by_id[i][0]) for i in ids]
        stegos = [self.get(by_id[i][1]) for i in ids]
        X = np.vstack(covers + stegos)
        y = np.r_[np.zeros(len(covers), np.int64), np.ones(len(stegos), np.int64)]
        return X, y


@dataclass
class RateGrid:
    train_rates: list
    test_rates: list
    cells: dict = field(default_factory=dict)  # (train, test) -> ErrorReport

    def cell(self, train_rate, test_rate) -> ErrorReport:
        return self.cells[(as_rate(train_rate), as_rate(test_rate))]

    def to_dict(self) -> dict:
        return {
            "train_rates": [format_rate(r) for r in self.train_rates],
            "test_rates": [format_rate(r) for r in self.test_rates],
            "cells": {f"{format_rate(a)}|{format_rate(b)}": rep.to_dict() for (a, b), rep in self.cells.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RateGrid":
        cells = {}
        for key, rep in data["cells"].items():
            a, b = key.split("|")
            cells[(as_rate(a), as_rate(b))] = ErrorReport.from_dict(rep)
        return cls([as_rate(r) for r in data["train_rates"]], [as_rate(r) for r in data["test_rates"]], cells)

    def to_csv(self) -> str:
        """Rows are test rates, columns training rates (p_e values)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["test\\train"] + [format_rate(r) for r in self.train_rates])
        for b in self.test_rates:
            w.writerow([format_rate(b)] + [f"{self.cells[(a, b)].p_e:.4f}" for a in self.train_rates])
        return buf.getvalue()


def split_sources(ids: Sequence[str], n_train: int, n_test: int, seed: int) -> tuple[list[str], list[str]]:
    ids = sorted(ids)
    if n_train + n_test > len(ids):
        raise ValueError(f"need {n_train + n_test} sources, have {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    test = [ids[i] for i in order[:n_test]]
    train = [ids[i] for i in order[n_test:n_test + n_train]]
    assert_disjoint(train, test)
    return train, test


def assert_disjoint(train_ids, test_ids) -> None:
    shared = set(train_ids) & set(test_ids)
    if shared:
        raise AssertionError(f"train/test share sources: {sorted(shared)[:5]}")


def run_rate_grid(
    manifest: DatasetManifest,
    app,
    train_rates: Sequence,
    test_rates: Sequence,
    n_train_pairs: int,
    n_test_pairs: int,
    seed: int = 0,
    *,
    repetitions: int = 1,
    L: int | None = None,
    d_sub: int | None = None,
    store: FeatureStore | None = None,
) -> RateGrid:
    """Train one ensemble per training rate and score it on every test rate.

    Splits are by source image, so a cover and its stegos never straddle
    train and test. With ``repetitions > 1`` the test set stays fixed and the
    training subset is redrawn; counts are pooled over repetitions.
    """
    app = AppId.parse(app)
    train_rates = [as_rate(r) for r in train_rates]
    test_rates = [as_rate(r) for r in test_rates]
    store = store or FeatureStore(manifest)
    pairs = {r: manifest.pairs(app, r) for r in set(train_rates) | set(test_rates)}
    need = n_train_pairs + n_test_pairs
    for r, p in pairs.items():
        if len(p) < need:
            raise ValueError(f"rate {format_rate(r)} for {app.value}: {len(p)} pairs, need {need}")
    common = set.intersection(*(set(c.source_id for c, _ in p) for p in pairs.values()))
    if len(common) < need:
        raise ValueError(f"only {len(common)} sources have pairs at every rate, need {need}")

    rng = np.random.default_rng(seed)
    _, test_ids = split_sources(sorted(common), 0, n_test_pairs, int(rng.integers(2**63)))
    pool = sorted(common - set(test_ids))
    per_cell: dict = {}
    for rep in range(repetitions):
        order = rng.permutation(len(pool))
        train_ids = [pool[i] for i in order[:n_train_pairs]]
        assert_disjoint(train_ids, test_ids)
        for a in train_rates:
            X, y = store.matrix(pairs[a], train_ids)
            model = ensemble.train(X, y, L=L, d_sub=d_sub, seed=seed + rep)
            for b in test_rates:
                Xt, yt = store.matrix(pairs[b], test_ids)
                per_cell.setdefault((a, b), []).append(p_e(yt, model.predict(Xt)))
    cells = {k: _pooled(v) for k, v in per_cell.items()}
    return RateGrid(train_rates, test_rates, cells)


def run_source_mismatch(
    manifests_by_source: Mapping[str, DatasetManifest],
    app,
    rate,
    seed: int = 0,
    *,
    n_train_pairs: int | None = None,
    n_test_pairs: int | None = None,
    L: int | None = None,
    d_sub: int | None = None,
) -> dict[str, ErrorReport]:
    """Leave-one-source-out: train on every other source, test on the held-out one."""
    if len(manifests_by_source) < 2:
        raise ValueError("source mismatch needs at least two sources")
    app = AppId.parse(app)
    stores = {name: FeatureStore(m) for name, m in manifests_by_source.items()}
    pairs = {name: m.pairs(app, rate) for name, m in manifests_by_source.items()}
    for name, p in pairs.items():
        if len(p) < 2:
            raise ValueError(f"source {name!r} has {len(p)} pairs at rate {format_rate(rate)}")

    def pick(name, n, salt):
        ids = sorted(c.source_id for c, _ in pairs[name])
        if n is None or n >= len(ids):
            return ids
        order = np.random.default_rng([seed, salt]).permutation(len(ids))
        return sorted(ids[i] for i in order[:n])

    reports = {}
    names = sorted(manifests_by_source)
    for k, held in enumerate(names):
        Xs, ys = [], []
        for j, name in enumerate(names):
            if name == held:
                continue
            X, y = stores[name].matrix(pairs[name], pick(name, n_train_pairs, j))
            Xs.append(X)
            ys.append(y)
        model = ensemble.train(np.vstack(Xs), np.concatenate(ys), L=L, d_sub=d_sub, seed=seed)
        Xt, yt = stores[held].matrix(pairs[held], pick(held, n_test_pairs, 1000 + k))
        reports[held] = p_e(yt, model.predict(Xt))
    return reports


def dump_reports(reports: Mapping[str, ErrorReport]) -> str:
    return json.dumps({k: v.to_dict() for k, v in reports.items()}, sort_keys=True)
