"""Random-subspace ensemble of Fisher linear discriminants with out-of-bag tuning.

Each base learner sees a stratified bootstrap of the training rows and a
random subset of ``d_sub`` features. Predictions are a majority vote over an
odd number of learners. When ``d_sub`` is not given it is picked from a
power-of-two grid by out-of-bag error; when ``L`` is not given learners are
added until the OOB error stops improving.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import FitError

log = logging.getLogger(__name__)

MAX_LEARNERS = 101
STOP_WINDOW = 10
STOP_IMPROVEMENT = 0.005
MIN_D_SUB = 8


def within_class_scatter(X0: np.ndarray, X1: np.ndarray) -> np.ndarray:
    """Sum of the two class covariance matrices (unbiased, 1/(n-1))."""
    c0 = X0 - X0.mean(axis=0)
    c1 = X1 - X1.mean(axis=0)
    return c0.T @ c0 / (len(X0) - 1) + c1.T @ c1 / (len(X1) - 1)


def fit_fld(X0: np.ndarray, X1: np.ndarray, lam: float | None = None) -> tuple[np.ndarray, float]:
    """Fisher direction ``(S_w + lam I)^-1 (mu1 - mu0)`` and midpoint threshold.

    ``lam=None`` uses 1e-6 * trace(S_w) / d. If the Cholesky factorization fails,
    lam is multiplied by 10 up to three times before giving up.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=np.float64))
    X1 = np.atleast_2d(np.asarray(X1, dtype=np.float64))
    if X0.shape[1] != X1.shape[1]:
        raise ValueError("class feature widths differ")
    if len(X0) < 2 or len(X1) < 2:
        raise ValueError("need at least two rows per class")
    d = X0.shape[1]
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    sw = within_class_scatter(X0, X1)
    if lam is None:
        lam = 1e-6 * np.trace(sw) / d
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    for attempt in range(4):
        try:
            factor = linalg.cho_factor(sw + lam * np.eye(d), lower=True, check_finite=True)
            w = linalg.cho_solve(factor, mu1 - mu0)
        except linalg.LinAlgError:
            if attempt == 3:
                break
            lam = lam * 10 if lam > 0 else 1e-10
            continue
        if not np.all(np.isfinite(w)):
            break
        return w, float(w @ (mu0 + mu1) / 2)
    raise FitError(f"within-class scatter singular even with lambda={lam:g}")


@dataclass(frozen=True)
class BaseLearner:
    subspace: np.ndarray
    w: np.ndarray
    bias: float

    def decide(self, X: np.ndarray) -> np.ndarray:
        return X[:, self.subspace] @ self.w > self.bias


@dataclass
class EnsembleModel:
    learners: list[BaseLearner]
    d_sub: int
    feature_dim: int
    training_seed: int
    oob_error: float
    search: dict = field(default_factory=dict)  # d_sub -> (L, oob_error) when searched

    def __post_init__(self):
        if len(self.learners) % 2 == 0:
            raise ValueError("ensemble needs an odd number of learners")

    @property
    def n_learners(self) -> int:
        return len(self.learners)

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise ValueError(f"expected rows of width {self.feature_dim}, got shape {X.shape}")
        total = np.zeros(len(X), dtype=np.int64)
        for learner in self.learners:
            total += learner.decide(X)
        return total

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (2 * self.votes(X) > self.n_learners).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "learners": [
                {"subspace": lr.subspace.tolist(), "w": lr.w.tolist(), "bias": lr.bias}
                for lr in self.learners
            ],
            "d_sub": self.d_sub,
            "feature_dim": self.feature_dim,
            "training_seed": self.training_seed,
            "oob_error": self.oob_error,
            "search": {str(k): list(v) for k, v in self.search.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleModel":
        learners = [
            BaseLearner(np.asarray(lr["subspace"], dtype=np.int64),
                        np.asarray(lr["w"], dtype=np.float64), float(lr["bias"]))
            for lr in data["learners"]
        ]
        search = {int(k): tuple(v) for k, v in data.get("search", {}).items()}
        return cls(learners, int(data["d_sub"]), int(data["feature_dim"]),
                   int(data["training_seed"]), float(data["oob_error"]), search)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def _oob_error(votes: np.ndarray, counts: np.ndarray, y: np.ndarray) -> float:
    seen = counts > 0
    if not np.any(seen):
        return 0.5
    margin = 2 * votes[seen] - counts[seen]
    wrong = np.where(margin == 0, 0.5, ((margin > 0).astype(np.int64) != y[seen]).astype(float))
    return float(wrong.mean())


def _grow(X, y, d_sub, L, lam, seed):
    n, dim = X.shape
    idx0 = np.flatnonzero(y == 0)
    idx1 = np.flatnonzero(y == 1)
    votes = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    learners: list[BaseLearner] = []
    history: dict[int, float] = {}
    limit = L if L is not None else MAX_LEARNERS
    for k in range(limit):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        boot0 = rng.choice(idx0, size=len(idx0), replace=True)
        boot1 = rng.choice(idx1, size=len(idx1), replace=True)
        subspace = np.sort(rng.choice(dim, size=d_sub, replace=False))
        w, bias = fit_fld(X[np.ix_(boot0, subspace)], X[np.ix_(boot1, subspace)], lam)
        learner = BaseLearner(subspace, w, bias)
        learners.append(learner)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[boot0] = True
        in_bag[boot1] = True
        oob = np.flatnonzero(~in_bag)
        votes[oob] += learner.decide(X[oob])
        counts[oob] += 1
        size = k + 1
        if size % 2 == 0:
            continue
        history[size] = _oob_error(votes, counts, y)
        if L is None and size > STOP_WINDOW and history[size - STOP_WINDOW] - history[size] < STOP_IMPROVEMENT:
            break
    size = len(learners) if len(learners) % 2 else len(learners) - 1
    return learners[:size], history[size]


def d_sub_grid(dim: int) -> list[int]:
    grid = []
    k = MIN_D_SUB
    while k <= dim // 2:
        grid.append(k)
        k *= 2
    return grid or [dim]


def train(
    X: np.ndarray,
    y: np.ndarray,
    L: int | None = None,
    d_sub: int | None = None,
    lam: float | None = None,
    seed: int = 0,
) -> EnsembleModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one label per row")
    n0, n1 = int(np.sum(y == 0)), int(np.sum(y == 1))
    if n0 < 2 or n1 < 2 or n0 + n1 != len(y):
        raise ValueError("training needs labels 0 and 1 with at least two rows each")
    if abs(n0 - n1) > 0.1 * max(n0, n1):
        log.warning("unbalanced training set: %d covers vs %d stegos", n0, n1)
    if L is not None and (L < 1 or L % 2 == 0):
        raise ValueError("L must be a positive odd number")
    dim = X.shape[1]
    if d_sub is not None and not 1 <= d_sub <= dim:
        raise ValueError(f"d_sub must be within 1..{dim}")

    candidates = [d_sub] if d_sub is not None else d_sub_grid(dim)
    best = None
    search = {}
    for ds in candidates:
        learners, err = _grow(X, y, ds, L, lam, seed)
        search[ds] = (len(learners), err)
        log.debug("d_sub=%d L=%d oob=%.4f", ds, len(learners), err)
        if best is None or err < best[2]:
            best = (ds, learners, err)
    ds, learners, err = best
    return EnsembleModel(learners, ds, dim, seed, err, search if d_sub is None else {})
