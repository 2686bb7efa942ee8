"""Brute-force pNML over finite hypothesis classes.

Hypotheses are conditional PMF tables over categorical feature indices.
Everything is exhaustively enumerated in the log domain, giving ground
truth for the equalizer property, nonnegativity of the regret, and the
SGD pipeline on small convex instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import PnmlResult, normalize_pnml

INF_REGRET = math.inf


@dataclass(frozen=True)
class FiniteHypothesisClass:
    """tables[h] is (num_features, num_labels); each row a PMF over labels."""

    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.tables:
            raise ValueError("need at least one hypothesis")
        tabs = []
        shape = None
        for t in self.tables:
            t = np.asarray(t, dtype=np.float64)
            if t.ndim != 2:
                raise ValueError("hypothesis table must be 2-D")
            if shape is None:
                shape = t.shape
            elif t.shape != shape:
                raise ValueError("hypothesis tables must share a shape")
            if (t < 0).any() or not np.allclose(t.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("each table row must be a PMF")
            tabs.append(t)
        object.__setattr__(self, "tables", tuple(tabs))

    @property
    def num_hypotheses(self) -> int:
        return len(self.tables)

    @property
    def num_labels(self) -> int:
        return self.tables[0].shape[1]


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else -math.inf


def _train_loglik(table: np.ndarray, train_x, train_y) -> float:
    return sum(_log(float(table[xi, yi])) for xi, yi in zip(train_x, train_y))


def exact_genie(cls: FiniteHypothesisClass, train_x, train_y, x: int,
                y: int) -> tuple[int, float, float]:
    """argmax over hypotheses of p(y|x) * prod p(y_i|x_i), enumerated in the
    log domain. Ties on the joint break toward larger p(y|x), then the
    lowest hypothesis index. Returns (index, log-joint, p(y|x))."""
    best = None
    for h, table in enumerate(cls.tables):
        prob = float(table[x, y])
        joint = _log(prob) + _train_loglik(table, train_x, train_y)
        key = (joint, prob, -h)
        if best is None or key > best[0]:
            best = (key, h, joint, prob)
    _, h, joint, prob = best
    return h, joint, prob


def exact_pnml(cls: FiniteHypothesisClass, train_x, train_y, x: int) -> PnmlResult:
    p = np.array([
        exact_genie(cls, train_x, train_y, x, y)[2]
        for y in range(cls.num_labels)
    ])
    q, C, gamma = normalize_pnml(p)
    return PnmlResult(p, q, C, gamma)


def exact_regret(cls: FiniteHypothesisClass, train_x, train_y, x: int, y: int,
                 q: np.ndarray) -> float:
    """Base-10 log of genie probability over q(y); inf when q(y) = 0."""
    _, _, genie_prob = exact_genie(cls, train_x, train_y, x, y)
    qy = float(q[y])
    if qy <= 0.0:
        return INF_REGRET
    return math.log10(genie_prob / qy) if genie_prob > 0 else -math.inf


def random_instance(rng: np.random.Generator, max_hyp=5, max_labels=4,
                    max_train=6, num_features=3):
    """A random finite-class instance for property tests."""
    H = int(rng.integers(1, max_hyp + 1))
    L = int(rng.integers(2, max_labels + 1))
    tables = []
    for _ in range(H):
        raw = rng.random((num_features, L)) + 1e-3
        tables.append(raw / raw.sum(axis=1, keepdims=True))
    n = int(rng.integers(0, max_train + 1))
    train_x = rng.integers(0, num_features, size=n).tolist()
    train_y = rng.integers(0, L, size=n).tolist()
    x = int(rng.integers(0, num_features))
    return FiniteHypothesisClass(tuple(tables)), train_x, train_y, x


def save_instance(cls: FiniteHypothesisClass, train_x, train_y, path) -> None:
    doc = {
        "tables": [t.tolist() for t in cls.tables],
        "train_x": list(map(int, train_x)),
        "train_y": list(map(int, train_y)),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_instance(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    cls = FiniteHypothesisClass(tuple(np.asarray(t) for t in doc["tables"]))
    return cls, doc["train_x"], doc["train_y"]
