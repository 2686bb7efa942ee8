"""Single-step sign-gradient (FGSM) attack in the black-box setting: the
perturbation comes from a separate source model, not the one under test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ModelParams, input_gradient


@dataclass(frozen=True)
class AttackSpec:
    epsilon: float
    source_model: ModelParams
    pixel_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        lo, hi = self.pixel_range
        if not lo < hi:
            raise ValueError("pixel_range must be (lo, hi) with lo < hi")


def fgsm(spec: AttackSpec, x: np.ndarray, y: int) -> np.ndarray:
    """x + eps * sign(d loss / d x) under the source model, clamped to the
    pixel range. np.sign gives sign(0) = 0, leaving flat coordinates alone."""
    g = input_gradient(spec.source_model, x, y)
    x_adv = np.asarray(x, dtype=np.float64) + spec.epsilon * np.sign(g)
    lo, hi = spec.pixel_range
    return np.clip(x_adv, lo, hi)


def fgsm_batch(spec: AttackSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.stack([fgsm(spec, X[i], int(y[i])) for i in range(X.shape[0])])
