"""Per-label fine-tuning pNML, the genie reference, regret, and the
twice-universal combiner.

For each candidate label i the test sample joins the trainset with that
label and SGD continues from the ERM weights; p_i is the probability the
label-i model assigns to label i. Normalizing the p_i gives the predictor,
C is the normalizer and Gamma = log10(C) is the regret.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import ModelParams, forward
from .training import FreezeSpec, HyperParams, sgd_train

# Odd 64-bit mixing constant for per-label seed derivation.
_SEED_MIX = 0x9E3779B97F4A7C15


class DegenerateInputError(ValueError):
    """All candidate-label probabilities are zero; no valid normalization."""


@dataclass(frozen=True)
class HypothesisClassSpec:
    """One model class for fine-tuning: which layers move and how."""

    freeze: FreezeSpec
    fine_tune_hyper: HyperParams


@dataclass
class PnmlResult:
    genie_probs: np.ndarray  # p_i per candidate label
    q_pnml: np.ndarray
    normalization_C: float
    regret_gamma: float  # base-10
    per_label_params_digest: list[str] | None = None


def job_seed(base_seed: int, label: int) -> int:
    """Per-label fine-tuning seed; adding labels never shifts other jobs."""
    return (base_seed ^ ((label + 1) * _SEED_MIX)) & 0xFFFFFFFFFFFFFFFF


def normalize_pnml(genie_probs: np.ndarray) -> tuple[np.ndarray, float, float]:
    """q_i = p_i / C with C = sum(p_i); Gamma = log10(C)."""
    p = np.asarray(genie_probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("genie_probs must be a nonempty vector")
    if (p < 0).any() or (p > 1).any():
        raise ValueError("genie probabilities must lie in [0, 1]")
    C = float(p.sum())
    if C <= 0.0:
        raise DegenerateInputError("all-zero probability vector")
    return p / C, C, math.log10(C)


def _fine_tune(erm_params: ModelParams, trainset: Dataset, x: np.ndarray,
               label: int, spec: HypothesisClassSpec) -> ModelParams:
    hyper = spec.fine_tune_hyper.replace(
        seed=job_seed(spec.fine_tune_hyper.seed, label)
    )
    return sgd_train(erm_params, trainset.with_sample(x, label), hyper, spec.freeze)


def pnml_predict(erm_params: ModelParams, trainset: Dataset, x: np.ndarray,
                 spec: HypothesisClassSpec, keep_digests: bool = False) -> PnmlResult:
    """Run one independent fine-tuning per candidate label, all restarting
    from the ERM weights, and normalize the collected probabilities."""
    C_labels = trainset.num_classes
    p = np.empty(C_labels)
    digests = [] if keep_digests else None
    for label in range(C_labels):
        tuned = _fine_tune(erm_params, trainset, x, label, spec)
        p[label] = forward(tuned, x)[label]
        if digests is not None:
            digests.append(tuned.digest())
    q, C, gamma = normalize_pnml(p)
    return PnmlResult(p, q, C, gamma, digests)


def genie_predict(erm_params: ModelParams, trainset: Dataset, x: np.ndarray,
                  y_true: int, spec: HypothesisClassSpec) -> tuple[float, float]:
    """Probability and base-10 log-loss of the reference learner that
    fine-tunes with the true label. Bit-identical to pnml_predict's job
    for that label (same seed derivation)."""
    if not 0 <= y_true < trainset.num_classes:
        raise ValueError(f"label {y_true} out of range")
    tuned = _fine_tune(erm_params, trainset, x, y_true, spec)
    prob = float(forward(tuned, x)[y_true])
    loss = -math.log10(max(prob, 1e-300))
    return prob, loss


def twice_universal(learners: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Combine K predictors: q_TU(y) = max_k q_k(y) / C_TU."""
    if not learners:
        raise ValueError("need at least one learner")
    qs = np.asarray(learners, dtype=np.float64)
    if qs.ndim != 2:
        raise ValueError("learners must share one label set")
    m = qs.max(axis=0)
    C_tu = float(m.sum())
    return m / C_tu, C_tu
