"""Loss/accuracy accounting, baseline uncertainty scores, score histograms,
and the two separation metrics between score distributions.

Losses and regrets are reported in base 10; the KL-family metrics use
natural-log units (both stated in output headers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOSS_FLOOR = 1e-300  # q(y) floor before taking the log


def log_loss(q: np.ndarray, y: int) -> float:
    """-log10 q(y), with q(y) floored at 1e-300 so the loss is total."""
    q = np.asarray(q, dtype=np.float64)
    if not 0 <= y < q.size:
        raise ValueError(f"label {y} out of range")
    return -math.log10(max(float(q[y]), LOSS_FLOOR))


def max_prob_score(q: np.ndarray) -> float:
    return float(np.max(q))


def ratio_score(q: np.ndarray) -> float:
    """1 - p2/p1 where p1, p2 are the two largest probabilities."""
    q = np.sort(np.asarray(q, dtype=np.float64))[::-1]
    if q.size < 2:
        return 1.0
    if q[0] <= 0.0:
        return 0.0
    return float(1.0 - q[1] / q[0])


@dataclass
class SampleRecord:
    sample_id: int
    true_label: int
    erm_q: np.ndarray
    pnml_q: np.ndarray
    regret: float
    genie_loss: float
    erm_loss: float = field(init=False)
    pnml_loss: float = field(init=False)
    erm_correct: bool = field(init=False)
    pnml_correct: bool = field(init=False)

    def __post_init__(self):
        self.erm_loss = log_loss(self.erm_q, self.true_label)
        self.pnml_loss = log_loss(self.pnml_q, self.true_label)
        self.erm_correct = int(np.argmax(self.erm_q)) == self.true_label
        self.pnml_correct = int(np.argmax(self.pnml_q)) == self.true_label
        if abs(self.pnml_loss - (self.genie_loss + self.regret)) > 1e-9:
            raise ValueError(
                f"sample {self.sample_id}: pNML loss {self.pnml_loss} != "
                f"genie loss {self.genie_loss} + regret {self.regret}"
            )


@dataclass(frozen=True)
class ScoreHistogram:
    bin_edges: np.ndarray  # ascending, len bins+1
    counts: np.ndarray  # nonnegative ints
    smoothed_pmf: np.ndarray

    def same_bins(self, other: "ScoreHistogram") -> bool:
        return self.bin_edges.shape == other.bin_edges.shape and bool(
            np.array_equal(self.bin_edges, other.bin_edges)
        )


def build_histogram(scores, lo: float, hi: float, bins: int,
                    eps_smooth: float = 1e-10) -> ScoreHistogram:
    """Equal-width histogram; out-of-range scores clamp to the edge bins."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty score list")
    if bins < 2 or not lo < hi:
        raise ValueError("need bins >= 2 and lo < hi")
    edges = np.linspace(lo, hi, bins + 1)
    clamped = np.clip(scores, lo, hi)
    counts, _ = np.histogram(clamped, bins=edges)
    smoothed = counts + eps_smooth
    pmf = smoothed / smoothed.sum()
    return ScoreHistogram(edges, counts.astype(np.int64), pmf)


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(p * np.log(p / q)))


def d_kl(q1: ScoreHistogram, q2: ScoreHistogram) -> float:
    """Symmetric mean KL divergence between the smoothed pmfs (nats)."""
    if not q1.same_bins(q2):
        raise ValueError("histograms have different bin structures")
    p1, p2 = q1.smoothed_pmf, q2.smoothed_pmf
    return 0.5 * (_kl(p1, p2) + _kl(p2, p1))


def _q_lambda(p1: np.ndarray, p2: np.ndarray, lam: float) -> np.ndarray:
    # geometric interpolation in the log domain, renormalized
    logq = lam * np.log(p1) + (1.0 - lam) * np.log(p2)
    logq -= logq.max()
    q = np.exp(logq)
    return q / q.sum()


def d_lrt(q1: ScoreHistogram, q2: ScoreHistogram,
          tol: float = 1e-10) -> tuple[float, float]:
    """Chernoff-point distance: find lambda* with
    D(q_lambda||q1) = D(q_lambda||q2) by bisection and return
    (lambda*, common divergence), in nats."""
    if not q1.same_bins(q2):
        raise ValueError("histograms have different bin structures")
    p1, p2 = q1.smoothed_pmf, q2.smoothed_pmf
    if np.array_equal(p1, p2):
        return 0.5, 0.0

    def balance(lam: float) -> float:
        q = _q_lambda(p1, p2, lam)
        return _kl(q, p1) - _kl(q, p2)

    # balance(0) = D(p2||p1) >= 0 >= -D(p1||p2) = balance(1)
    lo, hi = 0.0, 1.0
    lam = 0.5
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        f = balance(lam)
        if abs(f) < tol:
            break
        if f > 0:
            lo = lam
        else:
            hi = lam
    return lam, _kl(_q_lambda(p1, p2, lam), p1)


def threshold_report(records: list[SampleRecord], thresholds) -> list[dict]:
    """Per regret threshold: fraction retained and accuracy / mean loss of
    ERM and pNML over the retained samples. Empty buckets are flagged."""
    if not records:
        raise ValueError("no records")
    n = len(records)
    rows = []
    for t in thresholds:
        kept = [r for r in records if r.regret <= t]
        row = {"threshold": float(t), "retained_fraction": len(kept) / n,
               "num_retained": len(kept), "empty": not kept}
        if kept:
            row.update(
                erm_accuracy=sum(r.erm_correct for r in kept) / len(kept),
                pnml_accuracy=sum(r.pnml_correct for r in kept) / len(kept),
                erm_mean_loss=sum(r.erm_loss for r in kept) / len(kept),
                pnml_mean_loss=sum(r.pnml_loss for r in kept) / len(kept),
            )
        else:
            row.update(erm_accuracy=None, pnml_accuracy=None,
                       erm_mean_loss=None, pnml_mean_loss=None)
        rows.append(row)
    return rows


def summarize(records: list[SampleRecord]) -> dict:
    """Accuracy, mean and std of loss for ERM / pNML / genie, mean regret."""
    if not records:
        raise ValueError("no records")
    erm_losses = np.array([r.erm_loss for r in records])
    pnml_losses = np.array([r.pnml_loss for r in records])
    genie_losses = np.array([r.genie_loss for r in records])
    regrets = np.array([r.regret for r in records])
    return {
        "num_samples": len(records),
        "erm_accuracy": float(np.mean([r.erm_correct for r in records])),
        "pnml_accuracy": float(np.mean([r.pnml_correct for r in records])),
        "erm_loss_mean": float(erm_losses.mean()),
        "erm_loss_std": float(erm_losses.std()),
        "pnml_loss_mean": float(pnml_losses.mean()),
        "pnml_loss_std": float(pnml_losses.std()),
        "genie_loss_mean": float(genie_losses.mean()),
        "genie_loss_std": float(genie_losses.std()),
        "regret_mean": float(regrets.mean()),
        "loss_units": "log10",
    }
