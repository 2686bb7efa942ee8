"""Predictive normalized maximum likelihood for MLP classifiers."""

from .attack import AttackSpec, fgsm
from .data import (Dataset, gaussian_noise_inputs, load_checkpoint, load_idx,
                   randomize_labels, save_checkpoint, synth_blobs)
from .engine import (HypothesisClassSpec, PnmlResult, genie_predict,
                     normalize_pnml, pnml_predict, twice_universal)
from .metrics import (ScoreHistogram, build_histogram, d_kl, d_lrt, log_loss,
                      max_prob_score, ratio_score, threshold_report)
from .nn import (GradBundle, Layer, ModelParams, forward, input_gradient,
                 loss_and_grad)
from .oracle import (FiniteHypothesisClass, exact_genie, exact_pnml,
                     exact_regret)
from .training import FreezeSpec, HyperParams, erm_fit, sgd_train

__all__ = [
    "AttackSpec", "fgsm",
    "Dataset", "gaussian_noise_inputs", "load_checkpoint", "load_idx",
    "randomize_labels", "save_checkpoint", "synth_blobs",
    "HypothesisClassSpec", "PnmlResult", "genie_predict", "normalize_pnml",
    "pnml_predict", "twice_universal",
    "ScoreHistogram", "build_histogram", "d_kl", "d_lrt", "log_loss",
    "max_prob_score", "ratio_score", "threshold_report",
    "GradBundle", "Layer", "ModelParams", "forward", "input_gradient",
    "loss_and_grad",
    "FiniteHypothesisClass", "exact_genie", "exact_pnml", "exact_regret",
    "FreezeSpec", "HyperParams", "erm_fit", "sgd_train",
]
