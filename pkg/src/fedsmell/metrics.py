"""Evaluation metrics: accuracy, mean loss, Cohen's kappa, ROC-AUC, bands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import NumericError, StructuralError
from .nn import forward_batch, mean_cross_entropy, unflatten_params


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise StructuralError(f"confusion cell {name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ScoredPrediction:
    """Positive-class probability paired with the true label."""

    score: float
    label: int


@dataclass(frozen=True)
class MetricReport:
    accuracy_pct: float
    mean_loss: float
    kappa: float
    roc_auc: float
    kappa_band: str
    roc_band: str

    def to_json(self) -> dict:
        return {
            "accuracy_pct": self.accuracy_pct,
            "mean_loss": self.mean_loss,
            "kappa": self.kappa,
            "roc_auc": self.roc_auc,
            "kappa_band": self.kappa_band,
            "roc_band": self.roc_band,
        }


def accuracy(cm: ConfusionMatrix) -> float:
    """Correct predictions as a percentage of all predictions."""
    if cm.total < 1:
        raise StructuralError("confusion matrix is empty")
    return (cm.tp + cm.tn) / cm.total * 100.0


def cohen_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement between predictions and labels.

    Observed agreement P_o = (tp+tn)/N; expected agreement P_e from the
    marginals; kappa = (P_o - P_e) / (1 - P_e). The degenerate P_e == 1
    case (all mass in one cell) is defined as 1 when agreement is perfect
    and 0 otherwise.
    """
    n = cm.total
    if n < 1:
        raise StructuralError("confusion matrix is empty")
    p_o = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.fn + cm.tn) * (cm.fp + cm.tn)) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def roc_auc(preds) -> float:
    """Area under the ROC curve via the rank (Mann-Whitney) formulation.

    Equals the probability that a random positive outscores a random
    negative, ties counted half.
    """
    preds = list(preds)
    scores = np.array([p.score for p in preds], dtype=float)
    labels = np.array([p.label for p in preds], dtype=int)
    if not np.all(np.isfinite(scores)):
        raise NumericError("prediction scores contain non-finite values")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise StructuralError("ROC needs at least one sample of each class")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    start = 0
    while start < len(scores):
        stop = start + 1
        while stop < len(scores) and sorted_scores[stop] == sorted_scores[start]:
            stop += 1
        ranks[order[start:stop]] = (start + stop + 1) / 2.0  # 1-based midrank
        start = stop
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def interpret_kappa(k: float) -> str:
    """Agreement band for a kappa value; gap values fall to the lower band."""
    if not -1.0 <= k <= 1.0:
        raise StructuralError(f"kappa must be in [-1, 1], got {k}")
    if k < 0.21:
        return "Poor"
    if k < 0.41:
        return "Fair"
    if k < 0.61:
        return "Moderate"
    if k < 0.81:
        return "Substantial"
    return "Almost perfect"


def interpret_roc(a: float) -> str:
    """Quality band for a ROC-AUC value; values <= 0.5 flag an inverted model."""
    if not 0.0 <= a <= 1.0:
        raise StructuralError(f"ROC area must be in [0, 1], got {a}")
    if a <= 0.5:
        return "Fail (<=0.5)"
    if a <= 0.6:
        return "Fail"
    if a <= 0.7:
        return "Poor"
    if a <= 0.8:
        return "Fair"
    if a <= 0.9:
        return "Good"
    return "Excellent"


def confusion_from_predictions(predicted: np.ndarray, labels: np.ndarray) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=int)
    labels = np.asarray(labels, dtype=int)
    return ConfusionMatrix(
        tp=int(((predicted == 1) & (labels == 1)).sum()),
        tn=int(((predicted == 0) & (labels == 0)).sum()),
        fp=int(((predicted == 1) & (labels == 0)).sum()),
        fn=int(((predicted == 0) & (labels == 1)).sum()),
    )


def evaluate_model(weights, test: Dataset) -> MetricReport:
    """Score a flat weight vector on a test set and assemble the full report.

    Predicted class is the argmax of the output probabilities with ties
    broken toward class 0; the ROC score is the positive-class probability.
    """
    params = unflatten_params(weights)
    probs, _ = forward_batch(test.features, params)
    predicted = (probs[:, 1] > probs[:, 0]).astype(int)
    cm = confusion_from_predictions(predicted, test.labels)
    kappa = cohen_kappa(cm)
    auc = roc_auc(ScoredPrediction(float(s), int(l)) for s, l in zip(probs[:, 1], test.labels))
    return MetricReport(
        accuracy_pct=accuracy(cm),
        mean_loss=mean_cross_entropy(probs, test.labels),
        kappa=kappa,
        roc_auc=auc,
        kappa_band=interpret_kappa(kappa),
        roc_band=interpret_roc(auc),
    )
