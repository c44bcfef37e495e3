"""Pixel-level evaluation: confusion matrix, OA, AA, per-class, kappa."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class MetricsReport:
    oa: float
    aa: float
    kappa: float
    per_class: list[float]
    n_test: int

    def to_json(self) -> str:
        return json.dumps({"oa": self.oa, "aa": self.aa, "kappa": self.kappa,
                           "per_class": self.per_class, "n_test": self.n_test},
                          indent=2)


def confusion(pred: np.ndarray, truth: np.ndarray, test_pixels: np.ndarray,
              n_classes: int) -> np.ndarray:
    """Counts over the test pixels only; rows = true class, cols = predicted."""
    if pred.shape != truth.shape:
        raise ContractError("prediction and truth maps differ in shape")
    t = truth.ravel()[test_pixels]
    p = pred.ravel()[test_pixels]
    if np.any(t < 1):
        raise ContractError("test set contains unannotated pixels")
    if t.max(initial=0) > n_classes or p.max(initial=0) > n_classes or np.any(p < 1):
        raise ContractError("class id outside 1..n_classes")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (t - 1, p - 1), 1)
    return m


def overall_accuracy(m: np.ndarray) -> float:
    total = m.sum()
    if total == 0:
        raise ContractError("empty confusion matrix")
    return float(np.trace(m) / total)


def per_class_accuracy(m: np.ndarray) -> list[float]:
    """Diagonal over row sums; classes without test pixels report NaN."""
    rows = m.sum(axis=1)
    out = []
    for k in range(m.shape[0]):
        out.append(float(m[k, k] / rows[k]) if rows[k] > 0 else float("nan"))
    return out


def average_accuracy(m: np.ndarray) -> float:
    """Mean per-class accuracy, skipping classes with no test pixels."""
    vals = [v for v in per_class_accuracy(m) if not np.isnan(v)]
    if not vals:
        raise ContractError("no class has test pixels")
    return float(np.mean(vals))


def kappa(m: np.ndarray) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    In the degenerate single-cell case p_e = 1; kappa is then 1 for perfect
    agreement and 0 otherwise.
    """
    total = m.sum()
    if total == 0:
        raise ContractError("empty confusion matrix")
    p_o = np.trace(m) / total
    p_e = float((m.sum(axis=1) * m.sum(axis=0)).sum()) / (total * total)
    if p_e >= 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def report(m: np.ndarray) -> MetricsReport:
    return MetricsReport(overall_accuracy(m), average_accuracy(m), kappa(m),
                         per_class_accuracy(m), int(m.sum()))
