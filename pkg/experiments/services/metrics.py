# experiments/services/metrics.py

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import auc, confusion_matrix

from experiments.services.simulation import CHANGED, ChangeLabels
from fingerprints.services.core import FeatureId, Location
from fingerprints.services.errors import InvalidInputError

LabelsLike = Union[ChangeLabels, Mapping[FeatureId, str]]

# first ROC point: no belief in [0, 1] reaches it
ROC_TOP_THRESHOLD = 1.0 + 1e-9


@dataclass(frozen=True)
class EcdfCurve:
    errors: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.errors:
            raise InvalidInputError("An ECDF needs at least one error distance.")
        object.__setattr__(self, "errors", tuple(sorted(float(e) for e in self.errors)))

    def at(self, radius: float) -> float:
        """Fraction of errors no larger than `radius`."""
        return float(np.searchsorted(self.errors, radius, side="right")) / len(self.errors)

    def points(self) -> Tuple[Tuple[float, float], ...]:
        n = len(self.errors)
        return tuple((e, (i + 1) / n) for i, e in enumerate(self.errors))


@dataclass(frozen=True)
class RocCurve:
    """(threshold, TPR, TNR) in order of increasing false positive rate, plus the area."""
    points: Tuple[Tuple[float, float, float], ...]
    auc: float


@dataclass(frozen=True)
class Confusion:
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def tpr(self) -> float:
        positives = self.tp + self.fn
        return self.tp / positives if positives else math.nan

    @property
    def tnr(self) -> float:
        negatives = self.tn + self.fp
        return self.tn / negatives if negatives else math.nan

    @property
    def fpr(self) -> float:
        return 1.0 - self.tnr


def ecdf(errors: Sequence[float]) -> EcdfCurve:
    return EcdfCurve(tuple(errors))


def ecdf_accuracy(errors: Sequence[float], radius: float) -> float:
    return ecdf(errors).at(radius)


def location_errors(estimates: Sequence[Location], truths: Sequence[Location]) -> np.ndarray:
    estimates = np.asarray(estimates, dtype=float).reshape(-1, 2)
    truths = np.asarray(truths, dtype=float).reshape(-1, 2)
    return np.hypot(estimates[:, 0] - truths[:, 0], estimates[:, 1] - truths[:, 1])


def dispersiveness(locations: Sequence[Location], scale: float = 1.0) -> float:
    """
    Area of the covariance ellipse of the points, π·scale²·√(λ1·λ2) with λ the
    eigenvalues of the unbiased covariance. Rank-deficient sets have zero area.
    """
    points = np.asarray(locations, dtype=float).reshape(-1, 2)
    if points.shape[0] < 2:
        raise InvalidInputError("Dispersiveness needs at least two locations.")
    eigenvalues = np.linalg.eigvalsh(np.cov(points, rowvar=False, ddof=1))
    tolerance = 1e-12 * max(1.0, float(eigenvalues.max()))
    eigenvalues = np.where(eigenvalues < tolerance, 0.0, eigenvalues)
    return float(math.pi * scale * scale * math.sqrt(eigenvalues[0] * eigenvalues[1]))


def bias(locations: Sequence[Location], truth: Location) -> float:
    """Smallest distance from any of the locations to the truth."""
    points = np.asarray(locations, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        raise InvalidInputError("Bias needs at least one location.")
    return float(np.min(np.hypot(points[:, 0] - truth[0], points[:, 1] - truth[1])))


def bandwidth_3db(bias_by_ratio: Mapping[float, float]) -> Tuple[float, float, float]:
    """
    (alpha_L, alpha_M, alpha_R): the ratio with the least bias and the widest
    contiguous ratio range around it where bias stays within √2 of that minimum.
    """
    if len(bias_by_ratio) < 3:
        raise InvalidInputError("The 3 dB bandwidth needs at least three sampling ratios.")
    ratios = sorted(bias_by_ratio)
    values = np.array([bias_by_ratio[r] for r in ratios], dtype=float)
    middle = int(np.argmin(values))
    limit = math.sqrt(2.0) * values[middle] * (1.0 + 1e-12)
    left = middle
    while left > 0 and values[left - 1] <= limit:
        left -= 1
    right = middle
    while right < len(ratios) - 1 and values[right + 1] <= limit:
        right += 1
    return ratios[left], ratios[middle], ratios[right]


def normalize_per_query(values: np.ndarray) -> np.ndarray:
    """Divide each row (one query across the ratio sweep) by its maximum; all-zero rows stay zero."""
    values = np.asarray(values, dtype=float)
    peaks = values.max(axis=1, keepdims=True)
    return np.divide(values, peaks, out=np.zeros_like(values), where=peaks > 0)


def _aligned(beliefs: Mapping[FeatureId, float], labels: LabelsLike) -> Tuple[np.ndarray, np.ndarray]:
    status = labels.status if isinstance(labels, ChangeLabels) else labels
    if set(beliefs) != set(status):
        missing = sorted(set(status) - set(beliefs))
        extra = sorted(set(beliefs) - set(status))
        raise InvalidInputError(
            f"Beliefs and labels cover different features (unlabeled: {extra}, without belief: {missing})."
        )
    keys = sorted(status)
    scores = np.array([beliefs[k] for k in keys], dtype=float)
    truth = np.array([status[k] == CHANGED for k in keys], dtype=int)
    return scores, truth


def _count(scores: np.ndarray, truth: np.ndarray, threshold: float) -> Confusion:
    predicted = (scores >= threshold).astype(int)
    (tn, fp), (fn, tp) = confusion_matrix(truth, predicted, labels=[0, 1])
    return Confusion(tp=int(tp), fn=int(fn), tn=int(tn), fp=int(fp))


def confusion(beliefs: Mapping[FeatureId, float], labels: LabelsLike, threshold: float) -> Confusion:
    """Changed is the positive class; a feature is predicted changed when its belief reaches the threshold."""
    scores, truth = _aligned(beliefs, labels)
    return _count(scores, truth, threshold)


def roc_auc(beliefs: Mapping[FeatureId, float], labels: LabelsLike) -> RocCurve:
    """
    ROC over every distinct belief plus 0 and 1 as thresholds, area by the
    trapezoid rule on TPR against FPR.
    """
    scores, truth = _aligned(beliefs, labels)
    if truth.min() == truth.max():
        raise InvalidInputError("ROC/AUC needs both changed and stable labels.")
    thresholds = np.unique(np.concatenate([scores, [0.0, 1.0]]))[::-1]
    points = [(ROC_TOP_THRESHOLD, 0.0, 1.0)]
    for threshold in thresholds:
        counts = _count(scores, truth, threshold)
        points.append((float(threshold), counts.tpr, counts.tnr))
    fpr = np.array([1.0 - p[2] for p in points])
    tpr = np.array([p[1] for p in points])
    return RocCurve(points=tuple(points), auc=float(auc(fpr, tpr)))
