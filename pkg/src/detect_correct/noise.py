"""Synthetic label noise with known transition matrices, and detection scoring."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset
from .errors import MissingCleanLabelsError


class NoiseKind(str, Enum):
    SYMMETRIC = "symmetric"
    PAIR = "pair"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"noise rate must lie in [0, 1), got {self.rate}")

    def check(self, num_classes):
        if num_classes < 2:
            raise ValueError("label noise needs at least two classes")
        if self.kind is NoiseKind.SYMMETRIC and self.rate >= (num_classes - 1) / num_classes:
            raise ValueError(
                f"symmetric rate {self.rate} must stay below "
                f"{(num_classes - 1) / num_classes:.4f} for C={num_classes}")


def ground_truth_matrix(spec: NoiseSpec, num_classes: int) -> np.ndarray:
    """Row-stochastic T with T[l, k] = P(observed k | true l).

    Symmetric noise spreads ``rate`` evenly over the other classes; pair noise
    sends all of it to class ``(l + 1) mod C``.
    """
    spec.check(num_classes)
    c = num_classes
    if spec.kind is NoiseKind.SYMMETRIC:
        t = np.full((c, c), spec.rate / (c - 1))
    else:
        t = np.zeros((c, c))
        t[np.arange(c), (np.arange(c) + 1) % c] = spec.rate
    np.fill_diagonal(t, 1.0 - spec.rate)
    return t


def inject_noise(ds: Dataset, spec: NoiseSpec, seed: int) -> Dataset:
    """Resample every label from the ground-truth row of its clean label."""
    if ds.clean_labels is None:
        raise MissingCleanLabelsError("inject_noise needs clean labels")
    t = ground_truth_matrix(spec, ds.num_classes)
    clean = ds.clean_labels
    u = np.random.default_rng([seed, 0x0015E]).random(clean.shape[0])
    cdf = np.cumsum(t, axis=1)
    cdf[:, -1] = 1.0
    noisy = (u[:, None] >= cdf[clean]).sum(axis=1)
    return Dataset(ds.features, noisy, ds.num_classes, clean_labels=clean)


@dataclass(frozen=True)
class DetectionScore:
    """Confusion counts of noise flags against the true flip mask.

    The positive class is "label is noisy".  Ratios with an empty denominator
    are reported as 0; balanced accuracy averages only the per-class recalls
    that are defined.
    """

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    balanced_accuracy: float

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("precision", "recall", "f1", "balanced_accuracy", "tp", "fp", "fn", "tn")}


def _ratio(a, b):
    return a / b if b else 0.0


def score_detection(flip_mask, flags) -> DetectionScore:
    truth = np.asarray(flip_mask, dtype=bool)
    pred = np.asarray(flags).astype(bool)
    if truth.shape != pred.shape:
        raise ValueError(f"flip_mask has shape {truth.shape}, flags {pred.shape}")
    tp = int(np.sum(truth & pred))
    fp = int(np.sum(~truth & pred))
    fn = int(np.sum(truth & ~pred))
    tn = int(np.sum(~truth & ~pred))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    recalls = []
    if tp + fn:
        recalls.append(recall)
    if tn + fp:
        recalls.append(tn / (tn + fp))
    return DetectionScore(tp, fp, fn, tn, precision, recall, f1, float(np.mean(recalls)))
