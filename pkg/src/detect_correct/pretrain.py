"""Stage one: cyclic-learning-rate training that records every sample's loss per epoch."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset

EVAL_CHUNK = 4096
PRETRAIN_STREAM = 1


@dataclass(frozen=True)
class CyclicSchedule:
    """Per-epoch learning rate that cycles between ``lr_max`` and ``lr_min``.

    ``shape="sawtooth"`` descends linearly from ``lr_max`` (first epoch of a
    cycle) to ``lr_min`` (last epoch) and then resets.  ``shape="triangular"``
    rises from ``lr_min`` to ``lr_max`` over the first half of the cycle and
    falls back over the second half.
    """

    lr_max: float = 1e-2
    lr_min: float = 1e-3
    cycle_epochs: int = 10
    shape: str = "sawtooth"

    def __post_init__(self):
        # lr_max == lr_min (including 0) is allowed: it gives a constant rate.
        if not 0.0 <= self.lr_min <= self.lr_max:
            raise ValueError("need 0 <= lr_min <= lr_max")
        if self.cycle_epochs < 1:
            raise ValueError("cycle_epochs must be positive")
        if self.shape not in ("sawtooth", "triangular"):
            raise ValueError(f"unknown schedule shape {self.shape!r}")


def lr_at(schedule: CyclicSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    k = schedule.cycle_epochs
    if k == 1:
        return schedule.lr_max
    pos = epoch % k
    span = schedule.lr_max - schedule.lr_min
    if schedule.shape == "sawtooth":
        lr = schedule.lr_max - (pos / (k - 1)) * span
    else:
        half = (k - 1) / 2.0
        lr = schedule.lr_min + (1.0 - abs(pos - half) / half) * span
    # rounding can step just outside the range
    return min(max(lr, schedule.lr_min), schedule.lr_max)


@dataclass(frozen=True, eq=False)
class LossHistory:
    """``losses[n, e]`` is sample ``n``'s cross-entropy after epoch ``e``."""

    losses: np.ndarray

    def __post_init__(self):
        a = np.array(self.losses, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("loss history must be a samples x epochs matrix")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("loss history entries must be finite and >= 0")
        a.setflags(write=False)
        object.__setattr__(self, "losses", a)

    @property
    def num_samples(self):
        return self.losses.shape[0]

    @property
    def num_epochs(self):
        return self.losses.shape[1]


def epoch_permutation(seed, epoch, n, stream=0):
    """Batch order for one epoch; a pure function of (seed, stream, epoch)."""
    return np.random.default_rng([seed, stream, epoch]).permutation(n)


def per_sample_losses(model, ds: Dataset, labels=None):
    """Evaluation pass (no updates): cross-entropy of every sample."""
    y = ds.observed_labels if labels is None else labels
    out = np.empty(ds.num_samples)
    for s in range(0, ds.num_samples, EVAL_CHUNK):
        p = nn.forward(model, ds.features[s:s + EVAL_CHUNK])
        out[s:s + EVAL_CHUNK] = nn.ce_loss_per_sample(p, y[s:s + EVAL_CHUNK])
    return out


def pretrain(model: nn.Model, ds: Dataset, schedule: CyclicSchedule, epochs: int,
             batch_size: int, seed: int, momentum: float = 0.9, callback=None):
    """Train on the observed labels, recording every sample's loss after each epoch.

    ``model`` is updated in place and returned with the :class:`LossHistory`.
    ``callback(epoch, model)``, if given, runs after each epoch's evaluation
    pass.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = ds.num_samples
    x, y = ds.features, ds.observed_labels
    history = np.empty((n, epochs))
    for epoch in range(epochs):
        lr = lr_at(schedule, epoch)
        order = epoch_permutation(seed, epoch, n, PRETRAIN_STREAM)
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            probs, acts = nn.forward_with_cache(model, x[idx])
            dz = nn.logit_gradient(probs, labels=y[idx])
            nn.sgd_step(model, nn.backward_from_logits(model, acts, dz), lr, momentum)
        history[:, epoch] = per_sample_losses(model, ds)
        if callback is not None:
            callback(epoch, model)
    return model, LossHistory(history)


def aggregate_losses(history: LossHistory, burn_in_epochs: int) -> np.ndarray:
    """Per-sample mean loss over the epochs after the burn-in."""
    if not 0 <= burn_in_epochs < history.num_epochs:
        raise ValueError(
            f"burn_in_epochs={burn_in_epochs} must be in [0, {history.num_epochs})")
    return history.losses[:, burn_in_epochs:].mean(axis=1)


def write_history_csv(history: LossHistory, path):
    """Long format: ``sample_index,epoch,loss``, epochs fastest within a sample."""
    n, e = history.losses.shape
    with open(path, "w", newline="") as fh:
        fh.write("sample_index,epoch,loss\n")
        for i in range(n):
            row = history.losses[i].tolist()
            fh.write("".join(f"{i},{j},{row[j]!r}\n" for j in range(e)))


def read_history_csv(path) -> LossHistory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["sample_index", "epoch", "loss"]:
            raise ValueError(f"{path}: expected header sample_index,epoch,loss")
        rows = [(int(a), int(b), float(c)) for a, b, c in reader]
    if not rows:
        raise ValueError(f"{path}: no loss records")
    idx = np.array([r[0] for r in rows])
    ep = np.array([r[1] for r in rows])
    n, e = idx.max() + 1, ep.max() + 1
    if len(rows) != n * e:
        raise ValueError(f"{path}: {len(rows)} records do not form a {n} x {e} grid")
    out = np.full((n, e), np.nan)
    out[idx, ep] = [r[2] for r in rows]
    if np.isnan(out).any():
        raise ValueError(f"{path}: duplicate or missing (sample, epoch) records")
    return LossHistory(out)
