"""Row-stochastic noise transition matrix and the selectively corrected loss.

``T[l, k]`` is the probability that a sample of true class ``l`` is observed
with label ``k``.  During training T is held as unconstrained scores ``A``
with ``T = softmax(A)`` row by row, so gradient steps never leave the set of
row-stochastic matrices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvidenceError
from .nn import PROB_FLOOR, logit_gradient, softmax

ROW_TOL = 1e-9


def check_row_stochastic(t, tol=ROW_TOL):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {t.shape}")
    if np.any(t < -tol) or np.any(t > 1 + tol):
        raise ValueError("transition entries must lie in [0, 1]")
    if np.max(np.abs(t.sum(axis=1) - 1.0)) > tol:
        raise ValueError("transition rows must sum to 1")
    return t


def uniform_matrix(num_classes):
    return np.full((num_classes, num_classes), 1.0 / num_classes)


def blend_uniform(t, blend):
    """``(1 - blend) * T + blend * uniform``: keeps rows stochastic, makes entries > 0."""
    return (1.0 - blend) * t + blend * uniform_matrix(t.shape[0])


def count_matrix(predictions, observed, flags, num_classes):
    """``counts[l, k]`` = flagged samples predicted ``l`` and observed ``k``."""
    pred = np.asarray(predictions)
    obs = np.asarray(observed)
    b = np.asarray(flags).astype(bool)
    if not pred.shape == obs.shape == b.shape or pred.ndim != 1:
        raise ValueError("predictions, observed labels and flags must be equal-length vectors")
    counts = np.zeros((num_classes, num_classes))
    np.add.at(counts, (pred[b], obs[b]), 1.0)
    return counts


def init_from_predictions(predictions, observed, flags, num_classes, blend=0.01):
    """Initial T from the (prediction, observed label) pairs of flagged samples.

    Rows are normalised; rows with no flagged samples become uniform.  The
    result is blended with the uniform matrix by ``blend`` so every entry is
    strictly positive.
    """
    if not 0.0 <= blend < 1.0:
        raise ValueError("blend must lie in [0, 1)")
    counts = count_matrix(predictions, observed, flags, num_classes)
    if counts.sum() == 0:
        raise EmptyEvidenceError("no flagged samples; fall back to the uniform matrix")
    totals = counts.sum(axis=1, keepdims=True)
    t = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / num_classes)
    return blend_uniform(t, blend)


@dataclass
class TransitionParams:
    """Unconstrained scores; :attr:`matrix` is their row-wise softmax."""

    scores: np.ndarray

    @property
    def matrix(self):
        return softmax(self.scores)

    @property
    def num_classes(self):
        return self.scores.shape[0]

    def copy(self):
        return TransitionParams(self.scores.copy())


def params_from_matrix(t) -> TransitionParams:
    t = check_row_stochastic(t)
    if np.any(t <= 0):
        raise ValueError("every entry must be strictly positive; blend with uniform first")
    return TransitionParams(np.log(t))


def corrected_distribution(t, p):
    """Observed-label distribution ``q = p @ T`` implied by class probabilities ``p``."""
    return np.asarray(p, dtype=np.float64) @ np.asarray(t, dtype=np.float64)


def _check_inputs(probs, observed, flags):
    probs = np.asarray(probs, dtype=np.float64)
    observed = np.asarray(observed)
    flags = np.asarray(flags).astype(bool)
    b = probs.shape[0]
    if probs.ndim != 2 or observed.shape != (b,) or flags.shape != (b,):
        raise ValueError("probs must be B x C with B labels and B flags")
    if b and (observed.min() < 0 or observed.max() >= probs.shape[1]):
        raise ValueError("observed labels out of range")
    return probs, observed, flags


def _corrected_terms(probs, observed, t):
    # q[b] = sum_l T[l, y_b] p[b, l]
    return np.einsum("bl,lb->b", probs, t[:, observed])


def selective_loss(probs, observed, flags, t):
    """Per-sample loss: plain cross-entropy where ``flags == 0``, forward-corrected
    cross-entropy ``-log sum_l T[l, y] p_l`` where ``flags == 1``."""
    probs, observed, flags = _check_inputs(probs, observed, flags)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (probs.shape[1],) * 2:
        raise ValueError("T must be C x C")
    rows = np.arange(probs.shape[0])
    picked = probs[rows, observed]
    if flags.any():
        picked = picked.copy()
        picked[flags] = _corrected_terms(probs[flags], observed[flags], t)
    return -np.log(np.maximum(picked, PROB_FLOOR))


def selective_grad_probs(probs, observed, flags, t):
    """dL/dp for every sample of :func:`selective_loss` (one row per sample)."""
    probs, observed, flags = _check_inputs(probs, observed, flags)
    rows = np.arange(probs.shape[0])
    g = np.zeros_like(probs)
    clean = ~flags
    g[rows[clean], observed[clean]] = -1.0 / np.maximum(probs[rows[clean], observed[clean]],
                                                        PROB_FLOOR)
    if flags.any():
        q = np.maximum(_corrected_terms(probs[flags], observed[flags], t), PROB_FLOOR)
        g[flags] = -t[:, observed[flags]].T / q[:, None]
    return g


def selective_logit_grad(probs, observed, flags, t):
    """dL/dz through the softmax; clean rows are exactly ``p - onehot``."""
    probs, observed, flags = _check_inputs(probs, observed, flags)
    dz = logit_gradient(probs, labels=observed)
    if flags.any():
        dz[flags] = logit_gradient(
            probs[flags], grad_probs=selective_grad_probs(
                probs[flags], observed[flags], np.ones(int(flags.sum()), bool), t))
    return dz


def transition_gradient(probs, observed, flags, params: TransitionParams, weights=None):
    """Gradient of ``mean_b(w_b * loss_b)`` with respect to the scores ``A``.

    Only flagged samples depend on T, so clean samples contribute nothing.
    """
    probs, observed, flags = _check_inputs(probs, observed, flags)
    c = params.num_classes
    if probs.shape[1] != c:
        raise ValueError("probs and transition matrix disagree on the class count")
    n = probs.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError("need one weight per sample")
    grad_t = np.zeros((c, c))
    if flags.any() and n:
        t = params.matrix
        p, y, wf = probs[flags], observed[flags], w[flags]
        q = _corrected_terms(p, y, t)
        # dL_b/dT[l, y_b] = -p[b, l] / q_b (zero below the probability floor)
        coef = np.where(q > PROB_FLOOR, -wf / np.maximum(q, PROB_FLOOR), 0.0)
        np.add.at(grad_t.T, y, coef[:, None] * p)
        grad_t /= n
        # through the row softmax: dA = T * (G - rowsum(G * T))
        return t * (grad_t - np.sum(grad_t * t, axis=1, keepdims=True))
    return grad_t


def update_transition(params: TransitionParams, grads, lr) -> TransitionParams:
    """In-place gradient step on the scores; returns ``params``."""
    if not lr > 0:
        raise ValueError("transition learning rate must be positive")
    params.scores -= lr * np.asarray(grads, dtype=np.float64)
    return params


def matrix_error(t_est, t_true) -> float:
    """Half the mean row-wise L1 distance, in [0, 1] for stochastic matrices."""
    a = np.asarray(t_est, dtype=np.float64)
    b = np.asarray(t_true, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum(axis=1).mean() / 2.0)


def write_matrix_csv(t, path):
    """C rows of C comma-separated values, no header, full float precision."""
    t = np.asarray(t, dtype=np.float64)
    with open(path, "w") as fh:
        for row in t:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path):
    with open(path) as fh:
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    t = np.array(rows, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"{path}: transition matrix must be square")
    return t
