"""Two-component 1-D Gaussian mixture over per-sample losses, and the noise threshold.

Component 1 is the clean (low-loss) population and component 2 the noisy one;
fits are always returned with ``mu1 <= mu2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateInputError, DegenerateMixtureError

VAR_FLOOR = 1e-6
LAMBDA_CLAMP = (1e-4, 1.0 - 1e-4)
GRID_POINTS = 10_001
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Gmm2:
    lam: float
    mu1: float
    sigma1_sq: float
    mu2: float
    sigma2_sq: float
    # fit diagnostics; not part of the mixture itself
    log_likelihoods: tuple = field(default=(), compare=False, repr=False)
    n_iter: int = field(default=0, compare=False)
    converged: bool = field(default=True, compare=False)
    variance_floored: bool = field(default=False, compare=False)

    @property
    def sigma1(self):
        return math.sqrt(self.sigma1_sq)

    @property
    def sigma2(self):
        return math.sqrt(self.sigma2_sq)

    def canonical(self) -> "Gmm2":
        """Swap the components if needed so that ``mu1 <= mu2``."""
        if self.mu1 <= self.mu2:
            return self
        return replace(self, lam=1.0 - self.lam, mu1=self.mu2, sigma1_sq=self.sigma2_sq,
                       mu2=self.mu1, sigma2_sq=self.sigma1_sq)

    def is_degenerate(self) -> bool:
        """Components too close to separate: ``mu2 - mu1 < 0.5 * max(sigma)``."""
        return (self.mu2 - self.mu1) < 0.5 * math.sqrt(max(self.sigma1_sq, self.sigma2_sq))

    def to_dict(self):
        return {"lambda": self.lam, "mu1": self.mu1, "sigma1_sq": self.sigma1_sq,
                "mu2": self.mu2, "sigma2_sq": self.sigma2_sq}


def _log_normal(x, mu, var):
    return -0.5 * (x - mu) ** 2 / var - 0.5 * math.log(var) - _LOG_SQRT_2PI


def _e_step(x, lam, mu1, v1, mu2, v2):
    a = math.log(lam) + _log_normal(x, mu1, v1)
    b = math.log1p(-lam) + _log_normal(x, mu2, v2)
    m = np.maximum(a, b)
    log_norm = m + np.log(np.exp(a - m) + np.exp(b - m))
    return np.exp(a - log_norm), float(log_norm.mean())


def fit_em(losses, max_iter=500, tol=1e-10, seed=0) -> Gmm2:
    """Maximum-likelihood two-component mixture by EM.

    Initialised by splitting the sorted losses at the median and taking each
    half's moments, so the fit is deterministic; ``seed`` is accepted for
    interface compatibility and unused.  Iterates until the mean per-sample
    log-likelihood improves by less than ``tol``.  Variances are floored at
    ``VAR_FLOOR`` and the weight clamped to ``LAMBDA_CLAMP``.
    """
    del seed
    x = np.asarray(losses, dtype=np.float64).ravel()
    if x.size < 4:
        raise ValueError("need at least 4 losses to fit a two-component mixture")
    if not np.all(np.isfinite(x)):
        raise ValueError("losses must be finite")
    if np.all(x == x[0]):
        raise DegenerateInputError("all losses are identical; nothing to separate")

    xs = np.sort(x)
    lo, hi = xs[: x.size // 2], xs[x.size // 2:]
    lam = lo.size / x.size
    mu1, mu2 = lo.mean(), hi.mean()
    floored = False
    v1, v2 = lo.var(), hi.var()
    if v1 < VAR_FLOOR or v2 < VAR_FLOOR:
        floored = True
        v1, v2 = max(v1, VAR_FLOOR), max(v2, VAR_FLOOR)

    r1, ll = _e_step(x, lam, mu1, v1, mu2, v2)
    lls = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        n1 = float(r1.sum())
        n2 = x.size - n1
        lam = min(max(n1 / x.size, LAMBDA_CLAMP[0]), LAMBDA_CLAMP[1])
        if n1 > 0:
            mu1 = float(r1 @ x) / n1
            v1 = float(r1 @ (x - mu1) ** 2) / n1
        if n2 > 0:
            r2 = 1.0 - r1
            mu2 = float(r2 @ x) / n2
            v2 = float(r2 @ (x - mu2) ** 2) / n2
        if v1 < VAR_FLOOR or v2 < VAR_FLOOR:
            floored = True
            v1, v2 = max(v1, VAR_FLOOR), max(v2, VAR_FLOOR)
        r1, ll = _e_step(x, lam, mu1, v1, mu2, v2)
        gain = ll - lls[-1]
        lls.append(ll)
        if gain < tol:
            converged = True
            break

    return Gmm2(lam, mu1, v1, mu2, v2, log_likelihoods=tuple(lls), n_iter=it,
                converged=converged, variance_floored=floored).canonical()


def clean_pdf(g: Gmm2, x):
    """Weighted clean density ``lam * N(x; mu1, sigma1^2)``."""
    return g.lam * np.exp(_log_normal(np.asarray(x, dtype=np.float64), g.mu1, g.sigma1_sq))


def noisy_pdf(g: Gmm2, x):
    """Weighted noisy density ``(1 - lam) * N(x; mu2, sigma2^2)``."""
    return (1.0 - g.lam) * np.exp(_log_normal(np.asarray(x, dtype=np.float64),
                                              g.mu2, g.sigma2_sq))


def sensitivity(g: Gmm2, t):
    """Fraction of the clean component at or below ``t``."""
    return ndtr((np.asarray(t, dtype=np.float64) - g.mu1) / g.sigma1)


def specificity(g: Gmm2, t):
    """Fraction of the noisy component above ``t``."""
    return ndtr((g.mu2 - np.asarray(t, dtype=np.float64)) / g.sigma2)


def confusion_integrals(g: Gmm2, t):
    """Mixture mass in each cell when ``loss <= t`` is called clean.

    Cells follow the clean-as-positive convention: ``tp`` is clean mass below
    ``t``, ``fp`` noisy mass below it, and so on; the four sum to 1.
    """
    sen, spc = sensitivity(g, t), specificity(g, t)
    return {"tp": g.lam * sen, "fn": g.lam * (1.0 - sen),
            "fp": (1.0 - g.lam) * (1.0 - spc), "tn": (1.0 - g.lam) * spc}


def balanced_accuracy(g: Gmm2, t):
    return 0.5 * (sensitivity(g, t) + specificity(g, t))


@dataclass(frozen=True)
class Threshold:
    t: float
    balanced_accuracy_at_t: float


def threshold_grid(losses, points=GRID_POINTS):
    x = np.asarray(losses, dtype=np.float64)
    return np.linspace(x.min(), x.max(), points)


def optimal_threshold(g: Gmm2, losses, points=GRID_POINTS) -> Threshold:
    """Grid point in ``[min loss, max loss]`` maximising ``(SEN + SPC) / 2``.

    Ties resolve to the smallest ``t``.  Raises :class:`DegenerateMixtureError`
    when the components are not separated (see :meth:`Gmm2.is_degenerate`).
    """
    if g.is_degenerate():
        raise DegenerateMixtureError(
            f"mixture components overlap (mu1={g.mu1:.4g}, mu2={g.mu2:.4g}, "
            f"max sigma={math.sqrt(max(g.sigma1_sq, g.sigma2_sq)):.4g}); "
            "treat every sample as clean")
    grid = threshold_grid(losses, points)
    ba = balanced_accuracy(g, grid)
    k = int(np.argmax(ba))
    return Threshold(float(grid[k]), float(ba[k]))


def flag_noisy(losses, thr: Threshold) -> np.ndarray:
    """``b[n] = 1`` where the loss strictly exceeds the threshold."""
    x = np.asarray(losses, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("losses must be finite")
    return (x > thr.t).astype(np.int64)


def mixture_record(g: Gmm2, thr: Threshold | None, **extra):
    rec = g.to_dict()
    rec["t"] = None if thr is None else thr.t
    rec["balanced_accuracy"] = None if thr is None else thr.balanced_accuracy_at_t
    rec.update(extra)
    return rec


def write_mixture_json(path, g: Gmm2, thr: Threshold | None, **extra):
    with open(path, "w") as fh:
        json.dump(mixture_record(g, thr, **extra), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_mixture_json(path):
    """Return ``(Gmm2, Threshold or None, record dict)``."""
    with open(path) as fh:
        rec = json.load(fh)
    g = Gmm2(rec["lambda"], rec["mu1"], rec["sigma1_sq"], rec["mu2"], rec["sigma2_sq"])
    thr = None if rec.get("t") is None else Threshold(rec["t"], rec["balanced_accuracy"])
    return g, thr, rec
