"""Independent sample generators shared by the unit and acceptance tests."""
import math

import numpy as np


def sample_mixture(n, lam, mu1, v1, mu2, v2, seed):
    rng = np.random.default_rng(seed)
    first = rng.random(n) < lam
    return np.where(first, rng.normal(mu1, math.sqrt(v1), n), rng.normal(mu2, math.sqrt(v2), n))


def random_stochastic(c, rng):
    t = rng.random((c, c)) + 0.05
    return t / t.sum(axis=1, keepdims=True)


def random_probs(b, c, rng):
    z = rng.standard_normal((b, c))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def simulate_flagged(t_true, n, seed):
    """``n`` flagged samples whose prediction is the clean label and whose
    observed label is drawn from row ``clean`` of ``t_true``."""
    rng = np.random.default_rng(seed)
    c = t_true.shape[0]
    clean = rng.integers(0, c, n)
    observed = np.array([rng.choice(c, p=t_true[k]) for k in clean])
    return clean, observed
