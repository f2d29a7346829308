"""Fully-connected softmax classifier with exact backprop and momentum SGD.

Everything runs in float64.  Weight matrices are stored ``(fan_out, fan_in)``
so a layer computes ``h @ W.T + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12


@dataclass
class Model:
    layer_sizes: tuple
    weights: list
    biases: list
    velocity: list | None = field(default=None, repr=False)

    @property
    def num_classes(self):
        return self.layer_sizes[-1]

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def copy(self):
        return Model(
            tuple(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.velocity is None else [v.copy() for v in self.velocity],
        )

    def reset_velocity(self):
        self.velocity = None


@dataclass
class Gradients:
    weights: list
    biases: list

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_model(layer_sizes, seed) -> Model:
    """Gaussian weights with std ``1/sqrt(fan_in)``, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"need at least two layer sizes, all >= 1; got {layer_sizes}")
    rng = np.random.default_rng([seed, 0x1417])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return Model(sizes, weights, biases)


def _check_batch(model, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise ValueError(
            f"batch must be B x {model.layer_sizes[0]}, got shape {x.shape}")
    return x


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(model, x):
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return softmax(h), acts


def forward(model: Model, batch) -> np.ndarray:
    """Class probabilities, one row per sample."""
    return _forward(model, _check_batch(model, batch))[0]


def ce_loss_per_sample(probs, labels) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise ValueError("need one label per probability row")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"labels must lie in [0, {probs.shape[1] - 1}]")
    picked = probs[np.arange(labels.shape[0]), labels]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def _backprop(model, acts, dz):
    gw = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = dz.T @ acts[i]
        gb[i] = dz.sum(axis=0)
        if i:
            dz = (dz @ model.weights[i]) * (acts[i] > 0)
    return Gradients(gw, gb)


def logit_gradient(probs, labels=None, grad_probs=None):
    """Per-sample gradient of the loss with respect to the pre-softmax scores.

    With ``labels`` this is the cross-entropy gradient ``p - onehot``.  With
    ``grad_probs`` (dL/dp, one row per sample) the softmax Jacobian is applied:
    ``p * (g - <g, p>)``.
    """
    if (labels is None) == (grad_probs is None):
        raise ValueError("pass exactly one of labels or grad_probs")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (probs.shape[0],):
            raise ValueError("need one label per sample")
        if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
            raise ValueError(f"labels must lie in [0, {probs.shape[1] - 1}]")
        dz = probs.copy()
        dz[np.arange(labels.shape[0]), labels] -= 1.0
        return dz
    g = np.asarray(grad_probs, dtype=np.float64)
    if g.shape != probs.shape:
        raise ValueError(f"grad_probs must have shape {probs.shape}, got {g.shape}")
    return probs * (g - np.sum(g * probs, axis=1, keepdims=True))


def backward(model: Model, batch, per_sample_weights=None, labels=None,
             grad_probs=None) -> Gradients:
    """Gradient of ``mean_b(w_b * loss_b)`` with respect to every parameter.

    Give ``labels`` for plain cross-entropy, or ``grad_probs`` holding dL_b/dp
    for any other per-sample objective of the softmax output.
    """
    x = _check_batch(model, batch)
    probs, acts = _forward(model, x)
    dz = logit_gradient(probs, labels=labels, grad_probs=grad_probs)
    return backward_from_logits(model, acts, dz, per_sample_weights)


def backward_from_logits(model, acts, dz, per_sample_weights=None):
    n = dz.shape[0]
    if per_sample_weights is not None:
        w = np.asarray(per_sample_weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError("need one weight per sample")
        if np.any(w < 0):
            raise ValueError("per-sample weights must be non-negative")
        dz = dz * w[:, None]
    return _backprop(model, acts, dz / n)


def forward_with_cache(model, batch):
    """Probabilities plus the layer activations :func:`backward_from_logits` needs."""
    return _forward(model, _check_batch(model, batch))


def sgd_step(model: Model, grads: Gradients, learning_rate, momentum=0.9) -> Model:
    """In-place heavy-ball update: ``v = m v + g``, ``theta -= lr v``."""
    if not learning_rate >= 0:
        raise ValueError("learning_rate must be non-negative")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    params = model.parameters()
    if model.velocity is None:
        model.velocity = [np.zeros_like(p) for p in params]
    for p, v, g in zip(params, model.velocity, grads.parameters()):
        v *= momentum
        v += g
        p -= learning_rate * v
    return model


def predict(model: Model, batch, chunk=4096) -> np.ndarray:
    """Arg-max class per row; ties go to the smallest index."""
    x = _check_batch(model, batch)
    out = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        out[s:s + chunk] = np.argmax(_forward(model, x[s:s + chunk])[0], axis=1)
    return out


def predict_proba(model, batch, chunk=4096):
    x = _check_batch(model, batch)
    return np.concatenate([_forward(model, x[s:s + chunk])[0]
                           for s in range(0, x.shape[0], chunk)])


def save_model(model: Model, path):
    """NumPy ``.npz`` archive: ``layer_sizes`` then ``W0, b0, W1, b1, ...``."""
    arrays = {"layer_sizes": np.asarray(model.layer_sizes, dtype=np.int64)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> Model:
    with np.load(path) as z:
        sizes = tuple(int(s) for s in z["layer_sizes"])
        n = len(sizes) - 1
        weights = [z[f"W{i}"].astype(np.float64) for i in range(n)]
        biases = [z[f"b{i}"].astype(np.float64) for i in range(n)]
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
            raise ValueError(f"{path}: layer {i} shapes do not match layer_sizes")
    return Model(sizes, weights, biases)
