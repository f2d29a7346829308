"""Two-stage training: detect noisy labels, then train with selective correction.

Stage one (:func:`run_pretrain_stage`) trains under a cyclic learning rate,
fits a two-component mixture to the per-sample losses, flags the high-loss
samples and estimates an initial transition matrix from them.  Stage two
(:func:`train_detect_correct`) keeps plain cross-entropy for unflagged samples,
forward-corrects flagged ones through T, and updates T by gradient descent on
every mini-batch.
"""
from __future__ import annotations

import functools
import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import gmm as gmm_mod
from . import nn
from . import noise as noise_mod
from . import transition as tr
from .config import AblationConfig, ExperimentConfig, from_flat
from .data import Dataset
from .errors import DegenerateMixtureError, MissingCleanLabelsError, StageError
from .pretrain import CyclicSchedule, LossHistory, aggregate_losses, epoch_permutation, pretrain

log = logging.getLogger(__name__)

TRAIN_STREAM = 2
TRANSITION_UPDATES = "per-batch"


class _stage:
    """Context manager that re-raises any exception as a :class:`StageError`."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=4)
def _mnist(directory, split):
    return data_mod.load_mnist_idx(*data_mod.find_mnist_files(directory, split))


def _subsample(ds, size, seed):
    if not size or size >= ds.num_samples:
        return ds
    idx = np.sort(np.random.default_rng([seed, 0x5B5]).permutation(ds.num_samples)[:size])
    return ds.subset(idx)


@dataclass(frozen=True, eq=False)
class ExperimentData:
    train: Dataset  # observed labels carry the injected noise
    test: Dataset
    true_transition: np.ndarray | None  # None when the noise process is unknown


def load_data(cfg: ExperimentConfig) -> ExperimentData:
    src = cfg.data.source
    with _stage("data"):
        if src == "mnist":
            m = cfg.mnist
            train = _subsample(_mnist(m.dir, "train"), m.train_subset, m.subset_seed)
            test = _subsample(_mnist(m.dir, "test"), m.test_subset, m.subset_seed)
        elif src == "blobs":
            b = cfg.blobs
            full = data_mod.make_blobs(b.classes, b.per_class, b.dim, b.separation, cfg.seed)
            train, test = data_mod.split(full, cfg.data.train_fraction, cfg.seed)
        elif src == "csv":
            c = cfg.csv
            clean_col = c.clean_label_column or None
            train = data_mod.load_csv(c.train, c.label_column, c.num_classes, clean_col)
            if c.test:
                test = data_mod.load_csv(c.test, c.label_column, c.num_classes, clean_col)
                test = Dataset(test.features, test.clean_labels, test.num_classes,
                               clean_labels=test.clean_labels)
            else:
                train, test = data_mod.split(train, cfg.data.train_fraction, cfg.seed)
        else:
            raise ValueError(f"unknown data source {src!r}")

    true_t = None
    if cfg.noise.rate > 0:
        with _stage("noise"):
            spec = noise_mod.NoiseSpec(cfg.noise.kind, cfg.noise.rate)
            train = noise_mod.inject_noise(train, spec, cfg.seed)
            true_t = noise_mod.ground_truth_matrix(spec, train.num_classes)
    elif train.flip_mask is not None and not train.flip_mask.any():
        true_t = np.eye(train.num_classes)
    return ExperimentData(train, test, true_t)


# ---------------------------------------------------------------------------
# stage one
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PretrainResult:
    model: nn.Model
    flags: np.ndarray
    t_init: np.ndarray
    mixture: gmm_mod.Gmm2
    threshold: gmm_mod.Threshold | None  # None on the degenerate path
    history: LossHistory
    losses: np.ndarray  # aggregated per-sample losses
    predictions: np.ndarray
    notices: list = field(default_factory=list)

    @property
    def degenerate(self):
        return self.threshold is None


def layer_sizes(cfg, ds):
    return (ds.dim,) + tuple(cfg.model.hidden) + (ds.num_classes,)


def run_pretrain_stage(cfg: ExperimentConfig, train: Dataset, model=None,
                       callback=None) -> PretrainResult:
    """Cyclic-LR training, mixture fit, threshold, flags and initial T."""
    p = cfg.pretrain
    notices = []
    with _stage("pretrain"):
        if model is None:
            model = nn.init_model(layer_sizes(cfg, train), cfg.seed)
        schedule = CyclicSchedule(p.lr_max, p.lr_min, p.cycle_epochs, p.shape)
        model, history = pretrain(model, train, schedule, p.epochs, p.batch_size, cfg.seed,
                                  momentum=p.momentum, callback=callback)
        losses = aggregate_losses(history, cfg.burn_in)
    with _stage("gmm"):
        mixture = gmm_mod.fit_em(losses, cfg.gmm.max_iter, cfg.gmm.tol, cfg.seed)
        try:
            threshold = gmm_mod.optimal_threshold(mixture, losses, cfg.gmm.grid_points)
        except DegenerateMixtureError as exc:
            threshold = None
            notices.append(f"degenerate mixture: {exc}")
        flags = (np.zeros(train.num_samples, dtype=np.int64) if threshold is None
                 else gmm_mod.flag_noisy(losses, threshold))
    with _stage("transition-init"):
        predictions = nn.predict(model, train.features)
        c = train.num_classes
        if flags.any():
            t_init = tr.init_from_predictions(predictions, train.observed_labels, flags, c,
                                              cfg.train.blend)
        else:
            t_init = tr.blend_uniform(tr.uniform_matrix(c), cfg.train.blend)
            notices.append("no samples flagged; initial T is uniform")
    model.reset_velocity()
    return PretrainResult(model, flags, t_init, mixture, threshold, history, losses,
                          predictions, notices)


# ---------------------------------------------------------------------------
# stage two
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TrainResult:
    model: nn.Model
    transition: np.ndarray
    epoch_losses: list
    max_row_deviation: float  # worst |row sum - 1| of T seen after any update


def train_detect_correct(cfg: ExperimentConfig, model: nn.Model, train: Dataset, flags,
                         t0, ablation: AblationConfig | None = None) -> TrainResult:
    """Mini-batch training with the selective loss and per-batch T updates.

    ``model`` is copied, never modified.  Ablations: ``baseline_ce`` trains with
    plain cross-entropy and leaves T alone; ``no_selective`` corrects every
    sample; ``no_init`` replaces ``t0`` with the blended uniform matrix.
    """
    ab = cfg.ablation if ablation is None else ablation
    t = cfg.train
    flags = np.asarray(flags).astype(bool)
    n = train.num_samples
    if flags.shape != (n,):
        raise ValueError(f"need {n} flags, got shape {flags.shape}")
    c = train.num_classes
    if ab.no_init:
        t0 = tr.blend_uniform(tr.uniform_matrix(c), t.blend)
    if ab.no_selective:
        flags = np.ones(n, dtype=bool)

    with _stage("train"):
        model = model.copy()
        model.reset_velocity()
        params = tr.params_from_matrix(t0)
        x, y = train.features, train.observed_labels
        curve = []
        worst = 0.0
        for epoch in range(t.epochs):
            order = epoch_permutation(cfg.seed, epoch, n, TRAIN_STREAM)
            total = 0.0
            for s in range(0, n, t.batch_size):
                idx = order[s:s + t.batch_size]
                probs, acts = nn.forward_with_cache(model, x[idx])
                if ab.baseline_ce:
                    total += nn.ce_loss_per_sample(probs, y[idx]).sum()
                    dz = nn.logit_gradient(probs, labels=y[idx])
                else:
                    b = flags[idx]
                    mat = params.matrix
                    total += tr.selective_loss(probs, y[idx], b, mat).sum()
                    dz = tr.selective_logit_grad(probs, y[idx], b, mat)
                    if b.any():
                        grad_a = tr.transition_gradient(probs, y[idx], b, params)
                        tr.update_transition(params, grad_a, t.lr_transition)
                        dev = float(np.max(np.abs(params.matrix.sum(axis=1) - 1.0)))
                        worst = max(worst, dev)
                nn.sgd_step(model, nn.backward_from_logits(model, acts, dz), t.lr, t.momentum)
            curve.append(total / n)
    return TrainResult(model, params.matrix, curve, worst)


def evaluate(model: nn.Model, test: Dataset) -> float:
    """Accuracy of the arg-max predictions against the clean labels."""
    if test.clean_labels is None:
        raise MissingCleanLabelsError("evaluation needs clean labels")
    return float(np.mean(nn.predict(model, test.features) == test.clean_labels))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _matrix_list(t):
    return [[float(v) for v in row] for row in np.asarray(t)]


def build_report(cfg, ed: ExperimentData, pre: PretrainResult, res: TrainResult,
                 accuracy, seconds):
    mix = pre.mixture
    gmm = gmm_mod.mixture_record(mix, pre.threshold, degenerate=pre.degenerate,
                                 n_iter=mix.n_iter, converged=mix.converged,
                                 variance_floored=mix.variance_floored,
                                 burn_in_epochs=cfg.burn_in)
    detection = None
    if ed.train.flip_mask is not None:
        detection = noise_mod.score_detection(ed.train.flip_mask, pre.flags).to_dict()
    t_init_err = t_final_err = None
    if ed.true_transition is not None:
        t_init_err = tr.matrix_error(pre.t_init, ed.true_transition)
        t_final_err = tr.matrix_error(res.transition, ed.true_transition)
    return {
        "accuracy": accuracy,
        "detection": detection,
        "flagged_fraction": float(np.mean(pre.flags)),
        "gmm": gmm,
        "t_init_error": t_init_err,
        "t_final_error": t_final_err,
        "t_init": _matrix_list(pre.t_init),
        "t_final": _matrix_list(res.transition),
        "t_max_row_deviation": res.max_row_deviation,
        "loss_curves": {
            "pretrain": [float(v) for v in pre.history.losses.mean(axis=0)],
            "train": [float(v) for v in res.epoch_losses],
        },
        "notices": list(pre.notices),
        "transition_updates": TRANSITION_UPDATES,
        "config": cfg.to_flat(),
        "seconds": seconds,
    }


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Full pipeline for one configuration; returns the report mapping."""
    return run_arms(cfg, {"main": cfg.ablation})["main"]


def run_arms(cfg: ExperimentConfig, arms: dict, data: ExperimentData | None = None,
             pre: PretrainResult | None = None):
    """Run several stage-two variants on top of a single stage-one run.

    ``arms`` maps a name to an :class:`AblationConfig`.  Each report equals the
    one :func:`run_experiment` produces with that ablation (wall-clock aside),
    since stage one does not depend on the ablation switches.
    """
    cfg.validate()
    start = time.perf_counter()
    ed = load_data(cfg) if data is None else data
    if pre is None:
        pre = run_pretrain_stage(cfg, ed.train)
    stage_one = time.perf_counter() - start
    reports = {}
    for name, ab in arms.items():
        t0 = time.perf_counter()
        arm_cfg = replace(cfg, ablation=ab).validate()
        res = train_detect_correct(arm_cfg, pre.model, ed.train, pre.flags, pre.t_init)
        with _stage("evaluate"):
            acc = evaluate(res.model, ed.test)
        reports[name] = build_report(arm_cfg, ed, pre, res, acc,
                                     stage_one + time.perf_counter() - t0)
        log.info("%s: accuracy %.4f", name, acc)
    return reports


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_report(report: dict, path):
    with open(path, "w") as fh:
        fh.write(report_to_json(report))


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def report_config(report: dict) -> ExperimentConfig:
    return from_flat(report["config"])


def without_timing(report: dict) -> dict:
    out = dict(report)
    out.pop("seconds", None)
    return out
