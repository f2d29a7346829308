"""Label-noise robust training: detect noisy samples from their loss
trajectories, then correct only those samples through a learned transition
matrix."""

from .config import ExperimentConfig
from .data import Dataset, load_csv, load_mnist_idx, make_blobs, split
from .gmm import Gmm2, Threshold, fit_em, flag_noisy, optimal_threshold
from .noise import NoiseSpec, ground_truth_matrix, inject_noise, score_detection
from .pipeline import evaluate, run_experiment, run_pretrain_stage, train_detect_correct
from .stats import welch_t_test

__version__ = "0.1.0"

__all__ = [
    "Dataset", "ExperimentConfig", "Gmm2", "NoiseSpec", "Threshold",
    "evaluate", "fit_em", "flag_noisy", "ground_truth_matrix", "inject_noise",
    "load_csv", "load_mnist_idx", "make_blobs", "optimal_threshold",
    "run_experiment", "run_pretrain_stage", "score_detection", "split",
    "train_detect_correct", "welch_t_test",
]
