"""Dataset container and loaders: MNIST IDX files, CSV tables, Gaussian blobs."""
from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CSVParseError,
    DataConsistencyError,
    DataFormatError,
    LabelRangeError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _frozen(a):
    if isinstance(a, np.ndarray) and not a.flags.writeable:
        return a
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with observed labels and, optionally, the clean truth.

    ``flip_mask`` is derived from the two label vectors when both are given,
    so it can never disagree with them.  Arrays are copied and made read-only.
    """

    features: np.ndarray
    observed_labels: np.ndarray
    num_classes: int
    clean_labels: np.ndarray | None = None
    flip_mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        y = np.asarray(self.observed_labels)
        if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
            raise ValueError("observed_labels must be a 1-D integer vector")
        n = x.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if y.shape[0] != n:
            raise DataConsistencyError(
                f"{n} feature rows but {y.shape[0]} labels")
        c = int(self.num_classes)
        if c < 1:
            raise ValueError("num_classes must be positive")
        _check_range(y, c, "observed_labels")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "observed_labels", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "num_classes", c)

        if self.clean_labels is None:
            if self.flip_mask is not None:
                raise ValueError("flip_mask requires clean_labels")
            return
        yc = np.asarray(self.clean_labels)
        if yc.shape != (n,) or not np.issubdtype(yc.dtype, np.integer):
            raise DataConsistencyError("clean_labels must match observed_labels")
        _check_range(yc, c, "clean_labels")
        mask = yc != y
        if self.flip_mask is not None and not np.array_equal(
                np.asarray(self.flip_mask, dtype=bool), mask):
            raise DataConsistencyError(
                "flip_mask disagrees with observed vs clean labels")
        object.__setattr__(self, "clean_labels", _frozen(yc.astype(np.int64)))
        object.__setattr__(self, "flip_mask", _frozen(mask))

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            features=self.features[index],
            observed_labels=self.observed_labels[index],
            num_classes=self.num_classes,
            clean_labels=None if self.clean_labels is None else self.clean_labels[index],
        )

    def with_observed(self, labels) -> "Dataset":
        """Copy with new observed labels; the current labels become the clean ones
        unless clean labels are already known."""
        clean = self.observed_labels if self.clean_labels is None else self.clean_labels
        return Dataset(self.features, np.asarray(labels), self.num_classes, clean)


def _check_range(labels, num_classes, name):
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelRangeError(
            f"{name} contains {bad}, outside [0, {num_classes - 1}]")


# ---------------------------------------------------------------------------
# MNIST IDX
# ---------------------------------------------------------------------------

def _read_bytes(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_header(buf, path, magic, ndims):
    size = 4 * (1 + ndims)
    if len(buf) >= 4:
        found = struct.unpack(">I", buf[:4])[0]
        if found != magic:
            raise DataFormatError(
                f"{path}: bad magic number, expected 0x{magic:08x}, got 0x{found:08x}")
    if len(buf) < size:
        raise OSError(f"{path}: truncated IDX header ({len(buf)} bytes)")
    return struct.unpack(f">{ndims}I", buf[4:size]), size


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair (plain or ``.gz``).

    Pixels are divided by 255 and each image is flattened row-major.
    """
    img = _read_bytes(images_path)
    (n, rows, cols), off = _parse_header(img, images_path, IDX_IMAGES_MAGIC, 3)
    need = off + n * rows * cols
    if len(img) < need:
        raise OSError(f"{images_path}: truncated, expected {need} bytes, "
                      f"got {len(img)}")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=off)

    lab = _read_bytes(labels_path)
    (n_labels,), off = _parse_header(lab, labels_path, IDX_LABELS_MAGIC, 1)
    if n_labels != n:
        raise DataConsistencyError(
            f"{n} images in {images_path} but {n_labels} labels in {labels_path}")
    if len(lab) < off + n:
        raise OSError(f"{labels_path}: truncated, expected {off + n} bytes, "
                      f"got {len(lab)}")
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=off).astype(np.int64)

    x = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(x, labels, 10, clean_labels=labels)


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images (N x rows x cols) and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def find_mnist_files(directory, split="train"):
    """Return (images, labels) paths for the ``train`` or ``test`` split.

    Accepts the usual ``train-images-idx3-ubyte`` naming, with or without
    ``.gz``, and the ``train-images.idx3-ubyte`` variant.
    """
    prefix = "train" if split == "train" else "t10k"
    paths = []
    for kind, fmt in (("images", "idx3"), ("labels", "idx1")):
        names = [f"{prefix}-{kind}-{fmt}-ubyte", f"{prefix}-{kind}.{fmt}-ubyte"]
        candidates = [os.path.join(directory, n + ext)
                      for n in names for ext in ("", ".gz")]
        hit = next((c for c in candidates if os.path.exists(c)), None)
        if hit is None:
            raise FileNotFoundError(
                f"no {prefix} {kind} IDX file in {directory}")
        paths.append(hit)
    return tuple(paths)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path, label_column, num_classes, clean_label_column=None) -> Dataset:
    """Read a comma-separated table with a header row.

    Every column other than the label column(s) becomes a feature, in file
    order.  Without ``clean_label_column`` the observed labels are taken as
    clean.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise CSVParseError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        clean_idx = None
        if clean_label_column is not None:
            if clean_label_column not in header:
                raise CSVParseError(
                    f"{path}: no column named {clean_label_column!r}")
            clean_idx = header.index(clean_label_column)
        feat_idx = [i for i in range(len(header)) if i not in (label_idx, clean_idx)]

        rows, labels, clean = [], [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise CSVParseError(
                    f"{path}: row {lineno} has {len(record)} fields, "
                    f"expected {len(header)}", row=lineno)
            try:
                rows.append([float(record[i]) for i in feat_idx])
            except ValueError:
                col = next(header[i] for i in feat_idx if not _is_float(record[i]))
                raise CSVParseError(
                    f"{path}: non-numeric value at row {lineno}, column {col!r}",
                    row=lineno, column=col) from None
            labels.append(_parse_label(record[label_idx], path, lineno, label_column))
            if clean_idx is not None:
                clean.append(_parse_label(record[clean_idx], path, lineno,
                                          clean_label_column))

    if not rows:
        raise CSVParseError(f"{path}: no data rows")
    y = np.array(labels, dtype=np.int64)
    _check_range(y, num_classes, label_column)
    yc = np.array(clean, dtype=np.int64) if clean_idx is not None else y
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    return Dataset(x, y, num_classes, clean_labels=yc)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _parse_label(s, path, lineno, column):
    try:
        v = float(s)
    except ValueError:
        v = float("nan")
    if not np.isfinite(v) or v != int(v):
        raise CSVParseError(
            f"{path}: label at row {lineno}, column {column!r} is not an integer: {s!r}",
            row=lineno, column=column)
    return int(v)


def write_csv(ds: Dataset, path, label_column="label", clean_label_column=None,
              feature_names=None):
    """Write ``ds`` so that :func:`load_csv` reads it back exactly."""
    names = feature_names or [f"f{i}" for i in range(ds.dim)]
    if len(names) != ds.dim:
        raise ValueError("feature_names length must equal the feature dimension")
    header = list(names) + [label_column]
    with_clean = clean_label_column is not None and ds.clean_labels is not None
    if with_clean:
        header.append(clean_label_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(ds.num_samples):
            row = [repr(float(v)) for v in ds.features[n]]
            row.append(str(int(ds.observed_labels[n])))
            if with_clean:
                row.append(str(int(ds.clean_labels[n])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# Synthetic blobs and splitting
# ---------------------------------------------------------------------------

def blob_centers(num_classes, dim, separation, seed):
    """Class centres: signed, scaled basis vectors cycled over the dimensions.

    Class ``c`` uses axis ``c mod dim``; every full pass over the axes flips the
    sign, and every second pass grows the radius by ``separation``, so no two
    classes share a base point.  A seed-derived jitter orthogonal to the axis,
    with norm at most ``0.1 * separation``, is then added.
    """
    rng = np.random.default_rng([seed, 0xB10B])
    centers = np.zeros((num_classes, dim))
    for c in range(num_classes):
        axis, rnd = c % dim, c // dim
        sign = -1.0 if rnd % 2 else 1.0
        centers[c, axis] = sign * separation * (1 + rnd // 2)
        if dim > 1:
            jitter = rng.standard_normal(dim)
            jitter[axis] = 0.0
            jitter *= 0.1 * separation * rng.random() / np.linalg.norm(jitter)
            centers[c] += jitter
    return centers


def make_blobs(num_classes, per_class, dim, separation, seed) -> Dataset:
    """Isotropic unit-variance Gaussian clusters, one per class, rows grouped by class."""
    if num_classes < 2 or per_class < 1 or dim < 1 or not separation > 0:
        raise ValueError("need num_classes >= 2, per_class >= 1, dim >= 1, "
                         "separation > 0")
    centers = blob_centers(num_classes, dim, separation, seed)
    rng = np.random.default_rng([seed, 0xDA7A])
    x = rng.standard_normal((num_classes * per_class, dim))
    y = np.repeat(np.arange(num_classes), per_class)
    x += centers[y]
    return Dataset(x, y, num_classes, clean_labels=y)


def split_indices(n, train_fraction, seed):
    """Index sets of :func:`split`: ``floor(n * fraction)`` first, the rest second."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_first = int(np.floor(n * train_fraction))
    if n_first < 1 or n_first >= n:
        raise ValueError(
            f"fraction {train_fraction} of {n} samples leaves an empty part")
    perm = np.random.default_rng([seed, 0x5B17]).permutation(n)
    return np.sort(perm[:n_first]), np.sort(perm[n_first:])


def split(ds: Dataset, train_fraction, seed):
    """Seeded shuffled partition into two datasets (see :func:`split_indices`)."""
    first, second = split_indices(ds.num_samples, train_fraction, seed)
    return ds.subset(first), ds.subset(second)
