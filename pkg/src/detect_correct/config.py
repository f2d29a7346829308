"""Experiment configuration and its flat ``section.key = value`` text form.

Example file::

    seed = 3
    data.source = blobs
    noise.kind = symmetric
    noise.rate = 0.4
    train.epochs = 40   # comments run to end of line

Unknown keys are rejected; anything not given keeps its default.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Invalid key, value or combination of settings."""


@dataclass(frozen=True)
class DataConfig:
    source: str = "blobs"  # blobs | mnist | csv
    train_fraction: float = 0.8  # for sources without a separate test set


@dataclass(frozen=True)
class BlobsConfig:
    classes: int = 4
    per_class: int = 250
    dim: int = 10
    separation: float = 3.0


@dataclass(frozen=True)
class MnistConfig:
    dir: str = ""
    train_subset: int = 0  # 0 = all 60,000
    test_subset: int = 0  # 0 = all 10,000
    subset_seed: int = 0


@dataclass(frozen=True)
class CsvConfig:
    train: str = ""
    test: str = ""  # empty: split train by data.train_fraction
    label_column: str = "label"
    clean_label_column: str = ""
    num_classes: int = 0


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "symmetric"
    rate: float = 0.0


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (256, 128)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 50
    batch_size: int = 256
    lr_max: float = 1e-2
    lr_min: float = 1e-3
    cycle_epochs: int = 10
    shape: str = "sawtooth"
    burn_in: typing.Optional[int] = None  # None = one full cycle
    momentum: float = 0.9


@dataclass(frozen=True)
class GmmConfig:
    max_iter: int = 500
    tol: float = 1e-10
    grid_points: int = 10_001


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 256
    lr: float = 1e-2
    momentum: float = 0.9
    lr_transition: float = 1e-4
    blend: float = 0.01


@dataclass(frozen=True)
class AblationConfig:
    no_selective: bool = False  # correct every sample, not just flagged ones
    no_init: bool = False  # start T at the blended uniform matrix
    baseline_ce: bool = False  # plain cross-entropy, no correction


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    blobs: BlobsConfig = field(default_factory=BlobsConfig)
    mnist: MnistConfig = field(default_factory=MnistConfig)
    csv: CsvConfig = field(default_factory=CsvConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    @property
    def burn_in(self):
        p = self.pretrain
        return p.cycle_epochs if p.burn_in is None else p.burn_in

    def validate(self):
        d = self
        if d.data.source not in ("blobs", "mnist", "csv"):
            raise ConfigError(f"data.source must be blobs, mnist or csv, not {d.data.source!r}")
        if d.data.source == "mnist" and not d.mnist.dir:
            raise ConfigError("data.source = mnist requires mnist.dir")
        if d.data.source == "csv" and (not d.csv.train or d.csv.num_classes < 2):
            raise ConfigError("data.source = csv requires csv.train and csv.num_classes >= 2")
        if d.noise.kind not in ("symmetric", "pair"):
            raise ConfigError(f"noise.kind must be symmetric or pair, not {d.noise.kind!r}")
        if not 0.0 <= d.noise.rate < 1.0:
            raise ConfigError("noise.rate must lie in [0, 1)")
        positive = {
            "pretrain.epochs": d.pretrain.epochs, "pretrain.batch_size": d.pretrain.batch_size,
            "pretrain.cycle_epochs": d.pretrain.cycle_epochs, "pretrain.lr_max": d.pretrain.lr_max,
            "pretrain.lr_min": d.pretrain.lr_min, "train.epochs": d.train.epochs,
            "train.batch_size": d.train.batch_size, "train.lr": d.train.lr,
            "train.lr_transition": d.train.lr_transition, "gmm.max_iter": d.gmm.max_iter,
            "gmm.grid_points": d.gmm.grid_points, "blobs.per_class": d.blobs.per_class,
            "blobs.dim": d.blobs.dim, "blobs.separation": d.blobs.separation,
        }
        for k, v in positive.items():
            if not v > 0:
                raise ConfigError(f"{k} must be positive, got {v}")
        if d.pretrain.lr_min > d.pretrain.lr_max:
            raise ConfigError("pretrain.lr_min must not exceed pretrain.lr_max")
        if not 0 <= d.burn_in < d.pretrain.epochs:
            raise ConfigError(
                f"burn-in of {d.burn_in} epochs leaves nothing of pretrain.epochs = "
                f"{d.pretrain.epochs} to aggregate")
        for k, v in (("pretrain.momentum", d.pretrain.momentum),
                     ("train.momentum", d.train.momentum), ("train.blend", d.train.blend)):
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{k} must lie in [0, 1)")
        if d.train.blend <= 0.0:
            raise ConfigError("train.blend must be > 0 so the initial T is strictly positive")
        if not 0.0 < d.data.train_fraction < 1.0:
            raise ConfigError("data.train_fraction must lie in (0, 1)")
        if any(h < 1 for h in d.model.hidden):
            raise ConfigError("model.hidden sizes must be >= 1")
        ab = d.ablation
        if ab.baseline_ce and (ab.no_init or ab.no_selective):
            raise ConfigError("ablation.baseline_ce excludes the other ablation switches")
        return self

    def to_flat(self):
        return to_flat(self)


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    losses: bool = True  # write losses.csv
    figure_bins: int = 50  # 0 disables figure_data.csv in `run`
    plot: bool = False  # also render PNG figures next to the CSV outputs


# ---------------------------------------------------------------------------
# flat key/value form
# ---------------------------------------------------------------------------

def _hints(cls):
    return typing.get_type_hints(cls)


def to_flat(obj, prefix=""):
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(v):
            out.update(to_flat(v, key + "."))
        else:
            out[key] = list(v) if isinstance(v, tuple) else v
    return out


def known_keys(cls=ExperimentConfig, prefix=""):
    keys = []
    hints = _hints(cls)
    for f in dataclasses.fields(cls):
        t = hints[f.name]
        if dataclasses.is_dataclass(t):
            keys += known_keys(t, prefix + f.name + ".")
        else:
            keys.append(prefix + f.name)
    return keys


def _coerce(key, text, typ):
    if not isinstance(text, str):
        # already typed (e.g. from JSON)
        if typ is tuple:
            return tuple(int(v) for v in text)
        if typing.get_origin(typ) is typing.Union:
            return None if text is None else _coerce(key, text, int)
        if typ is float and isinstance(text, int) and not isinstance(text, bool):
            return float(text)
        if isinstance(text, typ):
            return text
        raise ConfigError(f"{key}: expected {typ.__name__}, got {text!r}")
    s = text.strip()
    try:
        if typing.get_origin(typ) is typing.Union:
            return None if s.lower() in ("", "none", "null") else _coerce(key, s, int)
        if typ is bool:
            low = s.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(s)
        if typ is int:
            return int(s)
        if typ is float:
            return float(s)
        if typ is tuple:
            return tuple(int(v) for v in s.replace("[", "").replace("]", "").split(",")
                         if v.strip())
        return s
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {getattr(typ, '__name__', typ)}") \
            from None


def from_flat(values: dict, cls=ExperimentConfig):
    """Build ``cls`` from a ``{"section.key": value}`` mapping of strings or values."""
    allowed = set(known_keys(cls))
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    return _build(cls, values, "")


def _build(cls, values, prefix):
    hints = _hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        t = hints[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(t):
            kwargs[f.name] = _build(t, values, key + ".")
        elif key in values:
            kwargs[f.name] = _coerce(key, values[key], t)
    return cls(**kwargs)


def parse_text(text, source="<config>"):
    """Parse ``key = value`` lines into an ordered dict of strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        if not k:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[k] = v
    return out


def dump_text(cfg) -> str:
    lines = []
    for k, v in to_flat(cfg).items():
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


def load_config(path, overrides=()):
    """Read an experiment file plus ``key=value`` overrides.

    Returns ``(ExperimentConfig, OutputConfig)``; keys under ``output.`` go to
    the latter.
    """
    with open(path, encoding="utf-8") as fh:
        values = parse_text(fh.read(), source=str(path))
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not of the form key=value")
        k, v = ov.split("=", 1)
        values[k.strip()] = v.strip()
    out_values = {k[len("output."):]: v for k, v in values.items() if k.startswith("output.")}
    exp_values = {k: v for k, v in values.items() if not k.startswith("output.")}
    out_unknown = sorted(set(out_values) - set(known_keys(OutputConfig)))
    if out_unknown:
        raise ConfigError("unknown configuration key(s): "
                          + ", ".join("output." + k for k in out_unknown))
    return from_flat(exp_values).validate(), _build(OutputConfig, out_values, "")
