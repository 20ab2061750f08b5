"""Run and sweep configuration: flat ``key = value`` files and presets.

Every :class:`RunConfig` field has a hyphenated key (``lr-forward``,
``batch-size``, ...).  Lines starting with ``#`` and text after an inline
``#`` are comments.  Unknown keys are errors.  Hyperparameters left unset
fall back to the best values known for the dataset family and algorithm.
"""

import dataclasses
import os
from dataclasses import dataclass, field

from ..algorithms import Hyperparams, Kind
from ..errors import ConfigError, Misconfiguration
from ..network import Activation

DATA_ENV = "TPROP_DATA_DIR"

DATASETS = ("mnist", "mnist-5k", "fmnist", "cifar10", "cifar100", "blobs", "random-cifar10")

# dataset name -> family used for presets and default hyperparameters
FAMILY = {
    "mnist": "mnist",
    "mnist-5k": "mnist",
    "fmnist": "fmnist",
    "cifar10": "cifar10",
    "cifar100": "cifar100",
    "blobs": "mnist",
    "random-cifar10": "cifar10",
}

# preset -> (depth, hidden width)
PRESETS = {
    "mnist-6x256": (6, 256),
    "mnist-6x164": (6, 164),
    "cifar-4x1024": (4, 1024),
    "cifar-4x632": (4, 632),
    "cifar-4x631": (4, 631),
}

# (family, algorithm) -> (lr_forward, beta, lr_feedback)
BEST = {
    ("mnist", "dtp"): (4.0, 0.04, 0.002),
    ("mnist", "drl"): (4.0, 0.04, 0.0002),
    ("mnist", "ldrl"): (4.0, 0.04, 0.0002),
    ("mnist", "fwdtp"): (0.1, 0.04, 0.0),
    ("fmnist", "dtp"): (1.0, 0.04, 0.002),
    ("fmnist", "drl"): (4.0, 0.008, 0.002),
    ("fmnist", "ldrl"): (2.0, 0.02, 0.001),
    ("fmnist", "fwdtp"): (1.0, 0.004, 0.0),
    ("cifar10", "dtp"): (4.0, 0.002, 0.004),
    ("cifar10", "drl"): (2.0, 0.008, 0.004),
    ("cifar10", "ldrl"): (0.2, 0.04, 0.0004),
    ("cifar10", "fwdtp"): (0.02, 0.01, 0.0),
    ("cifar100", "dtp"): (1.0, 0.01, 0.008),
    ("cifar100", "drl"): (0.8, 0.02, 0.002),
    ("cifar100", "ldrl"): (2.0, 0.008, 0.0001),
    ("cifar100", "fwdtp"): (0.2, 0.01, 0.0),
}
BASELINE_LR = 0.1  # BP and FA

FAST_EPOCHS = 10
FAST_SUBSET = 10000

METRICS_VERSION = 1


def default_hyperparams(family, algorithm):
    """(lr_forward, beta, lr_feedback) defaults; TP borrows DTP's."""
    algorithm = Kind(algorithm).value
    if algorithm in ("bp", "fa"):
        return BASELINE_LR, 0.04, 0.0
    return BEST[(family, "dtp" if algorithm == "tp" else algorithm)]


@dataclass
class RunConfig:
    algorithm: str = "fwdtp"
    dataset: str = "mnist"
    data_dir: str | None = None
    preset: str | None = None
    profile: str = "default"
    depth: int = 6
    width: int = 256
    activation: str = "tanh"
    batchnorm: bool | None = None  # None: on for FW-DTP only
    lr_forward: float | None = None
    lr_feedback: float | None = None
    beta: float | None = None
    nb: int = 5
    sigma: float = 0.01
    tikhonov: float = 0.0
    batch_size: int = 256
    epochs: int | None = None
    seed: int = 0
    subset: int = 0  # cap on training samples, 0 for all
    val_size: int | None = None
    diagnostics: bool = False
    diag_layers: list = field(default_factory=list)
    diag_samples: int = 256
    blob_classes: int = 4
    blob_per_class: int = 200
    blob_dim: int = 16
    blob_separation: float = 8.0
    out: str | None = None

    @property
    def kind(self):
        return Kind(self.algorithm)

    @property
    def family(self):
        return FAMILY[self.dataset]

    def resolve(self):
        """A copy with presets, profile and defaults applied and checked."""
        cfg = dataclasses.replace(self, diag_layers=list(self.diag_layers))
        if cfg.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {cfg.dataset!r}; choose from {', '.join(DATASETS)}")
        try:
            kind = Kind(cfg.algorithm)
        except ValueError:
            raise ConfigError(f"unknown algorithm {cfg.algorithm!r}") from None
        if cfg.preset is not None:
            if cfg.preset not in PRESETS:
                raise ConfigError(f"unknown preset {cfg.preset!r}; choose from {', '.join(PRESETS)}")
            cfg.depth, cfg.width = PRESETS[cfg.preset]
        if cfg.profile not in ("default", "fast"):
            raise ConfigError(f"unknown profile {cfg.profile!r}")
        if cfg.epochs is None:
            cfg.epochs = FAST_EPOCHS if cfg.profile == "fast" else 100
        if cfg.profile == "fast" and cfg.subset == 0:
            cfg.subset = FAST_SUBSET
        lr_f, beta, lr_b = default_hyperparams(cfg.family, kind)
        cfg.lr_forward = lr_f if cfg.lr_forward is None else cfg.lr_forward
        cfg.beta = beta if cfg.beta is None else cfg.beta
        cfg.lr_feedback = lr_b if cfg.lr_feedback is None else cfg.lr_feedback
        if cfg.batchnorm is None:
            cfg.batchnorm = kind is Kind.FWDTP
        if cfg.val_size is None:
            cfg.val_size = 5000 if cfg.dataset in ("mnist", "fmnist", "cifar10", "cifar100") else 0
        if cfg.activation != "tanh":
            raise ConfigError(f"unsupported activation {cfg.activation!r}; only tanh is available")
        if cfg.depth < 1 or cfg.width < 1:
            raise ConfigError("depth and width must be positive")
        if cfg.subset < 0 or cfg.val_size < 0 or cfg.diag_samples < 1:
            raise ConfigError("subset, val-size and diag-samples must be non-negative")
        if not cfg.diag_layers:
            cfg.diag_layers = list(range(1, cfg.depth + 1))
        bad = [l for l in cfg.diag_layers if not 1 <= l <= cfg.depth]
        if bad:
            raise ConfigError(f"diagnostic layers {bad} outside 1..{cfg.depth}")
        try:
            cfg.hyperparams().validate(cfg.batchnorm)
        except Misconfiguration as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    @property
    def hidden_activation(self):
        return Activation.TANH_BN if self.batchnorm else Activation.TANH

    def hyperparams(self):
        return Hyperparams(
            lr_forward=self.lr_forward,
            lr_feedback=self.lr_feedback,
            beta=self.beta,
            nb=self.nb,
            sigma=self.sigma,
            tikhonov=self.tikhonov,
            batch_size=self.batch_size,
            epochs=self.epochs,
        )

    def data_path(self):
        if self.data_dir:
            return self.data_dir
        root = os.environ.get(DATA_ENV)
        if root is None:
            raise ConfigError(f"no data directory: pass --data-dir or set {DATA_ENV}")
        return os.path.join(root, self.dataset)


# key -> field name; "lambda" is a Python keyword
KEYS = {f.name.replace("_", "-"): f.name for f in dataclasses.fields(RunConfig)}
KEYS["lambda"] = KEYS.pop("tikhonov")
FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def key_of(name):
    return "lambda" if name == "tikhonov" else name.replace("_", "-")


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    if low == "auto":
        return None
    raise ValueError(f"not a boolean: {text!r}")


def convert(name, text):
    """Parse the string ``text`` for field ``name``."""
    kind = FIELD_TYPES[name]
    text = text.strip()
    try:
        if name == "diag_layers":
            return [int(t) for t in text.replace(",", " ").split()]
        if "bool" in str(kind):
            return _parse_bool(text)
        if text.lower() in ("", "none", "auto") and "None" in str(kind):
            return None
        if "int" in str(kind):
            return int(text)
        if "float" in str(kind):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key_of(name)}: {exc}") from None


def parse_config_text(text, source="<config>"):
    """``{field name: raw string}`` from ``key = value`` lines."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[KEYS[key]] = value
    return values


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, path)


def build_config(file_values=None, overrides=None):
    """RunConfig from raw file values, then typed overrides on top."""
    kwargs = {name: convert(name, raw) for name, raw in (file_values or {}).items()}
    for name, value in (overrides or {}).items():
        if name not in FIELD_TYPES:
            raise ConfigError(f"unknown key {key_of(name)!r}")
        kwargs[name] = value
    return RunConfig(**kwargs)


def format_config(cfg):
    """The config as ``key = value`` text that parses back to itself."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            text = "auto" if f.name == "batchnorm" else "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, list):
            text = ",".join(str(v) for v in value)
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key_of(f.name)} = {text}")
    return "\n".join(lines) + "\n"


SWEPT = {
    "tp": ("lr_forward", "beta", "lr_feedback"),
    "dtp": ("lr_forward", "beta", "lr_feedback"),
    "drl": ("lr_forward", "beta", "lr_feedback"),
    "ldrl": ("lr_forward", "beta", "lr_feedback"),
    "fwdtp": ("lr_forward", "beta"),
    "bp": ("lr_forward",),
    "fa": ("lr_forward",),
}


@dataclass
class SweepConfig:
    base: RunConfig
    centers: dict | None = None  # field name -> center; default: base values
    trials: int = 100
    low: float = 0.2
    high: float = 5.0
    jobs: int = 1
    bin_width: float = 5.0  # accuracy histogram bin width, in percent

    def resolve(self):
        base = self.base.resolve()
        params = SWEPT[base.algorithm]
        centers = {p: getattr(base, p) for p in params}
        for name, value in (self.centers or {}).items():
            if name not in centers:
                raise ConfigError(f"{key_of(name)} is not swept for {base.algorithm}")
            centers[name] = value
        if self.trials < 1:
            raise ConfigError("sweep needs at least one trial")
        if not 0 < self.low <= self.high:
            raise ConfigError("sweep range must satisfy 0 < low <= high")
        if any(c <= 0 for c in centers.values()):
            raise ConfigError("sweep centers must be positive")
        if not 0 < self.bin_width <= 100:
            raise ConfigError("bin width must lie in (0, 100]")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return dataclasses.replace(self, base=base, centers=centers)
