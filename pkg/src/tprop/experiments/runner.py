"""Seeded training runs with per-epoch metrics, checkpoints and summaries.

Outputs of a run directory:

* ``metrics.csv``: one row per epoch, deterministic for a given config
* ``epoch_times.csv``: wall-clock seconds per epoch (kept apart so the
  metrics file stays byte-reproducible)
* ``summary.csv``: final and best-validation-epoch errors
* ``config.txt``: the resolved configuration
* ``final.ckpt``: the trained network
"""

import csv
import io
import os
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..algorithms import Kind, RngStreams, check_layout, iterate_batches, pretrain_feedback, train_step
from ..data import Dataset, load_cifar_dir, load_mnist_dir, split_train_val, synthetic_blobs
from ..diagnostics import measure
from ..errors import TrainingDiverged
from ..network import build_network, save_checkpoint
from .config import METRICS_VERSION, format_config


def bundled_mnist_dir():
    """Directory of the bundled 4000/1000-sample MNIST subset."""
    return str(resources.files("tprop.resources") / "mnist-5k")


@dataclass
class Data:
    train: Dataset
    validation: Dataset | None
    test: Dataset


def load_data(cfg, streams):
    """Train/validation/test sets for a resolved config.

    The validation split is drawn from the shuffle stream, then the
    training part is capped at ``subset`` samples.
    """
    if cfg.dataset == "blobs":
        full = synthetic_blobs(cfg.blob_classes, 2 * cfg.blob_per_class, cfg.blob_dim, cfg.blob_separation, cfg.seed)
        half = len(full) // 2
        train, test = full.take(np.arange(half)), full.take(np.arange(half, len(full)))
    elif cfg.dataset == "random-cifar10":
        # uniform random pixels in the CIFAR-10 shape; for timing only
        rng = np.random.default_rng(cfg.seed)
        n = cfg.subset or 5000
        make = lambda m: Dataset(rng.integers(0, 256, (m, 3072)) / 255.0, rng.integers(0, 10, m), 10)
        train, test = make(n), make(max(cfg.diag_samples, cfg.batch_size))
    elif cfg.dataset == "mnist-5k":
        train, test = load_mnist_dir(cfg.data_dir or bundled_mnist_dir())
    elif cfg.dataset in ("mnist", "fmnist"):
        train, test = load_mnist_dir(cfg.data_path())
    else:
        train, test = load_cifar_dir(cfg.data_path(), 10 if cfg.dataset == "cifar10" else 100)

    validation = None
    if cfg.val_size:
        split = split_train_val(train, cfg.val_size, streams.shuffle)
        train, validation = split.train, split.validation
    if cfg.subset:
        train = train.head(cfg.subset)
    return Data(train, validation, test)


def make_network(cfg, n_inputs, n_classes, streams):
    widths = [n_inputs] + [cfg.width] * (cfg.depth - 1) + [n_classes]
    return build_network(
        widths,
        streams.forward,
        streams.feedback,
        hidden=cfg.hidden_activation,
        feedback_trainable=cfg.kind.trains_feedback,
    )


def error_rate(network, dataset, batch_size):
    """Test error in percent; BN statistics come from each evaluation batch.

    A trailing batch too small for BN is merged into the previous one.
    """
    n = len(dataset)
    if n == 0:
        return float("nan")
    starts = list(range(0, n, batch_size))
    if len(starts) > 1 and n - starts[-1] < 2:
        starts.pop()
    wrong = 0
    for i, start in enumerate(starts):
        stop = starts[i + 1] if i + 1 < len(starts) else n
        pred = network.predict(dataset.inputs[start:stop]).argmax(axis=1)
        wrong += int(np.sum(pred != dataset.labels[start:stop]))
    return 100.0 * wrong / n


def metrics_header(cfg):
    cols = ["epoch", "train_ce", "val_error", "test_error"]
    cols += [f"local_loss_{l}" for l in range(1, cfg.depth + 1)]
    if cfg.diagnostics:
        for l in cfg.diag_layers:
            cols += [f"trace_{l}", f"psd_{l}"]
    return cols


def fmt(value):
    """Shortest round-trip text for floats; empty for missing values."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))


@dataclass
class RunResult:
    config: object
    network: object
    header: list
    rows: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    def column(self, name):
        i = self.header.index(name)
        return [row[i] for row in self.rows]

    @property
    def final_test_error(self):
        return self.rows[-1][3] if self.rows else float("nan")

    @property
    def best_val_epoch(self):
        """Epoch with the lowest validation error (earliest on ties)."""
        vals = [(row[2], row[0]) for row in self.rows if row[2] is not None]
        return min(vals)[1] if vals else None

    @property
    def best_val_test_error(self):
        epoch = self.best_val_epoch
        return self.rows[epoch - 1][3] if epoch is not None else None

    def summary_rows(self):
        return [
            ["metrics_version", METRICS_VERSION],
            ["epochs", len(self.rows)],
            ["final_test_error", self.final_test_error if self.rows else None],
            ["best_val_epoch", self.best_val_epoch],
            ["best_val_test_error", self.best_val_test_error],
        ]


def run_train(cfg, on_epoch=None):
    """Train per ``cfg``; write outputs when ``cfg.out`` is set.

    ``on_epoch(result)`` is called after every epoch.  Raises
    :class:`TrainingDiverged` when any weight stops being finite.
    """
    cfg = cfg.resolve()
    streams = RngStreams(cfg.seed)
    data = load_data(cfg, streams)
    network = make_network(cfg, data.train.dim, data.train.n_classes, streams)
    kind = check_layout(cfg.kind, network)
    hp = cfg.hyperparams()
    result = RunResult(cfg, network, metrics_header(cfg))
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(format_config(cfg))

    x, y = data.train.inputs, data.train.labels
    if cfg.epochs > 0:
        pretrain_feedback(kind, network, x, hp, streams, drop_last=cfg.batchnorm)
        _check_finite(network, "feedback pretraining")
    probe = data.test.head(cfg.diag_samples).inputs
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = streams.shuffle.permutation(len(x))
        losses, locals_ = [], []
        # overflow is detected explicitly below, so numpy's warnings are noise
        with np.errstate(over="ignore", invalid="ignore"):
            for idx in iterate_batches(len(x), cfg.batch_size, order, drop_last=cfg.batchnorm):
                step = train_step(kind, network, x[idx], y[idx], hp, streams)
                losses.append(step.loss)
                if step.local_losses:
                    locals_.append(step.local_losses)
                if not np.isfinite(step.loss):
                    raise TrainingDiverged(f"loss became {step.loss} in epoch {epoch}")
                if not network.all_finite():
                    raise TrainingDiverged(f"non-finite weights in epoch {epoch}")
        result.epoch_seconds.append(time.perf_counter() - start)

        local = np.mean(locals_, axis=0) if locals_ else [None] * cfg.depth
        val = error_rate(network, data.validation, cfg.batch_size) if data.validation else None
        row = [epoch, float(np.mean(losses)), val, error_rate(network, data.test, cfg.batch_size)]
        row += [None if v is None else float(v) for v in local]
        if cfg.diagnostics:
            for cond in measure(network, probe, cfg.diag_layers):
                row += [cond.trace, cond.psd_proportion]
        result.rows.append(row)
        if on_epoch is not None:
            on_epoch(result)

    if cfg.out:
        write_csv(os.path.join(cfg.out, "metrics.csv"), result.header, result.rows)
        write_csv(
            os.path.join(cfg.out, "epoch_times.csv"),
            ["epoch", "seconds"],
            [[i + 1, s] for i, s in enumerate(result.epoch_seconds)],
        )
        write_csv(os.path.join(cfg.out, "summary.csv"), ["key", "value"], result.summary_rows())
        save_checkpoint(network, os.path.join(cfg.out, "final.ckpt"))
    return result


def _check_finite(network, where):
    if not network.all_finite():
        raise TrainingDiverged(f"non-finite weights after {where}")
