"""Checkpoint diagnostics, epoch timing and weight export."""

import os
import time

import numpy as np

from ..algorithms import Kind, OpCounter, RngStreams, check_layout, iterate_batches, pretrain_feedback, train_step
from ..diagnostics import measure
from ..errors import DimensionMismatch
from ..network import load_checkpoint
from .runner import load_data, make_network, write_csv

DIAG_SAMPLES = 256


def diagnose(network, inputs, layers=None):
    """``[layer, trace, psd_proportion, samples]`` rows for a network."""
    layers = list(layers or range(1, network.depth + 1))
    bad = [l for l in layers if not 1 <= l <= network.depth]
    if bad:
        raise DimensionMismatch(f"layers {bad} outside 1..{network.depth}")
    return [[c.layer, c.trace, c.psd_proportion, c.samples] for c in measure(network, inputs, layers)]


def run_diagnose(checkpoint, cfg, layers=None, out=None):
    """Measure a saved network on the first 256 test samples of ``cfg``'s data."""
    network = load_checkpoint(checkpoint)
    cfg = cfg.resolve()
    data = load_data(cfg, RngStreams(cfg.seed))
    if data.test.dim != network.widths[0]:
        raise DimensionMismatch(f"checkpoint expects {network.widths[0]} inputs, data has {data.test.dim}")
    rows = diagnose(network, data.test.head(DIAG_SAMPLES).inputs, layers)
    header = ["layer", "trace", "psd_proportion", "samples"]
    if out:
        write_csv(out, header, rows)
    return header, rows


def time_epochs(cfg, repetitions=3, warmup=1):
    """Per-epoch wall times after ``warmup`` untimed epochs, plus op counts.

    Feedback pretraining is not timed.  Returns ``(seconds, counter)`` where
    the counter covers the timed epochs only.
    """
    cfg = cfg.resolve()
    streams = RngStreams(cfg.seed)
    data = load_data(cfg, streams)
    network = make_network(cfg, data.train.dim, data.train.n_classes, streams)
    kind = check_layout(cfg.kind, network)
    hp = cfg.hyperparams()
    x, y = data.train.inputs, data.train.labels
    pretrain_feedback(kind, network, x, hp, streams, drop_last=cfg.batchnorm)
    counter = OpCounter()
    seconds = []
    for epoch in range(warmup + repetitions):
        timed = epoch >= warmup
        order = streams.shuffle.permutation(len(x))
        start = time.perf_counter()
        for idx in iterate_batches(len(x), cfg.batch_size, order, drop_last=cfg.batchnorm):
            train_step(kind, network, x[idx], y[idx], hp, streams, counter if timed else None)
        if timed:
            seconds.append(time.perf_counter() - start)
    return seconds, counter


def run_timing(configs, repetitions=3, warmup=1, out=None):
    """Timing table: mean/std epoch seconds, ratio to FW-DTP, decoder grads per batch."""
    if warmup < 1:
        raise ValueError("at least one warmup epoch is required")
    measured = []
    for cfg in configs:
        seconds, counter = time_epochs(cfg, repetitions, warmup)
        measured.append((Kind(cfg.algorithm).value, seconds, counter))
    reference = next((np.mean(s) for name, s, _ in measured if name == "fwdtp"), None)
    header = ["algorithm", "mean_seconds", "std_seconds", "ratio_to_fwdtp", "decoder_grads_per_batch"]
    rows = []
    for name, seconds, counter in measured:
        mean = float(np.mean(seconds))
        ratio = mean / reference if reference else None
        per_batch = counter.decoder_grads / counter.batches if counter.batches else 0.0
        rows.append([name, mean, float(np.std(seconds)), ratio, per_batch])
    if out:
        write_csv(out, header, rows)
    return header, rows


def export_checkpoint(checkpoint, directory):
    """Write each weight matrix as CSV (columns c0..) plus a layers.csv index."""
    network = load_checkpoint(checkpoint)
    os.makedirs(directory, exist_ok=True)
    paths = []
    for prefix, layers in (("encoder", network.encoders), ("decoder", network.decoders)):
        for l, layer in enumerate(layers, start=1):
            path = os.path.join(directory, f"{prefix}_{l}.csv")
            write_csv(path, [f"c{j}" for j in range(layer.in_features)], layer.weight.tolist())
            paths.append(path)
    with open(os.path.join(directory, "layers.csv"), "w", encoding="utf-8") as fh:
        fh.write("role,layer,rows,cols,activation\n")
        for prefix, layers in (("encoder", network.encoders), ("decoder", network.decoders)):
            for l, layer in enumerate(layers, start=1):
                fh.write(f"{prefix},{l},{layer.out_features},{layer.in_features},{layer.activation.value}\n")
    return paths
