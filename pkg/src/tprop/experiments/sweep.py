"""Random hyperparameter sensitivity sweep.

Each swept value is drawn as ``center * exp(u)`` with
``u ~ U(log low, log high)``, so log-values are uniform over
``[log(low * center), log(high * center)]``.  Trial ``i`` runs with seed
``base.seed + i``; results are ordered by trial index whatever the
completion order.
"""

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..algorithms import RngStreams
from ..errors import TpropError
from .config import key_of
from .runner import run_train, write_csv


def sample_log_uniform(rng, center, low, high, size=None):
    """Log-uniform draws on [low * center, high * center]."""
    u = rng.uniform(np.log(low), np.log(high), size)
    # exp(log(high)) can round a hair past high; clip keeps the range exact
    return np.clip(center * np.exp(u), low * center, high * center)


def sample_trials(sweep):
    """One dict of swept values per trial, drawn in trial order."""
    rng = RngStreams(sweep.base.seed).sweep
    params = list(sweep.centers)
    trials = []
    for _ in range(sweep.trials):
        trials.append({p: float(sample_log_uniform(rng, sweep.centers[p], sweep.low, sweep.high)) for p in params})
    return trials


def _run_trial(cfg):
    try:
        result = run_train(cfg)
    except TpropError as exc:
        return None, None, f"failed: {exc.code}"
    except OSError:
        return None, None, "failed: io-error"
    final = result.final_test_error
    best = result.best_val_test_error
    if not np.isfinite(final):
        return None, None, "failed: diverged"
    return 100.0 - final, None if best is None else 100.0 - best, "ok"


def histogram(accuracies, bin_width):
    """Fixed-width bin counts over [0, 100]; 100 falls in the last bin."""
    edges = np.arange(0.0, 100.0 + 1e-9, bin_width)
    if edges[-1] < 100.0:
        edges = np.append(edges, 100.0)
    counts = np.zeros(len(edges) - 1, dtype=int)
    for acc in accuracies:
        i = min(int(np.searchsorted(edges, acc, side="right")) - 1, len(counts) - 1)
        counts[max(i, 0)] += 1
    return [[float(edges[i]), float(edges[i + 1]), int(counts[i])] for i in range(len(counts))]


def run_sweep(sweep):
    """Run every trial; write ``trials.csv`` and ``histogram.csv`` to base.out.

    Returns ``(header, rows, histogram rows)``.  Trials that fail are
    recorded with an empty accuracy and a status message.
    """
    sweep = sweep.resolve()
    out = sweep.base.out
    samples = sample_trials(sweep)
    configs = [
        dataclasses.replace(sweep.base, seed=sweep.base.seed + i, out=None, **values)
        for i, values in enumerate(samples)
    ]
    if sweep.jobs > 1:
        with ProcessPoolExecutor(max_workers=sweep.jobs) as pool:
            outcomes = list(pool.map(_run_trial, configs))
    else:
        outcomes = [_run_trial(c) for c in configs]

    params = list(sweep.centers)
    header = ["trial", "seed"] + [key_of(p) for p in params]
    header += ["final_test_accuracy", "best_val_test_accuracy", "status"]
    rows = []
    for i, (values, (final, best, status)) in enumerate(zip(samples, outcomes)):
        rows.append([i, configs[i].seed] + [values[p] for p in params] + [final, best, status])
    hist = histogram([r[-3] for r in rows if r[-3] is not None], sweep.bin_width)
    if out:
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, "trials.csv"), header, rows)
        write_csv(os.path.join(out, "histogram.csv"), ["bin_low", "bin_high", "count"], hist)
    return header, rows, hist
