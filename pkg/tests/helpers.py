"""Shared oracles: central finite differences and small random networks."""

import numpy as np

from tprop.network import Activation, Layer, Network, build_network

FD_STEP = 1e-6


def numeric_grad(fn, x, step=FD_STEP):
    """Central-difference gradient of scalar ``fn`` at array ``x`` (restored after)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        up = fn()
        x[i] = orig - step
        down = fn()
        x[i] = orig
        grad[i] = (up - down) / (2 * step)
    return grad


def numeric_jacobian(fn, x, step=FD_STEP):
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e.flat[j] = step
        cols.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.stack(cols, axis=1)


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def random_widths(rng, depth, lo=2, hi=6):
    return [int(w) for w in rng.integers(lo, hi + 1, size=depth + 1)]


def random_network(rng, widths, hidden=Activation.TANH, scale=1.0):
    """Gaussian weights of moderate size, trainable decoders."""
    net = build_network(widths, rng, rng, hidden=hidden)
    for layer in net.encoders + net.decoders:
        layer.weight = scale * rng.standard_normal(layer.weight.shape) / np.sqrt(layer.in_features)
    return net


def linear_network(encoder_weights, decoder_weights):
    enc = [Layer(np.array(w, dtype=float), Activation.LINEAR) for w in encoder_weights]
    dec = [Layer(np.array(w, dtype=float), Activation.LINEAR) for w in decoder_weights]
    return Network(enc, dec)


ACCEPTANCE = []


class criterion:
    """Context manager recording one PASS/FAIL line for an acceptance criterion.

    ``self.detail`` may be set inside the block; it is appended to the line.
    """

    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"{status} criterion {self.number:2d}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        if exc is not None and str(exc):
            line += f" -- {str(exc).splitlines()[0]}"
        ACCEPTANCE.append((self.number, line))
        print(line)
        return False
