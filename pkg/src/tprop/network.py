"""Fully connected encoder/decoder layers, the loss head and checkpoints.

A network of depth L holds encoders f_1..f_L (weights W_l of shape
n_l x n_{l-1}) and decoders g_1..g_L (weights of shape n_{l-1} x n_l), where
decoder l maps layer-l activations back to layer l-1.  All batches are
row-major: one sample per row.
"""

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateBatch, DimensionMismatch, FormatError, InvalidLabel, MissingContext
from .linalg import orthogonal_init, uniform_init


class Activation(str, Enum):
    LINEAR = "linear"
    TANH = "tanh"
    TANH_BN = "tanh-bn"  # tanh followed by batch normalization with gamma=1, delta=0

    @property
    def tag(self):
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag):
        for act, t in _TAGS.items():
            if t == tag:
                return act
        raise FormatError(f"unknown activation tag {tag}")


_TAGS = {Activation.LINEAR: 0, Activation.TANH: 1, Activation.TANH_BN: 2}


@dataclass
class BatchStats:
    """Per-column batch mean and standard deviation used by fixed BN."""

    mean: np.ndarray
    std: np.ndarray
    scale: np.ndarray  # 1/std, and 0 for constant columns


def batch_stats(batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[0] < 2:
        raise DegenerateBatch("batch normalization needs at least 2 samples")
    mean = batch.mean(axis=0)
    std = np.sqrt(np.mean((batch - mean) ** 2, axis=0))
    constant = (np.ptp(batch, axis=0) == 0) | (std == 0)
    scale = np.divide(1.0, std, out=np.zeros_like(std), where=~constant)
    return BatchStats(mean, std, scale)


def fixed_batch_norm(batch, stats=None):
    """Standardize each column over the batch; constant columns map to 0."""
    batch = np.asarray(batch, dtype=np.float64)
    if stats is None:
        stats = batch_stats(batch)
    return (batch - stats.mean) * stats.scale


@dataclass
class Layer:
    weight: np.ndarray
    activation: Activation
    trainable: bool = True

    @property
    def in_features(self):
        return self.weight.shape[1]

    @property
    def out_features(self):
        return self.weight.shape[0]


@dataclass
class LayerCache:
    """Intermediate values of one layer evaluation, kept for gradients."""

    inputs: np.ndarray
    pre: np.ndarray
    squashed: np.ndarray
    outputs: np.ndarray
    stats: BatchStats | None = None


def layer_apply(layer, inputs, stats=None):
    """Evaluate ``layer`` on a batch, returning the full cache.

    For the BN activation, ``stats`` pins the normalization statistics;
    by default they are computed over ``inputs``.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != layer.in_features:
        raise DimensionMismatch(
            f"layer expects {layer.in_features} input features, got shape {inputs.shape}"
        )
    pre = inputs @ layer.weight.T
    if layer.activation is Activation.LINEAR:
        return LayerCache(inputs, pre, pre, pre)
    squashed = np.tanh(pre)
    if layer.activation is Activation.TANH:
        return LayerCache(inputs, pre, squashed, squashed)
    if stats is None:
        stats = batch_stats(squashed)
    return LayerCache(inputs, pre, squashed, fixed_batch_norm(squashed, stats), stats)


def layer_forward(layer, inputs, stats=None):
    return layer_apply(layer, inputs, stats).outputs


def _pre_activation_slope(layer, cache):
    """Elementwise d(output)/d(pre-activation) with BN statistics frozen."""
    if layer.activation is Activation.LINEAR:
        return np.ones_like(cache.pre)
    slope = 1.0 - cache.squashed**2
    if layer.activation is Activation.TANH_BN:
        slope = slope * cache.stats.scale
    return slope


def layer_vjp(layer, cache, grad_out, through_stats=False, backward_weight=None):
    """Back-propagate ``grad_out`` (dLoss/d outputs) through one layer.

    Returns ``(grad_weight, grad_inputs)``.  BN statistics are treated as
    constants unless ``through_stats`` is set, in which case the exact batch
    gradient is used.  ``backward_weight`` (shape in x out) replaces W^T when
    routing the error to the inputs, as in feedback alignment.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if layer.activation is Activation.TANH_BN and through_stats:
        y, scale = cache.outputs, cache.stats.scale
        grad_sq = scale * (grad_out - grad_out.mean(axis=0) - y * np.mean(grad_out * y, axis=0))
        grad_pre = grad_sq * (1.0 - cache.squashed**2)
    else:
        grad_pre = grad_out * _pre_activation_slope(layer, cache)
    grad_weight = grad_pre.T @ cache.inputs
    if backward_weight is None:
        grad_inputs = grad_pre @ layer.weight
    else:
        grad_inputs = grad_pre @ backward_weight.T
    return grad_weight, grad_inputs


def jacobian_diagonals(layer, cache):
    """Row i holds the diagonal factor d_i with J_i = diag(d_i) @ W."""
    return _pre_activation_slope(layer, cache)


def layer_jacobian(layer, point, context=None):
    """Jacobian of ``layer`` at a single input point.

    For the BN activation ``context`` must give the (frozen) batch
    statistics, either as :class:`BatchStats` or as the batch the point
    belongs to.
    """
    point = np.asarray(point, dtype=np.float64).reshape(1, -1)
    if layer.activation is Activation.TANH_BN:
        if context is None:
            raise MissingContext("a BN layer Jacobian needs batch statistics")
        if not isinstance(context, BatchStats):
            context = batch_stats(np.tanh(np.asarray(context, dtype=np.float64) @ layer.weight.T))
    cache = layer_apply(layer, point, context if layer.activation is Activation.TANH_BN else None)
    return jacobian_diagonals(layer, cache)[0][:, None] * layer.weight


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, n_rows, n_classes):
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise DimensionMismatch(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidLabel(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.intp)


def softmax_residual(logits, labels):
    """Per-sample gradient softmax(logits) - onehot(labels)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(labels, logits.shape[0], logits.shape[1])
    resid = softmax(logits)
    resid[np.arange(len(labels)), labels] -= 1.0
    return resid


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(labels, logits.shape[0], logits.shape[1])
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    m = logits.shape[0]
    loss = float(np.mean(log_norm - z[np.arange(m), labels]))
    return loss, softmax_residual(logits, labels) / m


@dataclass
class Network:
    encoders: list = field(default_factory=list)
    decoders: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.encoders) != len(self.decoders):
            raise DimensionMismatch("each encoder needs a paired decoder")
        for l, (enc, dec) in enumerate(zip(self.encoders, self.decoders), start=1):
            if dec.weight.shape != enc.weight.T.shape:
                raise DimensionMismatch(
                    f"decoder {l} has shape {dec.weight.shape}, expected {enc.weight.T.shape}"
                )
            if l > 1 and enc.in_features != self.encoders[l - 2].out_features:
                raise DimensionMismatch(f"encoder {l} does not chain with encoder {l - 1}")

    @property
    def depth(self):
        return len(self.encoders)

    @property
    def widths(self):
        return [self.encoders[0].in_features] + [e.out_features for e in self.encoders]

    def encoder(self, l):
        """Encoder f_l, 1-based."""
        return self.encoders[l - 1]

    def decoder(self, l):
        """Decoder g_l, 1-based."""
        return self.decoders[l - 1]

    def forward(self, inputs):
        """Caches for layers 1..L; ``caches[l-1].outputs`` is h_l."""
        caches = []
        h = np.asarray(inputs, dtype=np.float64)
        for enc in self.encoders:
            cache = layer_apply(enc, h)
            caches.append(cache)
            h = cache.outputs
        return caches

    def predict(self, inputs):
        return self.forward(inputs)[-1].outputs

    def copy(self):
        clone = lambda layer: Layer(layer.weight.copy(), layer.activation, layer.trainable)
        return Network([clone(e) for e in self.encoders], [clone(d) for d in self.decoders])

    def all_finite(self):
        return all(np.isfinite(layer.weight).all() for layer in self.encoders + self.decoders)


def build_network(
    widths,
    rng_forward,
    rng_feedback,
    hidden=Activation.TANH,
    feedback_trainable=True,
    feedback_range=0.01,
):
    """Orthogonal forward weights, U(-r, r) feedback weights.

    The last encoder is linear (its output feeds the softmax loss).  Every
    decoder maps into a hidden-layer space and uses the hidden activation.
    """
    hidden = Activation(hidden)
    n_layers = len(widths) - 1
    encoders = []
    for l in range(1, n_layers + 1):
        act = hidden if l < n_layers else Activation.LINEAR
        encoders.append(Layer(orthogonal_init(widths[l], widths[l - 1], rng_forward), act))
    decoders = [
        Layer(
            uniform_init(widths[l - 1], widths[l], -feedback_range, feedback_range, rng_feedback),
            hidden,
            trainable=feedback_trainable,
        )
        for l in range(1, n_layers + 1)
    ]
    return Network(encoders, decoders)


MAGIC = b"TPROP1"


def checkpoint_bytes(network):
    parts = [MAGIC, struct.pack("<I", network.depth)]
    for layer in network.encoders + network.decoders:
        rows, cols = layer.weight.shape
        parts.append(struct.pack("<IIB", rows, cols, layer.activation.tag))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
    return b"".join(parts)


def network_from_bytes(buf):
    buf = bytes(buf)
    if not buf.startswith(MAGIC):
        raise FormatError("not a checkpoint: bad magic")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError("checkpoint truncated")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    (depth,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(2 * depth):
        rows, cols, tag = struct.unpack("<IIB", take(9))
        weight = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        layers.append(Layer(weight.astype(np.float64), Activation.from_tag(tag)))
    if pos != len(buf):
        raise FormatError("trailing bytes after checkpoint")
    try:
        return Network(layers[:depth], layers[depth:])
    except DimensionMismatch as exc:
        raise FormatError(f"inconsistent checkpoint: {exc}") from exc


def save_checkpoint(network, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(network))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return network_from_bytes(fh.read())
