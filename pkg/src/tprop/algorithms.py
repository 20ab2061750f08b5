"""Learning rules: BP, FA, TP, DTP, DTP with DRL or L-DRL feedback, FW-DTP.

Every rule is exposed as a per-batch :func:`train_step`.  The target
propagation family shares the same forward update (plain SGD on the
layer-wise loss ``mean ||tau_l - h_l||^2``) and differs in how targets are
propagated and how decoders are trained.

Decoder ``g_l`` is trained for l = 2..L only.  ``g_1`` would reconstruct the
input space, whose target is never used.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import Misconfiguration
from .network import layer_apply, layer_vjp, softmax_cross_entropy, softmax_residual


class Kind(str, Enum):
    BP = "bp"
    FA = "fa"
    TP = "tp"
    DTP = "dtp"
    DRL = "drl"
    LDRL = "ldrl"
    FWDTP = "fwdtp"

    @property
    def uses_targets(self):
        return self not in (Kind.BP, Kind.FA)

    @property
    def trains_feedback(self):
        return self in (Kind.TP, Kind.DTP, Kind.DRL, Kind.LDRL)


@dataclass
class Hyperparams:
    lr_forward: float = 0.1
    lr_feedback: float = 0.0
    beta: float = 0.04
    nb: int = 5
    sigma: float = 0.01
    tikhonov: float = 0.0
    batch_size: int = 256
    epochs: int = 100

    def validate(self, batchnorm=False):
        checks = [
            (self.lr_forward > 0, "lr_forward must be > 0"),
            (self.lr_feedback >= 0, "lr_feedback must be >= 0"),
            (self.beta > 0, "beta must be > 0"),
            (self.nb >= 0, "nb must be >= 0"),
            (self.sigma >= 0, "sigma must be >= 0"),
            (self.tikhonov >= 0, "lambda must be >= 0"),
            (self.batch_size >= (2 if batchnorm else 1), "batch size too small"),
            (self.epochs >= 0, "epochs must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise Misconfiguration(msg)
        return self


STREAM_NAMES = ("forward", "feedback", "noise", "shuffle", "sweep")


class RngStreams:
    """Independent generators, one per purpose, all derived from one seed.

    Drawing from one stream never advances another, which is what lets a
    DTP run with zero feedback learning rate replay FW-DTP exactly.
    """

    def __init__(self, seed):
        self.seed = seed
        children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
        for name, child in zip(STREAM_NAMES, children):
            setattr(self, name, np.random.Generator(np.random.PCG64(child)))


@dataclass
class OpCounter:
    decoder_grads: int = 0
    batches: int = 0


@dataclass
class PropagationState:
    """Activations h_0..h_L of one batch and targets tau_1..tau_L.

    ``caches[l-1]`` is encoder l's evaluation; ``targets[l-1]`` is tau_l.
    """

    inputs: np.ndarray
    caches: list
    targets: list = field(default_factory=list)

    def h(self, l):
        return self.inputs if l == 0 else self.caches[l - 1].outputs


def output_target(h_out, labels, beta):
    """tau_L = h_L - beta * dloss_i/dh_L, with the per-sample CE gradient."""
    return h_out - beta * softmax_residual(h_out, labels)


def propagate_targets_dtp(state, network):
    """Difference-corrected targets tau_{L-1}..tau_1 given tau_L.

    The correction is added as ``h_l + (g(tau) - g(h))`` so that
    tau_{l+1} == h_{l+1} gives tau_l == h_l bit-exactly.
    """
    L = network.depth
    targets = [None] * L
    targets[L - 1] = state.targets[L - 1]
    for l in range(L - 1, 0, -1):
        dec = network.decoder(l + 1)
        g_tau = layer_apply(dec, targets[l]).outputs
        g_h = layer_apply(dec, state.h(l + 1)).outputs
        targets[l - 1] = state.h(l) + (g_tau - g_h)
    state.targets = targets
    return targets


def propagate_targets_tp(state, network):
    """Plain TP targets: tau_l = g_{l+1}(tau_{l+1})."""
    L = network.depth
    targets = [None] * L
    targets[L - 1] = state.targets[L - 1]
    for l in range(L - 1, 0, -1):
        targets[l - 1] = layer_apply(network.decoder(l + 1), targets[l]).outputs
    state.targets = targets
    return targets


def local_loss(h, tau):
    diff = np.asarray(tau) - np.asarray(h)
    return float(np.mean(np.sum(diff**2, axis=1)))


def local_loss_grad(network, state, l):
    """Gradient of mean ||tau_l - h_l||^2 w.r.t. W_l (BN statistics frozen)."""
    cache = state.caches[l - 1]
    m = cache.outputs.shape[0]
    grad_out = (-2.0 / m) * (state.targets[l - 1] - cache.outputs)
    grad_w, _ = layer_vjp(network.encoder(l), cache, grad_out)
    return grad_w


def forward_update(network, state, lr_forward):
    """One SGD step on every encoder's layer-wise loss; returns the losses."""
    losses = []
    grads = []
    for l in range(1, network.depth + 1):
        losses.append(local_loss(state.h(l), state.targets[l - 1]))
        grads.append(local_loss_grad(network, state, l))
    for enc, grad in zip(network.encoders, grads):
        enc.weight -= lr_forward * grad
    return losses


def _apply_feedback(dec, grad, lr_feedback):
    if lr_feedback != 0.0:
        dec.weight -= lr_feedback * grad


def _noise(rng, shape, sigma):
    return sigma * rng.standard_normal(shape)


def reconstruction_loss_grad(network, state, l, eps):
    """Loss and gradient of mean ||r - g_l(f_l(r))||^2 with r = h_{l-1} + eps."""
    r = state.h(l - 1) + eps
    fr = layer_apply(network.encoder(l), r).outputs
    dec = network.decoder(l)
    cache = layer_apply(dec, fr)
    resid = cache.outputs - r
    m = r.shape[0]
    loss = float(np.mean(np.sum(resid**2, axis=1)))
    grad, _ = layer_vjp(dec, cache, (2.0 / m) * resid)
    return loss, grad


def feedback_update_dtp(network, state, lr_feedback, sigma, rng, counter=None):
    """One pass of the reconstruction-loss update over decoders 2..L."""
    losses = []
    for l in range(2, network.depth + 1):
        eps = _noise(rng, state.h(l - 1).shape, sigma)
        loss, grad = reconstruction_loss_grad(network, state, l, eps)
        _apply_feedback(network.decoder(l), grad, lr_feedback)
        losses.append(loss)
        if counter is not None:
            counter.decoder_grads += 1
    return losses


def drl_loss_grad(network, state, l, eps, tikhonov):
    """Difference reconstruction loss for decoder l and its gradient.

    Noise injected at layer l-1 is carried up to layer L by the encoders and
    brought back to layer l-1 through the difference-corrected decoders.
    Only decoder l's weights are differentiated.
    """
    L = network.depth
    r = state.h(l - 1) + eps
    up = r
    for k in range(l, L + 1):
        up = layer_apply(network.encoder(k), up).outputs
    rec = up
    for k in range(L - 1, l - 1, -1):
        dec = network.decoder(k + 1)
        rec = state.h(k) + (layer_apply(dec, rec).outputs - layer_apply(dec, state.h(k + 1)).outputs)
    dec = network.decoder(l)
    at_rec = layer_apply(dec, rec)
    at_h = layer_apply(dec, state.h(l))
    rec_low = state.h(l - 1) + (at_rec.outputs - at_h.outputs)
    resid = rec_low - r
    m = r.shape[0]
    loss = float(np.mean(np.sum(resid**2, axis=1))) + tikhonov * float(np.sum(dec.weight**2))
    g_out = (2.0 / m) * resid
    grad_rec, _ = layer_vjp(dec, at_rec, g_out)
    grad_h, _ = layer_vjp(dec, at_h, g_out)
    return loss, grad_rec - grad_h + 2.0 * tikhonov * dec.weight


def feedback_update_drl(network, state, lr_feedback, sigma, tikhonov, rng, counter=None):
    losses = []
    for l in range(2, network.depth + 1):
        eps = _noise(rng, state.h(l - 1).shape, sigma)
        loss, grad = drl_loss_grad(network, state, l, eps, tikhonov)
        _apply_feedback(network.decoder(l), grad, lr_feedback)
        losses.append(loss)
        if counter is not None:
            counter.decoder_grads += 1
    return losses


def ldrl_loss_grad(network, state, l, eps, eta):
    """Local difference reconstruction loss for decoder l and its gradient.

    loss = mean[-(r - h)^T (r_rec - h) + 1/2 ||s_rec - h||^2] with
    r = h_{l-1} + eps and s = h_l + eta, both decoded with difference
    correction.
    """
    h_low, h_up = state.h(l - 1), state.h(l)
    dec = network.decoder(l)
    r = h_low + eps
    at_r = layer_apply(dec, layer_apply(network.encoder(l), r).outputs)
    at_s = layer_apply(dec, h_up + eta)
    at_h = layer_apply(dec, h_up)
    r_rec = h_low + (at_r.outputs - at_h.outputs)
    s_rec = h_low + (at_s.outputs - at_h.outputs)
    m = r.shape[0]
    loss = float(np.mean(-np.sum(eps * (r_rec - h_low), axis=1) + 0.5 * np.sum((s_rec - h_low) ** 2, axis=1)))
    g_r = -eps / m
    g_s = (s_rec - h_low) / m
    grad_r, _ = layer_vjp(dec, at_r, g_r)
    grad_s, _ = layer_vjp(dec, at_s, g_s)
    grad_h, _ = layer_vjp(dec, at_h, g_r + g_s)
    return loss, grad_r + grad_s - grad_h


def feedback_update_ldrl(network, state, lr_feedback, sigma, rng, counter=None):
    losses = []
    for l in range(2, network.depth + 1):
        eps = _noise(rng, state.h(l - 1).shape, sigma)
        eta = _noise(rng, state.h(l).shape, sigma)
        loss, grad = ldrl_loss_grad(network, state, l, eps, eta)
        _apply_feedback(network.decoder(l), grad, lr_feedback)
        losses.append(loss)
        if counter is not None:
            counter.decoder_grads += 1
    return losses


def feedback_update(kind, network, state, hp, rng, counter=None):
    if kind in (Kind.TP, Kind.DTP):
        return feedback_update_dtp(network, state, hp.lr_feedback, hp.sigma, rng, counter)
    if kind is Kind.DRL:
        return feedback_update_drl(network, state, hp.lr_feedback, hp.sigma, hp.tikhonov, rng, counter)
    if kind is Kind.LDRL:
        return feedback_update_ldrl(network, state, hp.lr_feedback, hp.sigma, rng, counter)
    return []


def check_layout(kind, network):
    kind = Kind(kind)
    trainable = [d.trainable for d in network.decoders[1:]]
    if kind is Kind.FWDTP and any(trainable):
        raise Misconfiguration("FW-DTP requires fixed (non-trainable) feedback weights")
    if kind.trains_feedback and not all(trainable):
        raise Misconfiguration(f"{kind.value} needs trainable feedback weights")
    return kind


def backprop_step(network, inputs, labels, lr_forward, feedback_alignment=False):
    """Exact backpropagation, or FA when ``feedback_alignment`` is set.

    FA routes errors through the decoders' fixed matrices instead of W^T.
    """
    caches = network.forward(inputs)
    loss, grad = softmax_cross_entropy(caches[-1].outputs, labels)
    grads = [None] * network.depth
    for l in range(network.depth, 0, -1):
        back = network.decoder(l).weight if feedback_alignment else None
        grads[l - 1], grad = layer_vjp(network.encoder(l), caches[l - 1], grad, True, back)
    for enc, g in zip(network.encoders, grads):
        enc.weight -= lr_forward * g
    return loss, caches


@dataclass
class StepResult:
    loss: float
    local_losses: list = field(default_factory=list)
    feedback_losses: list = field(default_factory=list)


def train_step(kind, network, inputs, labels, hp, streams, counter=None):
    """Run one mini-batch of ``kind`` on ``network`` in place."""
    kind = Kind(kind)
    if counter is not None:
        counter.batches += 1
    if kind is Kind.BP or kind is Kind.FA:
        loss, _ = backprop_step(network, inputs, labels, hp.lr_forward, kind is Kind.FA)
        return StepResult(loss)

    state = PropagationState(np.asarray(inputs, dtype=np.float64), network.forward(inputs))
    fb_losses = []
    if kind.trains_feedback:
        for _ in range(hp.nb):
            fb_losses = feedback_update(kind, network, state, hp, streams.noise, counter)
    h_out = state.h(network.depth)
    loss, _ = softmax_cross_entropy(h_out, labels)
    state.targets = [None] * (network.depth - 1) + [output_target(h_out, labels, hp.beta)]
    if kind is Kind.TP:
        propagate_targets_tp(state, network)
    else:
        propagate_targets_dtp(state, network)
    local = forward_update(network, state, hp.lr_forward)
    return StepResult(loss, local, fb_losses)


def iterate_batches(n, batch_size, order=None, drop_last=False):
    order = np.arange(n) if order is None else order
    stop = n - n % batch_size if drop_last else n
    for start in range(0, stop, batch_size):
        yield order[start : start + batch_size]


def pretrain_feedback(kind, network, inputs, hp, streams, counter=None, drop_last=False):
    """One epoch of decoder-only training, in dataset order.

    Dataset order (no shuffling) keeps the shuffle stream untouched, so
    the forward training that follows sees the same batches as FW-DTP.
    """
    kind = Kind(kind)
    if not kind.trains_feedback:
        return
    for idx in iterate_batches(len(inputs), hp.batch_size, drop_last=drop_last):
        batch = inputs[idx]
        state = PropagationState(batch, network.forward(batch))
        for _ in range(hp.nb):
            feedback_update(kind, network, state, hp, streams.noise, counter)
