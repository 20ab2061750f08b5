"""Jacobian conditions and exactness checks for target propagation.

The per-layer measurements look at M = J_f J_g, the product of encoder
f_l's Jacobian (at h_{l-1}) and decoder g_l's Jacobian (at h_l):

* the weak condition, tr(M) >= 0, averaged over a batch;
* the strict condition, positive semi-definiteness of the quadratic form
  e^T M e, measured as the share of non-negative eigenvalues of the
  symmetric part (M + M^T) / 2.
"""

from dataclasses import dataclass

import numpy as np

from .algorithms import PropagationState, output_target, propagate_targets_dtp
from .errors import DimensionMismatch, InvalidBijection, NonInvertible
from .linalg import batched_symmetric_eigenvalues, trace_product
from .network import Activation, jacobian_diagonals, layer_apply, softmax_residual

PSD_THRESHOLD = -1e-10


@dataclass
class JacobianCondition:
    layer: int
    trace: float
    psd_proportion: float
    samples: int


class MeasurementContext:
    """Forward and decoder evaluations of one batch, frozen for Jacobians.

    BN statistics come from the batch itself, for the encoders and for each
    decoder applied to the batch's activations.
    """

    def __init__(self, network, inputs):
        self.network = network
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.enc_caches = network.forward(self.inputs)
        self.dec_caches = [None] * network.depth
        # g_1 is evaluated too so that layer 1 can be measured
        for l in range(1, network.depth + 1):
            h = self.enc_caches[l - 1].outputs
            self.dec_caches[l - 1] = layer_apply(network.decoder(l), h)

    @property
    def size(self):
        return self.inputs.shape[0]

    def encoder_jacobian(self, l, sample):
        d = jacobian_diagonals(self.network.encoder(l), self.enc_caches[l - 1])[sample]
        return d[:, None] * self.network.encoder(l).weight

    def decoder_jacobian(self, l, sample):
        d = jacobian_diagonals(self.network.decoder(l), self.dec_caches[l - 1])[sample]
        return d[:, None] * self.network.decoder(l).weight


def _check_layer(network, l):
    if not 1 <= l <= network.depth:
        raise DimensionMismatch(f"layer index {l} outside 1..{network.depth}")


def jacobian_product(ctx, l, sample):
    """J_{f_l} J_{g_l} for one sample, an n_l x n_l matrix."""
    _check_layer(ctx.network, l)
    return ctx.encoder_jacobian(l, sample) @ ctx.decoder_jacobian(l, sample)


def trace_condition(ctx, l):
    """Batch mean of tr(J_f J_g), computed without forming the product."""
    _check_layer(ctx.network, l)
    return float(
        np.mean([trace_product(ctx.encoder_jacobian(l, i), ctx.decoder_jacobian(l, i)) for i in range(ctx.size)])
    )


def psd_share(m, threshold=PSD_THRESHOLD):
    """Share of eigenvalues of (M + M^T)/2 that are >= threshold."""
    stack = np.asarray(m, dtype=np.float64)
    single = stack.ndim == 2
    if single:
        stack = stack[None]
    vals = batched_symmetric_eigenvalues(stack)
    shares = np.mean(vals >= threshold, axis=1)
    return float(shares[0]) if single else shares


def psd_proportion(ctx, l, chunk=64):
    """Batch mean of the non-negative eigenvalue share of sym(J_f J_g)."""
    _check_layer(ctx.network, l)
    enc, dec = ctx.network.encoder(l), ctx.network.decoder(l)
    df = jacobian_diagonals(enc, ctx.enc_caches[l - 1])
    dg = jacobian_diagonals(dec, ctx.dec_caches[l - 1])
    shares = []
    for start in range(0, ctx.size, chunk):
        jf = df[start : start + chunk, :, None] * enc.weight
        jg = dg[start : start + chunk, :, None] * dec.weight
        shares.append(psd_share(jf @ jg))
    return float(np.mean(np.concatenate(shares)))


def measure(network, inputs, layers):
    ctx = MeasurementContext(network, inputs)
    return [JacobianCondition(l, trace_condition(ctx, l), psd_proportion(ctx, l), ctx.size) for l in layers]


def monte_carlo_trace_check(m, n, rng):
    """Mean of e^T M e over n standard-normal draws, with its standard error."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {m.shape}")
    if n < 2:
        raise ValueError("need at least two draws")
    eps = rng.standard_normal((n, m.shape[0]))
    q = np.einsum("ni,ij,nj->n", eps, m, eps)
    return float(q.mean()), float(q.std(ddof=1) / np.sqrt(n))


def gn_direction_check(network, x, label, beta):
    """Largest deviation of DTP's Delta h_l from -beta J_{f_{l+1:L}}^{-1} dL/dh_L.

    Meant for linear networks with square invertible weights whose decoders
    invert the encoders, where the first-order relation is exact.
    """
    for l in range(1, network.depth + 1):
        w = network.encoder(l).weight
        if w.shape[0] != w.shape[1] or network.encoder(l).activation is not Activation.LINEAR:
            raise NonInvertible(f"encoder {l} is not a square linear map")
        if not np.isfinite(np.linalg.cond(w)) or np.linalg.cond(w) > 1e12:
            raise NonInvertible(f"encoder {l} weight is singular")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    labels = np.array([label])
    caches = network.forward(x)
    state = PropagationState(x, caches)
    h_out = state.h(network.depth)
    state.targets = [None] * (network.depth - 1) + [output_target(h_out, labels, beta)]
    propagate_targets_dtp(state, network)

    grad = softmax_residual(h_out, labels)[0]
    worst = 0.0
    chain = np.eye(network.widths[-1])
    for l in range(network.depth, 0, -1):
        # chain is J_{f_{l+1:L}} = W_L ... W_{l+1}
        predicted = -beta * np.linalg.solve(chain, grad)
        actual = (state.targets[l - 1] - state.h(l))[0]
        worst = max(worst, float(np.max(np.abs(actual - predicted))))
        chain = chain @ network.encoder(l).weight
    return worst


class ScalarBijection:
    """A strictly monotone scalar function on [lo, hi] with a bisection inverse."""

    def __init__(self, fn, lo=-10.0, hi=10.0, tol=1e-12):
        self.fn, self.lo, self.hi, self.tol = fn, float(lo), float(hi), tol
        self.increasing = fn(self.hi) > fn(self.lo)

    def __call__(self, x):
        return self.fn(x)

    def check_monotone(self, points=2001):
        xs = np.linspace(self.lo, self.hi, points)
        ys = np.array([self.fn(x) for x in xs])
        steps = np.diff(ys)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise InvalidBijection(f"function is not strictly monotone on [{self.lo}, {self.hi}]")
        return self

    def inverse(self, y):
        lo, hi = self.lo, self.hi
        f_lo, f_hi = self.fn(lo), self.fn(hi)
        if not min(f_lo, f_hi) <= y <= max(f_lo, f_hi):
            raise InvalidBijection(f"value {y} outside the image of [{lo}, {hi}]")
        sign = 1.0 if self.increasing else -1.0
        while hi - lo > self.tol:
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if sign * (self.fn(mid) - y) < 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def exact_difference_decoder(f_nu, g_mu, psi):
    """The decoder part g^nu fixed by difference correction.

    g^nu = id + f_nu^-1 o psi^-1 o g_mu^-1 - g_mu o psi^-1 o g_mu^-1
    """

    def g_nu(w):
        t = psi.inverse(g_mu.inverse(w))
        return w + f_nu.inverse(t) - g_mu(t)

    return g_nu


def exact_feedback_form_check(f_nu, g_mu, psi, probes):
    """Compare the exact-form target with the difference-corrected target.

    For each probe h_{l-1}: h_l = f_nu(h_{l-1}) and tau_l = psi(h_l).  The
    exact form gives tau_{l-1} = g_nu(g_mu(tau_l)); difference correction
    gives g_mu(tau_l) + h_{l-1} - g_mu(h_l).  Returns the largest gap.
    """
    for b in (f_nu, g_mu, psi):
        b.check_monotone()
    g_nu = exact_difference_decoder(f_nu, g_mu, psi)
    worst = 0.0
    for x in probes:
        if not f_nu.lo <= x <= f_nu.hi:
            raise InvalidBijection(f"probe {x} outside [{f_nu.lo}, {f_nu.hi}]")
        h = f_nu(x)
        tau = psi(h)
        exact = g_nu(g_mu(tau))
        corrected = g_mu(tau) + x - g_mu(h)
        worst = max(worst, abs(exact - corrected))
    return worst
