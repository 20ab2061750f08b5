import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import linear_network, numeric_jacobian, random_network, random_widths, rel_error
from tprop.diagnostics import (
    MeasurementContext,
    ScalarBijection,
    exact_difference_decoder,
    exact_feedback_form_check,
    gn_direction_check,
    jacobian_product,
    measure,
    monte_carlo_trace_check,
    psd_proportion,
    psd_share,
    trace_condition,
)
from tprop.errors import DimensionMismatch, InvalidBijection, NonInvertible
from tprop.linalg import orthogonal_init
from tprop.network import Activation, layer_apply


def _random_invertible(rng, n):
    q = orthogonal_init(n, n, rng)
    return q * rng.uniform(0.5, 2.0, n)


# Jacobian products


def test_inverse_decoder_gives_identity_product():
    rng = np.random.default_rng(0)
    w = _random_invertible(rng, 4)
    ctx = MeasurementContext(linear_network([w], [np.linalg.inv(w)]), rng.standard_normal((3, 4)))
    np.testing.assert_allclose(jacobian_product(ctx, 1, 0), np.eye(4), atol=1e-12)
    assert trace_condition(ctx, 1) == pytest.approx(4.0, abs=1e-12)
    assert psd_proportion(ctx, 1) == 1.0


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_transposed_decoder_gives_gram_trace(sign):
    rng = np.random.default_rng(1)
    w = rng.standard_normal((3, 5))
    ctx = MeasurementContext(linear_network([w], [sign * w.T]), rng.standard_normal((4, 5)))
    np.testing.assert_allclose(jacobian_product(ctx, 1, 2), sign * w @ w.T, rtol=1e-14)
    assert trace_condition(ctx, 1) == pytest.approx(sign * np.sum(w**2), rel=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_jacobian_product_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, random_widths(rng, 2))
    x = rng.standard_normal((4, net.widths[0]))
    ctx = MeasurementContext(net, x)
    for l in (1, 2):
        h_prev, h = ctx.enc_caches[l - 1].inputs[1], ctx.enc_caches[l - 1].outputs[1]
        jf = numeric_jacobian(lambda v: layer_apply(net.encoder(l), v[None]).outputs[0], h_prev)
        jg = numeric_jacobian(lambda v: layer_apply(net.decoder(l), v[None]).outputs[0], h)
        assert rel_error(jacobian_product(ctx, l, 1), jf @ jg) < 1e-5


@pytest.mark.parametrize("hidden", [Activation.TANH, Activation.TANH_BN])
@pytest.mark.parametrize("seed", range(10))
def test_trace_condition_agrees_with_explicit_product(hidden, seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, random_widths(rng, 3), hidden=hidden)
    ctx = MeasurementContext(net, rng.standard_normal((6, net.widths[0])))
    for l in range(1, 4):
        explicit = np.mean([np.trace(jacobian_product(ctx, l, i)) for i in range(6)])
        assert trace_condition(ctx, l) == pytest.approx(explicit, abs=1e-10)
        shares = [psd_share(jacobian_product(ctx, l, i)) for i in range(6)]
        assert psd_proportion(ctx, l, chunk=4) == pytest.approx(np.mean(shares), abs=1e-15)


def test_psd_share_examples():
    assert psd_share(np.eye(3)) == 1.0
    assert psd_share(-np.eye(3)) == 0.0
    assert psd_share(np.diag([1.0, -1.0])) == 0.5
    assert psd_share(np.zeros((2, 2))) == 1.0
    np.testing.assert_array_equal(psd_share(np.stack([np.eye(2), -np.eye(2)])), [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_psd_share_invariant_under_orthogonal_conjugation(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    p = orthogonal_init(n, n, rng)
    # nudge eigenvalues away from the threshold so rounding cannot flip them
    sym = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.where(np.abs(vals) < 1e-6, 1.0, vals)
    m = vecs @ np.diag(vals) @ vecs.T
    assert psd_share(p @ m @ p.T) == psd_share(m)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_quadratic_form_depends_only_on_symmetric_part(n, seed):
    rng = np.random.default_rng(seed)
    m, e = rng.standard_normal((n, n)), rng.standard_normal(n)
    full, sym = e @ m @ e, e @ (0.5 * (m + m.T)) @ e
    assert full == pytest.approx(sym, rel=1e-12, abs=1e-12)


def test_measure_reports_every_layer():
    rng = np.random.default_rng(3)
    net = random_network(rng, [5, 4, 4, 3], hidden=Activation.TANH_BN)
    conds = measure(net, rng.standard_normal((8, 5)), [1, 3])
    assert [c.layer for c in conds] == [1, 3]
    assert all(0.0 <= c.psd_proportion <= 1.0 and c.samples == 8 for c in conds)
    with pytest.raises(DimensionMismatch):
        measure(net, rng.standard_normal((8, 5)), [4])


# Monte-Carlo trace identity


def test_monte_carlo_examples():
    rng = np.random.default_rng(0)
    est, se = monte_carlo_trace_check(np.eye(2), 100000, rng)
    assert abs(est - 2.0) <= 4 * se
    est, se = monte_carlo_trace_check(np.diag([1.0, -1.0]), 100000, rng)
    assert abs(est) <= 4 * se
    m = rng.standard_normal((6, 6))
    est, se = monte_carlo_trace_check(m, 100000, rng)
    assert abs(est - np.trace(m)) <= 4 * se


def test_monte_carlo_preconditions():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionMismatch):
        monte_carlo_trace_check(np.ones((2, 3)), 10, rng)
    with pytest.raises(ValueError):
        monte_carlo_trace_check(np.eye(2), 1, rng)


# Gauss-Newton direction


def test_gn_identity_chain():
    net = linear_network([np.eye(3)] * 3, [np.eye(3)] * 3)
    assert gn_direction_check(net, np.array([0.1, -0.4, 0.2]), 1, 0.5) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_gn_two_layer_inverse(seed):
    rng = np.random.default_rng(seed)
    w2 = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    net = linear_network([np.eye(3), w2], [np.eye(3), np.linalg.inv(w2)])
    assert gn_direction_check(net, rng.standard_normal(3), 2, 0.3) <= 1e-10


def test_gn_orthogonal_transpose_chain():
    rng = np.random.default_rng(4)
    ws = [orthogonal_init(4, 4, rng) for _ in range(4)]
    net = linear_network(ws, [w.T for w in ws])
    assert gn_direction_check(net, rng.standard_normal(4), 0, 0.2) <= 1e-10


def test_gn_rejects_singular_or_rectangular():
    singular = linear_network([np.array([[1.0, 2.0], [2.0, 4.0]])], [np.eye(2)])
    with pytest.raises(NonInvertible):
        gn_direction_check(singular, np.ones(2), 0, 0.1)
    rect = linear_network([np.ones((2, 3))], [np.ones((3, 2))])
    with pytest.raises(NonInvertible):
        gn_direction_check(rect, np.ones(3), 0, 0.1)


# exact feedback form on scalar bijections


def test_bijection_inverse_roundtrip():
    b = ScalarBijection(lambda x: x + np.tanh(x)).check_monotone()
    for x in np.linspace(-9.0, 9.0, 13):
        assert b.inverse(b(x)) == pytest.approx(x, abs=1e-10)
    dec = ScalarBijection(lambda x: -3.0 * x)
    assert dec.inverse(6.0) == pytest.approx(-2.0, abs=1e-10)


def test_bijection_rejects_non_monotone_and_out_of_range():
    with pytest.raises(InvalidBijection):
        ScalarBijection(lambda x: x * x).check_monotone()
    with pytest.raises(InvalidBijection):
        ScalarBijection(lambda x: x, -1.0, 1.0).inverse(2.0)


def test_identity_triple_has_zero_deviation():
    ident = ScalarBijection(lambda x: x)
    assert exact_feedback_form_check(ident, ident, ident, np.linspace(-3, 3, 7)) <= 1e-11


def test_linear_triple_matches_closed_form():
    a, b, c = 1.7, 0.6, 0.3
    f = ScalarBijection(lambda x: a * x)
    g = ScalarBijection(lambda w: b * w, -50.0, 50.0)
    psi = ScalarBijection(lambda h: h + c, -50.0, 50.0)
    g_nu = exact_difference_decoder(f, g, psi)
    for w in (-2.0, 0.0, 0.7, 3.1):
        assert g_nu(w) == pytest.approx(w + (1 / a - b) * (w / b - c), abs=1e-10)
    assert exact_feedback_form_check(f, g, psi, np.linspace(-4, 4, 9)) <= 1e-8


def test_nonlinear_triple_example():
    f = ScalarBijection(lambda x: x + np.tanh(x))
    g = ScalarBijection(lambda w: 2 * w + 0.1 * np.tanh(w), -30.0, 30.0)
    psi = ScalarBijection(lambda h: h - 0.05, -30.0, 30.0)
    assert exact_feedback_form_check(f, g, psi, np.linspace(-5, 5, 21)) <= 1e-8


def test_probe_outside_domain_is_rejected():
    ident = ScalarBijection(lambda x: x, -1.0, 1.0)
    with pytest.raises(InvalidBijection):
        exact_feedback_form_check(ident, ident, ident, [2.0])
