import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoaspect import autodiff as ad
from twoaspect.autodiff import Tensor, backward
from twoaspect.errors import ConfigError, ContractError
from twoaspect.smoothing import (
    THETA_MU_INIT,
    TemporalSmoother,
    filter_short_sequences,
    mu_from_theta,
    smooth_bidirectional,
    smooth_sequence,
)


def f64(x):
    return Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)


def test_init_gives_mu_one():
    assert TemporalSmoother(4).mu == pytest.approx(1.0, abs=1e-6)  # float32 storage
    assert float(mu_from_theta(f64(THETA_MU_INIT)).data) == pytest.approx(1.0, abs=1e-12)


def test_hand_recursion():
    out = smooth_sequence(f64([[0.0], [1.0]]), f64(1.0), f64([0.0]))
    np.testing.assert_allclose(out.data[:, 0], [0.0, 0.5])


def test_mu_to_zero_is_identity(rng):
    v = rng.normal(size=(8, 3))
    mu = mu_from_theta(f64(-40.0))
    np.testing.assert_allclose(smooth_sequence(f64(v), mu, f64(rng.normal(size=3))).data, v, atol=1e-12)
    np.testing.assert_allclose(smooth_bidirectional(f64(v), mu, f64(rng.normal(size=3))).data, v, atol=1e-12)


@given(st.floats(-3, 3), st.floats(0.01, 50), st.integers(2, 12))
def test_constant_fixed_point(c, mu, t):
    v = f64(np.full((t, 2), c))
    for fn in (smooth_sequence, smooth_bidirectional):
        np.testing.assert_allclose(fn(v, f64(mu), f64([c, c])).data, c, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.floats(0.01, 20))
def test_convex_hull(seed, mu):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(10, 3))
    f0 = rng.normal(size=3)
    lo = np.minimum(v.min(axis=0), f0)
    hi = np.maximum(v.max(axis=0), f0)
    for fn in (smooth_sequence, smooth_bidirectional):
        out = fn(f64(v), f64(mu), f64(f0)).data
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_linear_in_input_and_state(rng):
    v1, v2 = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    f1, f2 = rng.normal(size=2), rng.normal(size=2)
    mu = f64(0.7)
    lhs = smooth_sequence(f64(2 * v1 - v2), mu, f64(2 * f1 - f2)).data
    rhs = 2 * smooth_sequence(f64(v1), mu, f64(f1)).data - smooth_sequence(f64(v2), mu, f64(f2)).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize("t", [0, 1, 5])
@pytest.mark.parametrize("mu", [0.3, 1.0, 4.0])
def test_closed_form_state_gradient(t, mu):
    with ad.precision(np.float64):
        f_init = Tensor(np.zeros(1), requires_grad=True)
        out = smooth_sequence(f64(np.random.default_rng(0).normal(size=(8, 1))), f64(mu), f_init)
        backward(out[t].sum())
    assert float(f_init.grad[0]) == pytest.approx((mu / (1 + mu)) ** (t + 1), abs=1e-12)


def test_bidirectional_regression_value():
    out = smooth_bidirectional(f64([[0.0], [1.0]]), f64(1.0), f64([0.0]))
    np.testing.assert_allclose(out.data[:, 0], [0.125, 0.5])


def test_bidirectional_needs_two_frames():
    with pytest.raises(ContractError):
        smooth_bidirectional(f64([[1.0]]), f64(1.0), f64([0.0]))


def test_empty_sequence_rejected():
    with pytest.raises(ContractError):
        smooth_sequence(f64(np.zeros((0, 2))), f64(1.0), f64([0.0, 0.0]))


@pytest.mark.parametrize("n, kept", [(9, False), (10, True), (25, True)])
def test_filter_boundary(n, kept):
    assert filter_short_sequences([[0] * n]) == ([[0] * n] if kept else [])


def test_filter_empty_and_order():
    assert filter_short_sequences([]) == []
    vids = [[0] * 12, [0] * 3, [1] * 10]
    assert filter_short_sequences(vids) == [vids[0], vids[2]]


def test_smoother_modes(rng):
    v = Tensor(rng.normal(size=(5, 4)))
    assert TemporalSmoother(4, "none").forward(v) is v
    assert TemporalSmoother(4, "BTS").forward(v).shape == (5, 4)
    with pytest.raises(ConfigError):
        TemporalSmoother(4, "EMA")


def test_theta_receives_gradient(rng):
    sm = TemporalSmoother(3)
    backward((sm.forward(Tensor(rng.normal(size=(6, 3)))) ** 2.0).sum())
    assert sm.theta_mu.grad.shape == () and sm.theta_mu.grad != 0
    assert np.any(sm.f_init.grad)
