"""Activation values and their hand-coded first/second derivatives."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqprop.activations import ACTIVATION_KINDS, get_activation

# grid avoiding the hard_sigmoid kinks at 0 and 1
GRID = np.array([-2.0, -0.7, -0.31, 0.11, 0.42, 0.58, 0.93, 1.4, 2.6])


def central(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_kinds_complete():
    assert set(ACTIVATION_KINDS) == {"tanh", "sigmoid", "hard_sigmoid"}
    with pytest.raises(ValueError):
        get_activation("relu")


def test_tanh_values():
    act = get_activation("tanh")
    assert act.value(0.0) == 0.0
    assert abs(act.value(1.0) - np.tanh(1.0)) < 1e-15
    assert act.deriv(0.0) == 1.0


def test_sigmoid_is_shifted_steep_logistic():
    act = get_activation("sigmoid")
    x = GRID
    expected = 1.0 / (1.0 + np.exp(-4.0 * (x - 0.5)))
    np.testing.assert_allclose(act.value(x), expected, rtol=0, atol=1e-15)
    assert abs(act.value(0.5) - 0.5) < 1e-15
    assert abs(act.deriv(0.5) - 1.0) < 1e-15  # slope 4*s*(1-s) = 4*0.25


def test_hard_sigmoid_clamps():
    act = get_activation("hard_sigmoid")
    x = np.array([-1.0, 0.0, 0.25, 1.0, 2.0])
    np.testing.assert_array_equal(act.value(x), [0.0, 0.0, 0.25, 1.0, 1.0])
    np.testing.assert_array_equal(act.deriv(x), [0.0, 0.0, 1.0, 0.0, 0.0])
    np.testing.assert_array_equal(act.second_deriv(x), np.zeros(5))


@pytest.mark.parametrize("kind", ACTIVATION_KINDS)
def test_first_derivative_matches_difference_quotient(kind):
    act = get_activation(kind)
    h = 1e-6
    fd = central(act.value, GRID, h)
    np.testing.assert_allclose(act.deriv(GRID), fd, rtol=0, atol=1e-6)


@pytest.mark.parametrize("kind", ACTIVATION_KINDS)
def test_second_derivative_matches_difference_quotient(kind):
    act = get_activation(kind)
    h = 1e-5
    fd = (act.value(GRID + h) - 2 * act.value(GRID) + act.value(GRID - h)) / h**2
    np.testing.assert_allclose(act.second_deriv(GRID), fd, rtol=0, atol=1e-4)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(sorted(ACTIVATION_KINDS)),
    st.floats(min_value=-3.0, max_value=3.0, allow_nan=False),
)
def test_derivatives_consistent_anywhere_smooth(kind, x):
    act = get_activation(kind)
    if kind == "hard_sigmoid" and (abs(x) < 1e-3 or abs(x - 1.0) < 1e-3):
        return  # kink neighborhood, difference quotient is meaningless
    h = 1e-6
    fd = central(act.value, np.float64(x), h)
    assert abs(act.deriv(np.float64(x)) - fd) < 1e-5


def test_tanh_second_derivative_identity():
    # d/dx sech^2 = -2 sech^2 tanh
    act = get_activation("tanh")
    x = GRID
    np.testing.assert_allclose(
        act.second_deriv(x), -2.0 * act.deriv(x) * np.tanh(x), rtol=0, atol=1e-15
    )


def test_arrays_preserve_shape_and_dtype():
    act = get_activation("sigmoid")
    x = np.linspace(-1, 2, 12).reshape(3, 4)
    for fn in (act.value, act.deriv, act.second_deriv):
        out = fn(x)
        assert out.shape == x.shape
        assert out.dtype == np.float64
