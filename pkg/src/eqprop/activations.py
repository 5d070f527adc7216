"""Scalar activation functions with analytic first and second derivatives.

Three activations are used by the models:

    tanh           sigma(x) = tanh(x)
    sigmoid        sigma(x) = 1 / (1 + exp(-4 (x - 1/2)))
    hard_sigmoid   sigma(x) = max(min(x, 1), 0)

"sigmoid" is the shifted, rescaled logistic above, not the textbook one.
hard_sigmoid has kinks at x = 0 and x = 1; its derivative is defined as 0
there, so a neuron saturated at either bound transmits no error signal.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Activation", "get_activation", "ACTIVATION_KINDS"]


class Activation:
    """Bundle of sigma, sigma' and sigma'' as vectorized callables."""

    def __init__(self, kind, value, deriv, second_deriv):
        self.kind = kind
        self.value = value
        self.deriv = deriv
        self.second_deriv = second_deriv

    def __repr__(self):
        return f"Activation({self.kind!r})"


def _tanh_value(x):
    return np.tanh(x)


def _tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_second(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _sigmoid_value(x):
    return 1.0 / (1.0 + np.exp(-4.0 * (np.asarray(x) - 0.5)))


def _sigmoid_deriv(x):
    s = _sigmoid_value(x)
    return 4.0 * s * (1.0 - s)


def _sigmoid_second(x):
    s = _sigmoid_value(x)
    return 16.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


def _hard_sigmoid_value(x):
    return np.clip(x, 0.0, 1.0)


def _hard_sigmoid_deriv(x):
    x = np.asarray(x)
    # 0 at the kinks x in {0, 1}: saturated neurons stay silent.
    return ((x > 0.0) & (x < 1.0)).astype(np.float64)


def _hard_sigmoid_second(x):
    return np.zeros_like(np.asarray(x, dtype=np.float64))


_TABLE = {
    "tanh": Activation("tanh", _tanh_value, _tanh_deriv, _tanh_second),
    "sigmoid": Activation("sigmoid", _sigmoid_value, _sigmoid_deriv, _sigmoid_second),
    "hard_sigmoid": Activation(
        "hard_sigmoid", _hard_sigmoid_value, _hard_sigmoid_deriv, _hard_sigmoid_second
    ),
}

ACTIVATION_KINDS = tuple(_TABLE)


def get_activation(kind: str) -> Activation:
    try:
        return _TABLE[kind]
    except KeyError:
        raise ValueError(
            f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}"
        ) from None
