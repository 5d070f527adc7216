"""The four convergent-RNN architectures.

Every model defines a transition map F: the free dynamics iterate
s_{t+1} = F(x, s_t, theta) toward a fixed point, and the nudged dynamics
add a force on the output layer pulling it toward the target.  Layers are
labelled backward: s0 is the output, higher indices sit closer to the
input, and the clamped input x plays the role of the last layer.

Two settings:

* energy-based: F is exactly the state-gradient of the primitive function
      Phi(x, s) = (1-eps)/2 ||s||^2 + eps * sum_n sigma(s^n).W.sigma(s^(n+1))
  giving the leaky update s' = (1-eps) s + eps sigma'(s) * (W terms) and a
  symmetric state Jacobian.  The nudge adds eps*beta*(y - s0), so the
  effective nudging strength is beta*eps.

* prototypical: plain dynamics s^n' = sigma(W_n s^(n+1) + W_(n-1)^T s^(n-1))
  with tied weights; the parameter updates come from the surrogate
  Phi = sum_n s^n.W_n.s^(n+1) that ignores sigma, so update-vs-gradient
  agreement is approximate by design.  The nudge adds beta*(y - s0).

Each model exposes, besides the dynamics:

    cost / cost_grad      quadratic cost 1/2 ||s0 - y||^2 on the output
    phi_param_grad        dPhi/dtheta, the telescoping EP update ingredient
    vjp_state, vjp_param  exact transpose-Jacobian products of the true
                          one-step map (with sigma' and, for the leaky
                          rule, sigma'' terms), used by the BPTT recurrence

All states carry a leading batch axis.  phi_param_grad and vjp_param return
batch-summed tensors; divide by the batch size for means.  The same weight
tensor is used for the downstream and upstream direction of a connection
(tied weights; storage holds exactly one array per connection).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .activations import Activation, get_activation

__all__ = [
    "Hyperparams",
    "NeuralState",
    "ToyEnergyModel",
    "LayeredEnergyModel",
    "LayeredProtoModel",
    "ConvProtoModel",
    "make_model",
    "ARCHITECTURES",
]


@dataclass(frozen=True)
class Hyperparams:
    """Phase lengths and strengths: T free steps, K nudged steps, beta > 0,
    eps in (0, 1] for energy-based models (None otherwise)."""

    T: int
    K: int
    beta: float
    epsilon: float | None = None

    def __post_init__(self):
        if not self.T >= self.K >= 1:
            raise ValueError(f"need T >= K >= 1, got T={self.T}, K={self.K}")
        if not self.beta > 0:
            raise ValueError(f"need beta > 0, got {self.beta}")
        if self.epsilon is not None and not 0 < self.epsilon <= 1:
            raise ValueError(f"need 0 < epsilon <= 1, got {self.epsilon}")


@dataclass
class NeuralState:
    """One time slice of the dynamics.

    fc: per-layer activations s^n, each (B, d_n), output first.
    conv: feature-map stacks h^n, each (B, C, D, D), deepest first
          (empty for non-conv models).
    pool_ind: per conv stage, the argmax map recorded during the most
          recent downstream pass (int64, (B, C, Dp, Dp, 2)); consumed by
          the next step's upstream unpooling term.
    """

    fc: list
    conv: list = field(default_factory=list)
    pool_ind: list = field(default_factory=list)

    def values(self) -> dict:
        """Ordered name -> array view of the state's value layers."""
        out = {}
        for n, s in enumerate(self.fc):
            out[f"s{n}"] = s
        for m, h in enumerate(self.conv):
            out[f"h{m}"] = h
        return out

    @property
    def batch_size(self) -> int:
        return self.fc[0].shape[0]

    def copy(self) -> "NeuralState":
        return NeuralState(
            [s.copy() for s in self.fc],
            [h.copy() for h in self.conv],
            [i.copy() for i in self.pool_ind],
        )

    def max_abs(self) -> float:
        return max(float(np.abs(a).max()) for a in self.values().values())

    def diff_max(self, other: "NeuralState") -> float:
        """Infinity norm of the elementwise difference across all layers."""
        pairs = zip(self.values().values(), other.values().values())
        return max(float(np.abs(a - b).max()) for a, b in pairs)


def _zeros_dict(template: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in template.items()}


class _ModelBase:
    arch: str
    setting: str  # "energy" | "proto"
    act: Activation

    # -- contracts shared by all architectures ------------------------------

    def layer_names(self) -> tuple:
        raise NotImplementedError

    def param_names(self) -> tuple:
        raise NotImplementedError

    def param_shapes(self) -> dict:
        raise NotImplementedError

    def zero_state(self, batch: int) -> NeuralState:
        raise NotImplementedError

    def step(self, params, state, x, y=None, beta=0.0) -> NeuralState:
        raise NotImplementedError

    def step_free(self, params, state, x) -> NeuralState:
        """One synchronous update of all layers."""
        return self.step(params, state, x)

    def step_nudged(self, params, state, x, y, beta) -> NeuralState:
        """step_free plus the output-layer nudge toward y."""
        if beta <= 0:
            raise ValueError(f"nudged step needs beta > 0, got {beta}")
        return self.step(params, state, x, y=y, beta=beta)

    def effective_beta(self, beta: float) -> float:
        """Nudging strength as it enters the dynamics (beta*eps when the
        leaky energy-based rule scales the force by eps, else beta)."""
        return beta

    def cost(self, state: NeuralState, y: np.ndarray) -> float:
        """1/2 ||s0 - y||^2, summed over the batch."""
        s0 = state.fc[0]
        if s0.shape != y.shape:
            raise ops.DimensionError(f"cost: output {s0.shape} vs target {y.shape}")
        d = s0 - y
        return 0.5 * float(np.sum(d * d))

    def cost_grad(self, state: NeuralState, y: np.ndarray) -> dict:
        """Gradient of cost: (s0 - y) on the output layer, zero elsewhere."""
        s0 = state.fc[0]
        if s0.shape != y.shape:
            raise ops.DimensionError(f"cost_grad: output {s0.shape} vs target {y.shape}")
        g = _zeros_dict(state.values())
        g["s0"] = s0 - y
        return g

    def validate_params(self, params: dict) -> None:
        shapes = self.param_shapes()
        if set(params) != set(shapes):
            raise ops.DimensionError(
                f"{self.arch}: parameter groups {sorted(params)} != "
                f"expected {sorted(shapes)}"
            )
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ops.DimensionError(
                    f"{self.arch}: group {name} has shape {params[name].shape}, "
                    f"expected {shape}"
                )

    # -- EP / BPTT ingredients ----------------------------------------------

    def phi_param_grad(self, params, state, x) -> dict:
        raise NotImplementedError

    def vjp_state(self, params, state, x, v: dict) -> dict:
        raise NotImplementedError

    def vjp_param(self, params, state, x, v: dict) -> dict:
        raise NotImplementedError


def _clip01(a: np.ndarray) -> np.ndarray:
    return np.clip(a, 0.0, 1.0)


def _clip_mask(pre_clip: np.ndarray) -> np.ndarray:
    """Derivative of the [0,1] clip: 1 where the unclipped step output lands
    strictly inside (0, 1), else 0 (the clip absorbed the update there)."""
    return ((pre_clip > 0.0) & (pre_clip < 1.0)).astype(np.float64)


class ToyEnergyModel(_ModelBase):
    """Energy-based model with output, hidden and input neurons all
    connected to each other (no lateral connections within a group).

    Parameters: W01 (d0,d1) output-hidden, W0x (d0,dx) output-input,
    W1x (d1,dx) hidden-input.  Dynamics per population:

        s0' = (1-eps) s0 + eps sigma'(s0) * (W01 sigma(s1) + W0x sigma(x))
        s1' = (1-eps) s1 + eps sigma'(s1) * (W01^T sigma(s0) + W1x sigma(x))

    nudge: s0' += eps*beta*(y - s0).
    """

    setting = "energy"

    def __init__(self, d0=5, d1=50, dx=10, activation="tanh", epsilon=0.08, clip=False):
        self.arch = "toy"
        self.d0, self.d1, self.dx = d0, d1, dx
        self.act = get_activation(activation) if isinstance(activation, str) else activation
        self.epsilon = float(epsilon)
        self.clip = bool(clip)

    def layer_names(self):
        return ("s0", "s1")

    def param_names(self):
        return ("W01", "W0x", "W1x")

    def param_shapes(self):
        return {
            "W01": (self.d0, self.d1),
            "W0x": (self.d0, self.dx),
            "W1x": (self.d1, self.dx),
        }

    def zero_state(self, batch):
        return NeuralState(
            [np.zeros((batch, self.d0)), np.zeros((batch, self.d1))]
        )

    def _pre(self, params, state, x):
        """Interaction terms g^n = (W terms) entering each population."""
        sig = self.act.value
        s0, s1 = state.fc
        sx = sig(x)
        g0 = sig(s1) @ params["W01"].T + sx @ params["W0x"].T
        g1 = sig(s0) @ params["W01"] + sx @ params["W1x"].T
        return g0, g1

    def step(self, params, state, x, y=None, beta=0.0):
        eps = self.epsilon
        dsig = self.act.deriv
        s0, s1 = state.fc
        g0, g1 = self._pre(params, state, x)
        n0 = (1 - eps) * s0 + eps * dsig(s0) * g0
        n1 = (1 - eps) * s1 + eps * dsig(s1) * g1
        if beta:
            n0 = n0 + eps * beta * (y - s0)
        if self.clip:
            n0, n1 = _clip01(n0), _clip01(n1)
        return NeuralState([n0, n1])

    def effective_beta(self, beta):
        return beta * self.epsilon

    def phi_param_grad(self, params, state, x):
        sig = self.act.value
        s0, s1 = state.fc
        a0, a1, ax = sig(s0), sig(s1), sig(x)
        eps = self.epsilon
        return {
            "W01": eps * (a0.T @ a1),
            "W0x": eps * (a0.T @ ax),
            "W1x": eps * (a1.T @ ax),
        }

    def _masked(self, state, v, g):
        """Cotangents with the clip derivative folded in; the mask lives at
        the unclipped free-step output, where the clip actually acts."""
        if not self.clip:
            return v["s0"], v["s1"]
        eps = self.epsilon
        dsig = self.act.deriv
        s0, s1 = state.fc
        m0 = _clip_mask((1 - eps) * s0 + eps * dsig(s0) * g[0])
        m1 = _clip_mask((1 - eps) * s1 + eps * dsig(s1) * g[1])
        return v["s0"] * m0, v["s1"] * m1

    def vjp_state(self, params, state, x, v):
        eps = self.epsilon
        dsig, d2sig = self.act.deriv, self.act.second_deriv
        s0, s1 = state.fc
        g0, g1 = self._pre(params, state, x)
        v0, v1 = self._masked(state, v, (g0, g1))
        u0, u1 = dsig(s0) * v0, dsig(s1) * v1
        r0 = ((1 - eps) + eps * d2sig(s0) * g0) * v0 + eps * dsig(s0) * (u1 @ params["W01"].T)
        r1 = ((1 - eps) + eps * d2sig(s1) * g1) * v1 + eps * dsig(s1) * (u0 @ params["W01"])
        return {"s0": r0, "s1": r1}

    def vjp_param(self, params, state, x, v):
        eps = self.epsilon
        sig, dsig = self.act.value, self.act.deriv
        s0, s1 = state.fc
        v0, v1 = self._masked(state, v, self._pre(params, state, x))
        u0, u1 = dsig(s0) * v0, dsig(s1) * v1
        a0, a1, ax = sig(s0), sig(s1), sig(x)
        return {
            "W01": eps * (u0.T @ a1 + a0.T @ u1),
            "W0x": eps * (u0.T @ ax),
            "W1x": eps * (u1.T @ ax),
        }


class LayeredEnergyModel(_ModelBase):
    """Energy-based fully connected chain; neurons connect only between
    consecutive layers.  sizes lists extents backward: (d0, ..., d_{N-1})
    with d0 the output and d_{N-1} the clamped input extent.

        s^n' = (1-eps) s^n + eps sigma'(s^n) *
               (W_n sigma(s^(n+1)) + W_(n-1)^T sigma(s^(n-1)))

    with sigma(x) feeding the deepest hidden layer; nudge eps*beta*(y-s0).
    """

    setting = "energy"

    def __init__(self, sizes, activation="tanh", epsilon=0.08, clip=False):
        if len(sizes) < 2:
            raise ValueError(f"need at least (output, input) sizes, got {sizes}")
        self.arch = f"eb-{len(sizes) - 2}h"
        self.sizes = tuple(int(d) for d in sizes)
        self.n_free = len(sizes) - 1  # layers that evolve (input is clamped)
        self.act = get_activation(activation) if isinstance(activation, str) else activation
        self.epsilon = float(epsilon)
        self.clip = bool(clip)

    def layer_names(self):
        return tuple(f"s{n}" for n in range(self.n_free))

    def param_names(self):
        return tuple(f"W{n}{n + 1}" for n in range(self.n_free))

    def param_shapes(self):
        return {
            f"W{n}{n + 1}": (self.sizes[n], self.sizes[n + 1])
            for n in range(self.n_free)
        }

    def zero_state(self, batch):
        return NeuralState([np.zeros((batch, d)) for d in self.sizes[:-1]])

    def _weights(self, params):
        return [params[f"W{n}{n + 1}"] for n in range(self.n_free)]

    def _pre(self, params, state, x):
        sig = self.act.value
        w = self._weights(params)
        a = [sig(s) for s in state.fc] + [sig(x)]
        g = []
        for n in range(self.n_free):
            t = a[n + 1] @ w[n].T
            if n >= 1:
                t = t + a[n - 1] @ w[n - 1]
            g.append(t)
        return g

    def step(self, params, state, x, y=None, beta=0.0):
        eps = self.epsilon
        dsig = self.act.deriv
        g = self._pre(params, state, x)
        new = [
            (1 - eps) * s + eps * dsig(s) * gn for s, gn in zip(state.fc, g)
        ]
        if beta:
            new[0] = new[0] + eps * beta * (y - state.fc[0])
        if self.clip:
            new = [_clip01(s) for s in new]
        return NeuralState(new)

    def effective_beta(self, beta):
        return beta * self.epsilon

    def phi_param_grad(self, params, state, x):
        sig = self.act.value
        a = [sig(s) for s in state.fc] + [sig(x)]
        eps = self.epsilon
        return {
            f"W{n}{n + 1}": eps * (a[n].T @ a[n + 1]) for n in range(self.n_free)
        }

    def _masked(self, state, v, g):
        names = self.layer_names()
        if not self.clip:
            return [v[n] for n in names]
        eps = self.epsilon
        dsig = self.act.deriv
        masks = [
            _clip_mask((1 - eps) * s + eps * dsig(s) * gn)
            for s, gn in zip(state.fc, g)
        ]
        return [v[n] * m for n, m in zip(names, masks)]

    def vjp_state(self, params, state, x, v):
        eps = self.epsilon
        dsig, d2sig = self.act.deriv, self.act.second_deriv
        w = self._weights(params)
        g = self._pre(params, state, x)
        vm = self._masked(state, v, g)
        u = [dsig(s) * vn for s, vn in zip(state.fc, vm)]
        out = {}
        for n in range(self.n_free):
            r = ((1 - eps) + eps * d2sig(state.fc[n]) * g[n]) * vm[n]
            t = 0.0
            if n + 1 < self.n_free:
                t = u[n + 1] @ w[n].T
            if n >= 1:
                t = t + u[n - 1] @ w[n - 1]
            if n + 1 < self.n_free or n >= 1:
                r = r + eps * dsig(state.fc[n]) * t
            out[f"s{n}"] = r
        return out

    def vjp_param(self, params, state, x, v):
        eps = self.epsilon
        sig, dsig = self.act.value, self.act.deriv
        a = [sig(s) for s in state.fc] + [sig(x)]
        vm = self._masked(state, v, self._pre(params, state, x))
        u = [dsig(s) * vn for s, vn in zip(state.fc, vm)]
        out = {}
        for n in range(self.n_free):
            g = u[n].T @ a[n + 1]
            if n + 1 < self.n_free:
                g = g + a[n].T @ u[n + 1]
            out[f"W{n}{n + 1}"] = eps * g
        return out


class LayeredProtoModel(_ModelBase):
    """Prototypical fully connected chain with tied weights:

        s^n' = sigma(W_n s^(n+1) + W_(n-1)^T s^(n-1)),   s^(N-1) = x

    nudge: s0' += beta*(y - s0), applied outside sigma.  Parameter updates
    use the surrogate Phi = sum_n s^n . W_n . s^(n+1) (sigma ignored), so
    phi_param_grad blocks are plain outer products of consecutive layers.
    """

    setting = "proto"

    def __init__(self, sizes, activation="tanh"):
        if len(sizes) < 2:
            raise ValueError(f"need at least (output, input) sizes, got {sizes}")
        self.arch = f"p-{len(sizes) - 2}h"
        self.sizes = tuple(int(d) for d in sizes)
        self.n_free = len(sizes) - 1
        self.act = get_activation(activation) if isinstance(activation, str) else activation
        self.clip = False

    def layer_names(self):
        return tuple(f"s{n}" for n in range(self.n_free))

    def param_names(self):
        return tuple(f"W{n}{n + 1}" for n in range(self.n_free))

    def param_shapes(self):
        return {
            f"W{n}{n + 1}": (self.sizes[n], self.sizes[n + 1])
            for n in range(self.n_free)
        }

    def zero_state(self, batch):
        return NeuralState([np.zeros((batch, d)) for d in self.sizes[:-1]])

    def _weights(self, params):
        return [params[f"W{n}{n + 1}"] for n in range(self.n_free)]

    def _pre(self, params, state, x):
        w = self._weights(params)
        a = list(state.fc) + [x]
        g = []
        for n in range(self.n_free):
            t = a[n + 1] @ w[n].T
            if n >= 1:
                t = t + a[n - 1] @ w[n - 1]
            g.append(t)
        return g

    def step(self, params, state, x, y=None, beta=0.0):
        sig = self.act.value
        g = self._pre(params, state, x)
        new = [sig(gn) for gn in g]
        if beta:
            new[0] = new[0] + beta * (y - state.fc[0])
        return NeuralState(new)

    def phi_param_grad(self, params, state, x):
        a = list(state.fc) + [x]
        return {f"W{n}{n + 1}": a[n].T @ a[n + 1] for n in range(self.n_free)}

    def vjp_state(self, params, state, x, v):
        dsig = self.act.deriv
        w = self._weights(params)
        g = self._pre(params, state, x)
        u = [dsig(gn) * v[f"s{n}"] for n, gn in enumerate(g)]
        out = {}
        for n in range(self.n_free):
            r = np.zeros_like(state.fc[n])
            if n + 1 < self.n_free:
                r = r + u[n + 1] @ w[n].T
            if n >= 1:
                r = r + u[n - 1] @ w[n - 1]
            out[f"s{n}"] = r
        return out

    def vjp_param(self, params, state, x, v):
        dsig = self.act.deriv
        g = self._pre(params, state, x)
        a = list(state.fc) + [x]
        u = [dsig(gn) * v[f"s{n}"] for n, gn in enumerate(g)]
        out = {}
        for n in range(self.n_free):
            t = u[n].T @ a[n + 1]
            if n + 1 < self.n_free:
                t = t + a[n].T @ u[n + 1]
            out[f"W{n}{n + 1}"] = t
        return out


class ConvProtoModel(_ModelBase):
    """Prototypical convolutional architecture: conv-pool stages feeding a
    fully connected output layer, input clamped.

    Backward indexing: s0 is the (B, n_out) output layer; h0 is the deepest
    feature stack; h_{M-1} sits next to the input.  Stage m applies the
    filter Wconv_m to the layer above (h_{m+1}, or x for the last stage),
    pools with the stored-argmax max pool, and the upstream direction
    un-pools with the *previous step's* indices before a flipped-kernel
    transpose convolution:

        s0'  = sigma(Wfc . flat(h0))                       [+ beta (y - s0)]
        h0'  = sigma(P(Wconv_0 * h1) + unflat(Wfc^T s0))
        h_m' = sigma(P(Wconv_m * h_{m+1}) +
                     Wconv_{m-1}~ * P^{-1}(h_{m-1}, ind_{m-1}))

    ind_m is recorded while computing P(Wconv_m * .) and carried in the
    state; at the first nudged step the final free-phase indices are
    reused, matching the stored-index convention.

    Parameter updates come from Phi = s0.Wfc.flat(h0) + sum_m h_m . P(Wconv_m
    * h_{m+1}); its kernel blocks follow the unpool-then-kernel-grad rule
    with indices recomputed at the evaluated state.
    """

    setting = "proto"

    def __init__(
        self,
        input_shape=(1, 28, 28),
        conv_channels=(32, 64),
        filter_size=5,
        pool_size=2,
        n_out=10,
        activation="hard_sigmoid",
    ):
        self.arch = "p-conv"
        self.act = get_activation(activation) if isinstance(activation, str) else activation
        self.clip = False
        self.input_shape = tuple(input_shape)
        self.n_out = int(n_out)
        self.spec = ops.ConvSpec(filter_size, padding=0, pool_size=pool_size)

        # walk from the input down to the deepest stack to fix extents;
        # conv_channels is listed input-side first (stage M-1 ... would be
        # conv_channels[0]), matching "32 then 64 feature maps" for MNIST
        chans = [self.input_shape[0]] + list(conv_channels)
        d = self.input_shape[1]
        if self.input_shape[1] != self.input_shape[2]:
            raise ops.DimensionError(f"input must be square, got {input_shape}")
        extents = []
        for c in conv_channels:
            z = self.spec.out_extent(d)
            if z % pool_size:
                raise ops.DimensionError(
                    f"pre-pool extent {z} not divisible by pool size {pool_size}"
                )
            d = z // pool_size
            extents.append(d)
        self.n_stages = len(conv_channels)
        # conv state layers backward: h0 deepest ... h_{M-1} next to input
        self.conv_shapes = [
            (chans[self.n_stages - m], extents[self.n_stages - 1 - m])
            for m in range(self.n_stages)
        ]
        self.flat_dim = self.conv_shapes[0][0] * self.conv_shapes[0][1] ** 2

    def layer_names(self):
        return ("s0",) + tuple(f"h{m}" for m in range(self.n_stages))

    def param_names(self):
        return ("Wfc01",) + tuple(f"Wconv{m}{m + 1}" for m in range(self.n_stages))

    def param_shapes(self):
        shapes = {"Wfc01": (self.n_out, self.flat_dim)}
        chans = [c for c, _ in self.conv_shapes] + [self.input_shape[0]]
        f = self.spec.filter_size
        for m in range(self.n_stages):
            shapes[f"Wconv{m}{m + 1}"] = (chans[m], chans[m + 1], f, f)
        return shapes

    def zero_state(self, batch):
        fc = [np.zeros((batch, self.n_out))]
        conv = [np.zeros((batch, c, d, d)) for c, d in self.conv_shapes]
        # all-zero stacks pool with all-(0,0) indices, consistent with the
        # first-occurrence tie break on a constant window
        ind = [
            np.zeros((batch, c, d, d, 2), dtype=np.int64) for c, d in self.conv_shapes
        ]
        return NeuralState(fc, conv, ind)

    def _above(self, state, x, m):
        """Layer feeding stage m from the input side: h_{m+1} or x."""
        return state.conv[m + 1] if m + 1 < self.n_stages else x

    def _down_pre(self, params, state, x, m):
        """Pre-pool map Z_m = Wconv_m * (layer above)."""
        return ops.conv2d_b(params[f"Wconv{m}{m + 1}"], self._above(state, x, m), self.spec)

    def step(self, params, state, x, y=None, beta=0.0):
        sig = self.act.value
        psz = self.spec.pool_size
        s0 = state.fc[0]
        wfc = params["Wfc01"]

        pooled, new_ind = [], []
        for m in range(self.n_stages):
            p, ind = ops.maxpool_b(self._down_pre(params, state, x, m), psz)
            pooled.append(p)
            new_ind.append(ind)

        new_s0 = sig(ops.flatten_b(state.conv[0]) @ wfc.T)
        if beta:
            new_s0 = new_s0 + beta * (y - s0)

        new_conv = []
        for m in range(self.n_stages):
            pre = pooled[m]
            if m == 0:
                pre = pre + ops.unflatten_b(s0 @ wfc, state.conv[0].shape[1:])
            else:
                up = ops.inverse_pool_b(state.conv[m - 1], state.pool_ind[m - 1], psz)
                pre = pre + ops.transpose_conv_b(params[f"Wconv{m - 1}{m}"], up, self.spec)
            new_conv.append(sig(pre))

        return NeuralState([new_s0], new_conv, new_ind)

    def phi_param_grad(self, params, state, x):
        psz = self.spec.pool_size
        out = {"Wfc01": state.fc[0].T @ ops.flatten_b(state.conv[0])}
        for m in range(self.n_stages):
            _, ind = ops.maxpool_b(self._down_pre(params, state, x, m), psz)
            up = ops.inverse_pool_b(state.conv[m], ind, psz)
            out[f"Wconv{m}{m + 1}"] = ops.kernel_grad_b(up, self._above(state, x, m), self.spec)
        return out

    def _pres(self, params, state, x):
        """Pre-activations of every layer plus the fresh downstream argmax
        maps, all at the given slice (for Jacobian evaluation)."""
        sig = self.act.value
        psz = self.spec.pool_size
        wfc = params["Wfc01"]
        a = ops.flatten_b(state.conv[0]) @ wfc.T
        pres, fresh = [], []
        for m in range(self.n_stages):
            p, ind = ops.maxpool_b(self._down_pre(params, state, x, m), psz)
            if m == 0:
                p = p + ops.unflatten_b(state.fc[0] @ wfc, state.conv[0].shape[1:])
            else:
                up = ops.inverse_pool_b(state.conv[m - 1], state.pool_ind[m - 1], psz)
                p = p + ops.transpose_conv_b(params[f"Wconv{m - 1}{m}"], up, self.spec)
            pres.append(p)
            fresh.append(ind)
        return a, pres, fresh

    def vjp_state(self, params, state, x, v):
        dsig = self.act.deriv
        psz = self.spec.pool_size
        wfc = params["Wfc01"]
        a, pres, fresh = self._pres(params, state, x)
        u_s = dsig(a) * v["s0"]
        u = [dsig(pres[m]) * v[f"h{m}"] for m in range(self.n_stages)]

        out = {"s0": ops.flatten_b(u[0]) @ wfc.T}
        for m in range(self.n_stages):
            r = np.zeros_like(state.conv[m])
            if m == 0:
                r = r + ops.unflatten_b(u_s @ wfc, state.conv[0].shape[1:])
            else:
                # downstream neighbor h_{m-1} read this layer through
                # P(Wconv_{m-1} * .) with the fresh argmax of that map
                up = ops.inverse_pool_b(u[m - 1], fresh[m - 1], psz)
                r = r + ops.transpose_conv_b(params[f"Wconv{m - 1}{m}"], up, self.spec)
            if m + 1 < self.n_stages:
                # upstream neighbor h_{m+1} read this layer through the
                # stored-index unpool and transpose conv; its adjoint is a
                # plain convolution followed by sampling at the stored map
                conv = ops.conv2d_b(params[f"Wconv{m}{m + 1}"], u[m + 1], self.spec)
                r = r + ops.pool_sample_b(conv, state.pool_ind[m], psz)
            out[f"h{m}"] = r
        return out

    def vjp_param(self, params, state, x, v):
        dsig = self.act.deriv
        psz = self.spec.pool_size
        wfc = params["Wfc01"]
        a, pres, fresh = self._pres(params, state, x)
        u_s = dsig(a) * v["s0"]
        u = [dsig(pres[m]) * v[f"h{m}"] for m in range(self.n_stages)]

        out = {
            "Wfc01": u_s.T @ ops.flatten_b(state.conv[0])
            + state.fc[0].T @ ops.flatten_b(u[0])
        }
        for m in range(self.n_stages):
            g = ops.kernel_grad_b(
                ops.inverse_pool_b(u[m], fresh[m], psz), self._above(state, x, m), self.spec
            )
            if m + 1 < self.n_stages:
                up = ops.inverse_pool_b(state.conv[m], state.pool_ind[m], psz)
                tspec = ops.ConvSpec(
                    self.spec.filter_size, self.spec.transpose_padding, psz
                )
                g = g + ops.flip_kernel(ops.kernel_grad_b(u[m + 1], up, tspec))
            out[f"Wconv{m}{m + 1}"] = g
        return out


# ---------------------------------------------------------------------------
# architecture registry

_MNIST_IN = 784
_HIDDEN = 512
_N_CLASSES = 10

ARCHITECTURES = ("toy", "eb-1h", "eb-2h", "eb-3h", "p-1h", "p-2h", "p-3h", "p-conv")


def make_model(
    architecture: str,
    activation: str | None = None,
    epsilon: float | None = None,
    clip: bool = False,
):
    """Build a model by architecture id.

    eb-Nh / p-Nh are 784-512x N-10 chains; toy is the 5-50-10 all-to-all
    model; p-conv is the 1x28x28 -> 32 -> 64 conv-pool stack with a 10-way
    fully connected readout.  activation defaults to tanh (hard_sigmoid for
    p-conv); epsilon defaults to 0.08 for energy-based models.
    """
    if architecture not in ARCHITECTURES:
        raise ValueError(
            f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}"
        )
    if architecture == "toy":
        return ToyEnergyModel(
            activation=activation or "tanh",
            epsilon=0.08 if epsilon is None else epsilon,
            clip=clip,
        )
    if architecture == "p-conv":
        return ConvProtoModel(activation=activation or "hard_sigmoid")
    kind, depth = architecture.split("-")
    n_hidden = int(depth[:-1])
    sizes = (_N_CLASSES,) + (_HIDDEN,) * n_hidden + (_MNIST_IN,)
    if kind == "eb":
        return LayeredEnergyModel(
            sizes,
            activation=activation or "tanh",
            epsilon=0.08 if epsilon is None else epsilon,
            clip=clip,
        )
    return LayeredProtoModel(sizes, activation=activation or "tanh")
