"""Phase runners: free relaxation, the nudged phase with its transient
update series, and the backward recurrence through the free trajectory.

Conventions shared by the two series (t indexes nudged-phase steps for one
and backward steps through time for the other):

    neural, time step t        EP  (s^b_{t+1} - s^b_t) / beta_eff, t = 0..K-1
                               BP  grad_s(t) from the backward recurrence,
                                   t = 0..K-1 (grad_s(0) is the cost grad)
    parameter, time step t     EP  (dPhi/dtheta(s^b_t) - dPhi/dtheta(s^b_{t-1}))
                                   / beta_eff, t = 1..K
                               BP  vjp_param at slice T-t with grad_s(t-1),
                                   t = 1..K

The theorem under test says the EP series equals minus the BPTT series in
the limit of perfect convergence and small beta.  Totals are in-order sums
over the stored series, so the telescoping parameter total collapses to
(dPhi/dtheta(s^b_K) - dPhi/dtheta(s^b_0)) / beta_eff up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import NeuralState

__all__ = [
    "DivergenceError",
    "PhaseResult",
    "BackpropResult",
    "relax_free",
    "run_ep_phase",
    "run_bptt",
]

# states whose magnitude passes this are treated as numerically diverged
_BLOWUP = 1.0e6


class DivergenceError(RuntimeError):
    """State became non-finite or unbounded during a phase."""

    def __init__(self, phase: str, step: int, magnitude: float):
        self.phase = phase
        self.step = step
        self.magnitude = magnitude
        super().__init__(
            f"{phase} phase diverged at step {step}: max |state| = {magnitude:g}"
        )


def _check_state(state: NeuralState, phase: str, step: int) -> None:
    worst = 0.0
    for a in state.values().values():
        if not np.all(np.isfinite(a)):
            raise DivergenceError(phase, step, float("inf"))
        worst = max(worst, float(np.abs(a).max()))
    if worst > _BLOWUP:
        raise DivergenceError(phase, step, worst)


def relax_free(model, params, x, T: int, keep: int | None = None):
    """Iterate the free dynamics T steps from the zero state.

    Returns (trajectory, residual): trajectory holds the last `keep` slices
    (default 1, i.e. just s_T; pass K+1 to retain what the backward pass
    needs), oldest first.  residual is the final-step movement
    max |s_T - s_{T-1}|, infinity when T == 0.
    """
    if T < 0:
        raise ValueError(f"need T >= 0, got {T}")
    if keep is None:
        keep = 1
    if not 1 <= keep <= T + 1:
        raise ValueError(f"need 1 <= keep <= T+1, got keep={keep} for T={T}")
    state = model.zero_state(x.shape[0])
    trajectory = [state]
    residual = float("inf")
    for step in range(1, T + 1):
        new = model.step_free(params, trajectory[-1], x)
        _check_state(new, "free", step)
        if step == T:
            residual = new.diff_max(trajectory[-1])
        trajectory.append(new)
        if len(trajectory) > keep:
            del trajectory[0]
    return trajectory, residual


@dataclass
class PhaseResult:
    """Transient series of one nudged phase.

    neural_series: layer name -> (K, B, ...) array of per-step state
        movements divided by the effective nudging strength.
    param_series: group name -> (K, ...) array of per-step surrogate-
        gradient differences divided by the effective strength, summed over
        the batch.
    total_update: in-order time sum of param_series.
    final_state: s^beta_K.
    """

    neural_series: dict
    param_series: dict
    total_update: dict
    final_state: NeuralState


def run_ep_phase(model, params, free_state: NeuralState, x, y, beta: float, K: int) -> PhaseResult:
    """Run K nudged steps from the free fixed point and record the series."""
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    if beta <= 0:
        raise ValueError(f"need beta > 0, got {beta}")
    beta_eff = model.effective_beta(beta)

    neural = {name: [] for name in model.layer_names()}
    param = {name: [] for name in model.param_names()}
    state = free_state
    prev_phi = model.phi_param_grad(params, state, x)
    for t in range(K):
        new = model.step_nudged(params, state, x, y, beta)
        _check_state(new, "nudged", t + 1)
        old_vals, new_vals = state.values(), new.values()
        for name in neural:
            neural[name].append((new_vals[name] - old_vals[name]) / beta_eff)
        phi = model.phi_param_grad(params, new, x)
        for name in param:
            param[name].append((phi[name] - prev_phi[name]) / beta_eff)
        prev_phi = phi
        state = new

    neural_series = {k: np.stack(v) for k, v in neural.items()}
    param_series = {k: np.stack(v) for k, v in param.items()}
    total = {}
    for name, series in param_series.items():
        acc = np.zeros_like(series[0])
        for t in range(series.shape[0]):
            acc += series[t]
        total[name] = acc
    return PhaseResult(neural_series, param_series, total, state)


@dataclass
class BackpropResult:
    """Backward-recurrence series over the tail of the free trajectory.

    neural_series: layer name -> (K, B, ...), entry t = grad_s(t).
    param_series: group name -> (K, ...), entry index t-1 = grad_theta(t),
        batch-summed.
    total_grad: in-order time sum of param_series.
    """

    neural_series: dict
    param_series: dict
    total_grad: dict


def run_bptt(model, params, trajectory: list, x, y, K: int) -> BackpropResult:
    """Truncated backprop through the last K free steps.

    trajectory must hold the slices s_{T-K} .. s_T oldest first (K+1
    entries; longer lists use the tail).  Gradients refer to the proxy cost
    at the final slice.
    """
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    if len(trajectory) < K + 1:
        raise ValueError(
            f"trajectory holds {len(trajectory)} slices, need K+1 = {K + 1}"
        )

    grad_s = model.cost_grad(trajectory[-1], y)
    neural = {name: [grad_s[name]] for name in model.layer_names()}
    param = {name: [] for name in model.param_names()}
    for t in range(1, K + 1):
        slice_t = trajectory[-1 - t]
        gp = model.vjp_param(params, slice_t, x, grad_s)
        for name in param:
            param[name].append(gp[name])
        grad_s = model.vjp_state(params, slice_t, x, grad_s)
        if t <= K - 1:
            for name in neural:
                neural[name].append(grad_s[name])

    neural_series = {k: np.stack(v) for k, v in neural.items()}
    param_series = {k: np.stack(v) for k, v in param.items()}
    total = {}
    for name, series in param_series.items():
        acc = np.zeros_like(series[0])
        for t in range(series.shape[0]):
            acc += series[t]
        total[name] = acc
    return BackpropResult(neural_series, param_series, total)
