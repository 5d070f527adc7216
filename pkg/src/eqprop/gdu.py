"""Update-versus-gradient comparison: run both phase runners on one batch,
align their transient series, and score the agreement.

The property under test: each EP update series should mirror minus the
corresponding BPTT gradient series, element by element and step by step.
Scores:

    rmse            per-element relative L2 distance between the two time
                    series, averaged over the layer; 0 when both series of
                    an element vanish, 1 when exactly one vanishes
    sign_agreement  fraction of elements whose time-summed series agree in
                    sign (sign of 0 only matches 0)

sawtooth_check verifies the parity structure of fully connected chains
driven by an output-side error signal: the layer-n gradient series is
forced to zero at steps t with t + n odd, because information starting at
the output at t = 0 reaches layer n only on steps of matching parity, and
thereafter every second step stays silent (neighbors feed it only on the
opposite parity).  The EP side obeys the same pattern up to O(beta).
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import relax_free, run_bptt, run_ep_phase
from .models import Hyperparams, LayeredProtoModel
from .seeding import NS_CURVES, rng_for

__all__ = [
    "ProcessRecord",
    "SawtoothResult",
    "gdu_protocol",
    "rmse",
    "sign_agreement",
    "sawtooth_check",
    "export_record",
]


@dataclass
class ProcessRecord:
    """Aligned EP and minus-BPTT series for one batch.

    neural_*: layer name -> (K, d...) series, batch-averaged.
    param_*: group name -> (K, shape) series, batch-averaged.
    meta: run description (arch, setting, T, K, beta, epsilon, batch_size,
    free-phase residual).
    """

    meta: dict
    neural_ep: dict
    neural_bptt_neg: dict
    param_ep: dict
    param_bptt_neg: dict

    def layers(self) -> tuple:
        return tuple(self.neural_ep)

    def groups(self) -> tuple:
        return tuple(self.param_ep)


def _chunk_slices(batch: int, threads: int):
    bounds = np.linspace(0, batch, threads + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def gdu_protocol(model, params, x, y, hp: Hyperparams, threads: int = 1) -> ProcessRecord:
    """Relax to the fixed point, then run the nudged phase and truncated
    backprop over the same window and return their aligned series.

    threads > 1 splits the batch into that many contiguous chunks processed
    concurrently; chunk results are reduced in chunk order, so the outcome
    depends on the thread count but not on scheduling.
    """
    if threads < 1:
        raise ValueError(f"need threads >= 1, got {threads}")
    batch = x.shape[0]
    if batch < 1:
        raise ValueError("empty batch")
    model.validate_params(params)

    def one_chunk(sl):
        xc, yc = x[sl], y[sl]
        traj, residual = relax_free(model, params, xc, hp.T, keep=hp.K + 1)
        ep = run_ep_phase(model, params, traj[-1], xc, yc, hp.beta, hp.K)
        bp = run_bptt(model, params, traj, xc, yc, hp.K)
        return ep, bp, residual

    slices = _chunk_slices(batch, threads)
    if len(slices) == 1:
        results = [one_chunk(slices[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            results = list(pool.map(one_chunk, slices))

    layer_names = model.layer_names()
    group_names = model.param_names()
    neural_ep = {
        name: np.concatenate([r[0].neural_series[name] for r in results], axis=1)
        for name in layer_names
    }
    neural_bp = {
        name: np.concatenate([r[1].neural_series[name] for r in results], axis=1)
        for name in layer_names
    }
    param_ep, param_bp = {}, {}
    for name in group_names:
        acc_e = np.zeros_like(results[0][0].param_series[name])
        acc_b = np.zeros_like(results[0][1].param_series[name])
        for ep, bp, _ in results:
            acc_e += ep.param_series[name]
            acc_b += bp.param_series[name]
        param_ep[name] = acc_e / batch
        param_bp[name] = acc_b / batch
    residual = max(r[2] for r in results)

    meta = {
        "arch": model.arch,
        "setting": model.setting,
        "T": hp.T,
        "K": hp.K,
        "beta": hp.beta,
        "epsilon": getattr(model, "epsilon", None),
        "batch_size": batch,
        "residual": residual,
    }
    return ProcessRecord(
        meta,
        {k: v.mean(axis=1) for k, v in neural_ep.items()},
        {k: -v.mean(axis=1) for k, v in neural_bp.items()},
        param_ep,
        {k: -v for k, v in param_bp.items()},
    )


# ---------------------------------------------------------------------------
# scores


def rmse(f: np.ndarray, g: np.ndarray) -> float:
    """Mean over elements of ||f_e - g_e|| / max(||f_e||, ||g_e||), with
    ||.|| the root-mean-square over the leading time axis; an element with
    two vanishing series scores 0."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise ValueError(f"series shapes disagree: {f.shape} vs {g.shape}")
    if f.ndim < 1 or f.shape[0] < 1:
        raise ValueError("need a leading time axis of length >= 1")
    diff = np.sqrt(np.mean((f - g) ** 2, axis=0))
    denom = np.maximum(
        np.sqrt(np.mean(f * f, axis=0)), np.sqrt(np.mean(g * g, axis=0))
    )
    score = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    return float(np.mean(score))


def sign_agreement(f: np.ndarray, g: np.ndarray) -> float:
    """Fraction of elements whose time-summed series have equal sign."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise ValueError(f"series shapes disagree: {f.shape} vs {g.shape}")
    return float(np.mean(np.sign(f.sum(axis=0)) == np.sign(g.sum(axis=0))))


@dataclass
class SawtoothResult:
    applicable: bool
    passed: bool
    offenders: list
    reason: str = ""


def sawtooth_check(record: ProcessRecord, tol_scale: float = 10.0) -> SawtoothResult:
    """Verify the alternating-zero pattern of fully connected chains.

    Gradient entries at layer n, step t with (t + n) odd must vanish
    exactly; the matching EP entries must vanish up to O(beta) (bounded by
    tol_scale * beta * the layer's peak magnitude plus rounding slack).
    Only the prototypical fully connected chains carry the pattern; other
    architectures yield applicable=False.
    """
    if record.meta["setting"] != "proto" or any(
        not name.startswith("s") for name in record.layers()
    ):
        return SawtoothResult(
            False, True, [], "pattern only holds for fully connected chains"
        )
    beta = record.meta["beta"]
    offenders = []
    for n, name in enumerate(record.layers()):
        bp = record.neural_bptt_neg[name]
        ep = record.neural_ep[name]
        ep_tol = tol_scale * beta * float(np.abs(ep).max()) + 1e-12
        for t in range(bp.shape[0]):
            if (t + n) % 2 == 1:
                if np.abs(bp[t]).max() != 0.0:
                    offenders.append(("bptt", name, t))
                if np.abs(ep[t]).max() > ep_tol:
                    offenders.append(("ep", name, t))
    return SawtoothResult(True, not offenders, offenders)


# ---------------------------------------------------------------------------
# exports


def _fmt(v: float) -> str:
    return "%.17g" % v


def _pick_elements(n: int, seed: int, position: int, count: int = 5):
    rng = rng_for(seed, NS_CURVES, position)
    take = min(count, n)
    return sorted(int(i) for i in rng.choice(n, size=take, replace=False))


def export_record(record: ProcessRecord, out_dir: str, seed: int):
    """Write curves.csv (a seeded handful of per-element series) and
    summary.csv (per-layer scores).  Returns the two paths."""
    os.makedirs(out_dir, exist_ok=True)
    curves_path = os.path.join(out_dir, "curves.csv")
    summary_path = os.path.join(out_dir, "summary.csv")

    with open(curves_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "layer", "flat_index", "t", "delta_ep", "neg_grad_bptt"])
        position = 0
        for name in record.layers():
            ep, bp = record.neural_ep[name], record.neural_bptt_neg[name]
            k, n = ep.shape[0], int(np.prod(ep.shape[1:]))
            epf, bpf = ep.reshape(k, n), bp.reshape(k, n)
            for idx in _pick_elements(n, seed, position):
                for t in range(k):
                    w.writerow(
                        ["neuron", name, idx, t, _fmt(epf[t, idx]), _fmt(bpf[t, idx])]
                    )
            position += 1
        for name in record.groups():
            ep, bp = record.param_ep[name], record.param_bptt_neg[name]
            k, n = ep.shape[0], int(np.prod(ep.shape[1:]))
            epf, bpf = ep.reshape(k, n), bp.reshape(k, n)
            for idx in _pick_elements(n, seed, position):
                for t in range(k):
                    # parameter series are indexed 1..K
                    w.writerow(
                        ["synapse", name, idx, t + 1, _fmt(epf[t, idx]), _fmt(bpf[t, idx])]
                    )
            position += 1

    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "rmse", "sign_agreement", "n_elements"])
        for name in record.layers():
            ep, bp = record.neural_ep[name], record.neural_bptt_neg[name]
            w.writerow(
                [
                    name,
                    _fmt(rmse(ep, bp)),
                    _fmt(sign_agreement(ep, bp)),
                    int(np.prod(ep.shape[1:])),
                ]
            )
        for name in record.groups():
            ep, bp = record.param_ep[name], record.param_bptt_neg[name]
            w.writerow(
                [
                    name,
                    _fmt(rmse(ep, bp)),
                    _fmt(sign_agreement(ep, bp)),
                    int(np.prod(ep.shape[1:])),
                ]
            )

    return curves_path, summary_path
