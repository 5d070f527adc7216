"""Optimization harness: initialization, the two training algorithms, the
error-rate evaluator, and binary checkpoints.

Both algorithms share the forward schedule (T free steps from the zero
state, window K): one applies the nudged-phase update

    theta <- theta + lr * (sum_t update series) / batch

the other descends the truncated gradient

    theta <- theta - lr * (sum_t gradient series) / batch

Learning rates are per parameter group, listed output side first, matching
the group order of param_names().

Runs are replayable from (seed, epoch) alone: initialization and the
per-epoch shuffles draw from namespaced seed paths rather than a shared
stream, so resuming from a checkpoint replays the exact batch sequence the
uninterrupted run would have seen.
"""

from __future__ import annotations

import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import relax_free, run_bptt, run_ep_phase
from .models import ConvProtoModel, make_model
from .seeding import NS_INIT, NS_SHUFFLE, rng_for

__all__ = [
    "TrainConfig",
    "CheckpointError",
    "ArchitectureMismatchError",
    "glorot_init",
    "init_params",
    "shape_input",
    "train",
    "evaluate",
    "checkpoint_save",
    "checkpoint_load",
    "write_history",
]

ALGORITHMS = ("ep", "bptt")


@dataclass(frozen=True)
class TrainConfig:
    """One training run, fully determined together with the datasets."""

    arch: str
    algorithm: str
    T: int
    K: int
    beta: float
    learning_rates: tuple
    epochs: int
    batch_size: int
    seed: int
    epsilon: float | None = None
    activation: str | None = None
    clip: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.epochs < 0:
            raise ValueError(f"need epochs >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"need batch_size >= 1, got {self.batch_size}")
        object.__setattr__(self, "learning_rates", tuple(float(r) for r in self.learning_rates))

    def build_model(self):
        model = make_model(self.arch, self.activation, self.epsilon, self.clip)
        rates = self.learning_rates
        names = model.param_names()
        if len(rates) != len(names):
            raise ValueError(
                f"{self.arch} has {len(names)} parameter groups {names}, "
                f"got {len(rates)} learning rates"
            )
        return model, dict(zip(names, rates))


def glorot_init(shape, rng) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); spatial taps
    count toward both fans for rank-4 kernels."""
    shape = tuple(shape)
    if len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 4:
        rf = shape[2] * shape[3]
        fan_out, fan_in = shape[0] * rf, shape[1] * rf
    else:
        raise ValueError(f"glorot_init expects rank-2 or rank-4 shapes, got {shape}")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(model, seed: int) -> dict:
    """Independent per-group draws; adding or removing a group never shifts
    another group's values."""
    return {
        name: glorot_init(shape, rng_for(seed, NS_INIT, position))
        for position, (name, shape) in enumerate(model.param_shapes().items())
    }


def shape_input(model, x: np.ndarray) -> np.ndarray:
    """Present flat examples to the model (conv stacks get (B,C,D,D))."""
    if isinstance(model, ConvProtoModel):
        return x.reshape((x.shape[0],) + model.input_shape)
    return x


def evaluate(model, params, dataset, T: int, batch_size: int, threads: int = 1) -> float:
    """Fraction of examples whose output-layer argmax misses the label
    argmax after T free steps (0.0 on an empty dataset)."""
    n = len(dataset)
    if n == 0:
        return 0.0
    starts = list(range(0, n, batch_size))

    def count_errors(start):
        x = shape_input(model, dataset.x[start : start + batch_size])
        y = dataset.y[start : start + batch_size]
        traj, _ = relax_free(model, params, x, T)
        pred = np.argmax(traj[-1].fc[0], axis=1)
        return int(np.sum(pred != np.argmax(y, axis=1)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errors = sum(pool.map(count_errors, starts))
    else:
        errors = sum(count_errors(s) for s in starts)
    return errors / n


def train(
    config: TrainConfig,
    train_set,
    test_set,
    initial_params: dict | None = None,
    start_epoch: int = 0,
    threads: int = 1,
    log=None,
):
    """Run epochs start_epoch+1 .. config.epochs; returns (params, history).

    history rows are dicts with epoch, train_error, test_error and
    wall_seconds (time spent inside this call, cumulative across its
    epochs).  Passing initial_params resumes; epoch numbering and batch
    order replay exactly as in an uninterrupted run.
    """
    model, rates = config.build_model()
    if initial_params is None:
        params = init_params(model, config.seed)
    else:
        model.validate_params(initial_params)
        params = {k: v.copy() for k, v in initial_params.items()}

    history = []
    t0 = time.perf_counter()
    for epoch in range(start_epoch + 1, config.epochs + 1):
        order = rng_for(config.seed, NS_SHUFFLE, epoch).permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            x = shape_input(model, train_set.x[idx])
            y = train_set.y[idx]
            b = len(idx)
            traj, _ = relax_free(model, params, x, config.T, keep=config.K + 1)
            if config.algorithm == "ep":
                phase = run_ep_phase(
                    model, params, traj[-1], x, y, config.beta, config.K
                )
                for name, lr in rates.items():
                    if lr:
                        params[name] = params[name] + (lr / b) * phase.total_update[name]
            else:
                back = run_bptt(model, params, traj, x, y, config.K)
                for name, lr in rates.items():
                    if lr:
                        params[name] = params[name] - (lr / b) * back.total_grad[name]
        row = {
            "epoch": epoch,
            "train_error": evaluate(
                model, params, train_set, config.T, config.batch_size, threads
            ),
            "test_error": evaluate(
                model, params, test_set, config.T, config.batch_size, threads
            ),
            "wall_seconds": time.perf_counter() - t0,
        }
        history.append(row)
        if log is not None:
            log(row)
    return params, history


def write_history(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("epoch,train_error,test_error,wall_seconds\n")
        for r in rows:
            fh.write(
                "%d,%.17g,%.17g,%.17g\n"
                % (r["epoch"], r["train_error"], r["test_error"], r["wall_seconds"])
            )


# ---------------------------------------------------------------------------
# checkpoints: 8-byte signature, little-endian lengths, JSON header, raw
# float64 group buffers in header order

_MAGIC = b"EQPROPC1"


class CheckpointError(ValueError):
    """Checkpoint bytes are not a readable parameter snapshot."""


class ArchitectureMismatchError(CheckpointError):
    """Checkpoint holds parameters for a different architecture."""


def checkpoint_save(path: str, config: TrainConfig, params: dict, epoch: int) -> None:
    model, _ = config.build_model()
    model.validate_params(params)
    groups = [
        {"name": name, "shape": list(params[name].shape)}
        for name in model.param_names()
    ]
    header = {
        "config": asdict(config),
        "epoch": int(epoch),
        "groups": groups,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", 1, len(blob)))
        fh.write(blob)
        for g in groups:
            fh.write(np.ascontiguousarray(params[g["name"]], dtype="<f8").tobytes())


def checkpoint_load(path: str, expect_config: TrainConfig | None = None):
    """Read (header, params).  With expect_config, group names and shapes
    must match that configuration's model."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise CheckpointError(
            f"{path}: bytes 0..7 are {raw[:8]!r}, not the checkpoint signature {_MAGIC!r}"
        )
    if len(raw) < 16:
        raise CheckpointError(f"{path}: truncated before the header lengths")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != 1:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated inside the JSON header")
    try:
        header = json.loads(raw[16 : 16 + hlen])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: header is not valid JSON ({exc})") from exc
    params, pos = {}, 16 + hlen
    for g in header["groups"]:
        shape = tuple(g["shape"])
        nbytes = int(np.prod(shape)) * 8
        if len(raw) < pos + nbytes:
            raise CheckpointError(
                f"{path}: buffer for group {g['name']} needs bytes "
                f"{pos}..{pos + nbytes - 1}, file has {len(raw)}"
            )
        params[g["name"]] = (
            np.frombuffer(raw[pos : pos + nbytes], dtype="<f8").reshape(shape).copy()
        )
        pos += nbytes
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes after buffers")
    if expect_config is not None:
        model, _ = expect_config.build_model()
        want = {name: tuple(shape) for name, shape in model.param_shapes().items()}
        got = {g["name"]: tuple(g["shape"]) for g in header["groups"]}
        if want != got:
            raise ArchitectureMismatchError(
                f"{path}: checkpoint groups {sorted(got)} with shapes "
                f"{[got[k] for k in sorted(got)]} do not fit architecture "
                f"{expect_config.arch}"
            )
    return header, params
