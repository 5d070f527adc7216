"""Dense-tensor math: linear algebra and the convolution/pooling operator set.

All tensors are C-order float64 numpy arrays.  The convolution family uses
one of two interchangeable backends selected at import time: the compiled
Cython kernels when the extension built, else the pure-numpy fallback.
Set EQPROP_BACKEND=python or EQPROP_BACKEND=c to force one.

Spatial conventions (square inputs and filters, stride fixed to 1 for
convolution and to the pool size for pooling):

    conv2d         out extent Do = D + 2P - F + 1
    transpose_conv convolution with the flipped kernel, padded Pt = F-1-P,
                   which recovers the pre-convolution extent
    flip_kernel    Wt[ci,co,r,s] = W[co,ci,F-1-r,F-1-s]   (0-based)
    maxpool        filter size == stride == pool_size; ind stores the
                   in-window argmax (r*,s*), ties to the first occurrence
                   in row-major window order
    inverse_pool   routes each pooled value to its stored argmax position,
                   zeros elsewhere
    pool_sample    samples at the stored positions (adjoint of inverse_pool)
    kernel_grad    gradient of <G, conv2d(W, X)> with respect to W

Functions with a `_b` suffix take a leading batch axis; the unsuffixed
forms are the single-tensor contracts and simply wrap them.  Everything is
pure (inputs never mutated) and deterministic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py

__all__ = [
    "DimensionError",
    "CorruptionError",
    "ConvSpec",
    "backend_name",
    "available_backends",
    "set_backend",
    "matmul",
    "outer",
    "gdot",
    "flatten",
    "unflatten",
    "flatten_b",
    "unflatten_b",
    "flip_kernel",
    "conv2d",
    "transpose_conv",
    "kernel_grad",
    "maxpool",
    "inverse_pool",
    "pool_sample",
    "conv2d_b",
    "transpose_conv_b",
    "kernel_grad_b",
    "maxpool_b",
    "inverse_pool_b",
    "pool_sample_b",
]


class DimensionError(ValueError):
    """Shape or extent mismatch between operands."""


class CorruptionError(ValueError):
    """An index map carries values outside its pooling window."""


# ---------------------------------------------------------------------------
# backend selection

try:
    from . import _kernels_c
except ImportError:
    _kernels_c = None

_BACKENDS = {"python": _kernels_py}
if _kernels_c is not None:
    _BACKENDS["c"] = _kernels_c


# Measured preference per public operation (benchmarks/bench_kernels.py):
# the vectorized numpy paths win the big gather contractions, the compiled
# loops win scatter-style padded convolution and all pooling/index routing.
_AUTO_PREFER = {
    "conv2d_b": "python",
    "transpose_conv_b": "c",
    "kernel_grad_b": "python",
    "maxpool_b": "c",
    "inverse_pool_b": "c",
    "pool_sample_b": "c",
}


def _initial_backend():
    forced = os.environ.get("EQPROP_BACKEND", "").strip().lower()
    if forced:
        if forced not in ("python", "c", "auto"):
            raise ValueError(
                f"EQPROP_BACKEND={forced!r} is not valid; use 'python', 'c', or 'auto'"
            )
        if forced == "c" and "c" not in _BACKENDS:
            raise ImportError(
                "EQPROP_BACKEND=c requested but the compiled kernels are not built"
            )
        return forced
    return "auto" if "c" in _BACKENDS else "python"


_ACTIVE = _initial_backend()


def backend_name() -> str:
    """Active kernel mode: 'c', 'python', or the per-op mix 'auto'."""
    return _ACTIVE


def available_backends() -> tuple:
    """The pure single-implementation backends that are importable."""
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    """Switch the kernel backend (used by tests and benchmarks).

    'auto' routes each operation to its measured-faster implementation
    and is valid whenever at least the numpy kernels exist.
    """
    global _ACTIVE
    if name not in _BACKENDS and name != "auto":
        raise ValueError(
            f"backend {name!r} not available; have {available_backends() + ('auto',)}"
        )
    _ACTIVE = name


def _k(op: str):
    if _ACTIVE != "auto":
        return _BACKENDS[_ACTIVE]
    preferred = _AUTO_PREFER[op]
    return _BACKENDS.get(preferred, _BACKENDS["python"])


# ---------------------------------------------------------------------------
# conv geometry


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one convolution-pooling stage.

    filter_size: square filter extent F (convolution stride is fixed to 1).
    padding: zero padding P applied to both spatial axes, 0 <= P <= F-1.
    pool_size: pooling filter size == pooling stride.
    """

    filter_size: int
    padding: int = 0
    pool_size: int = 2

    def __post_init__(self):
        if self.filter_size < 1:
            raise DimensionError(f"filter_size must be >= 1, got {self.filter_size}")
        if not 0 <= self.padding <= self.filter_size - 1:
            raise DimensionError(
                f"padding must be in [0, F-1] = [0, {self.filter_size - 1}], "
                f"got {self.padding}"
            )
        if self.pool_size < 1:
            raise DimensionError(f"pool_size must be >= 1, got {self.pool_size}")

    @property
    def transpose_padding(self) -> int:
        """Padding of the flipped-kernel convolution: Pt = F - 1 - P."""
        return self.filter_size - 1 - self.padding

    def out_extent(self, d: int) -> int:
        """Spatial extent after convolution: D + 2P - F + 1 (must be >= 1)."""
        out = d + 2 * self.padding - self.filter_size + 1
        if out < 1:
            raise DimensionError(
                f"conv output extent {out} < 1 for input extent {d}, "
                f"filter {self.filter_size}, padding {self.padding}"
            )
        return out


# ---------------------------------------------------------------------------
# dense linear algebra (BLAS-backed plumbing)


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """C[i,j] = sum_k A[i,k] B[k,j]."""
    a, b = _as_f64(a), _as_f64(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    return a @ b


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """M[i,j] = u[i] v[j]."""
    u, v = _as_f64(u), _as_f64(v)
    if u.ndim != 1 or v.ndim != 1:
        raise DimensionError(f"outer needs rank-1 operands, got {u.shape}, {v.shape}")
    return np.outer(u, v)


def gdot(a: np.ndarray, b: np.ndarray) -> float:
    """Sum over all indices of the elementwise product (any equal shapes)."""
    a, b = _as_f64(a), _as_f64(b)
    if a.shape != b.shape:
        raise DimensionError(f"gdot shapes disagree: {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major flattening to rank 1."""
    return _as_f64(x).reshape(-1)


def unflatten(v: np.ndarray, shape) -> np.ndarray:
    """Inverse of flatten; errors if the element counts disagree."""
    v = _as_f64(v)
    shape = tuple(shape)
    if v.size != int(np.prod(shape)):
        raise DimensionError(f"cannot unflatten {v.size} values into shape {shape}")
    return v.reshape(shape)


def flatten_b(x: np.ndarray) -> np.ndarray:
    """Batched flatten: (B, ...) -> (B, prod(...))."""
    x = _as_f64(x)
    return x.reshape(x.shape[0], -1)


def unflatten_b(v: np.ndarray, shape) -> np.ndarray:
    """Batched unflatten: (B, n) -> (B, *shape)."""
    v = _as_f64(v)
    shape = tuple(shape)
    if v.shape[1:] != (int(np.prod(shape)),):
        raise DimensionError(f"cannot unflatten {v.shape} into batched shape {shape}")
    return v.reshape((v.shape[0],) + shape)


# ---------------------------------------------------------------------------
# convolution family (batched forms dispatch to the active backend)


def _check_kernel(w: np.ndarray) -> np.ndarray:
    w = _as_f64(w)
    if w.ndim != 4:
        raise DimensionError(f"kernel must be rank-4 (Co,Ci,F,F), got {w.shape}")
    if w.shape[2] != w.shape[3]:
        raise DimensionError(f"kernel must be spatially square, got {w.shape}")
    return w


def flip_kernel(w: np.ndarray) -> np.ndarray:
    """Wt[ci,co,r,s] = W[co,ci,F-1-r,F-1-s]; an involution up to transpose."""
    w = _check_kernel(w)
    return np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])


def conv2d_b(w: np.ndarray, x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Batched convolution: W (Co,Ci,F,F), X (B,Ci,D,D) -> (B,Co,Do,Do)."""
    w, x = _check_kernel(w), _as_f64(x)
    if x.ndim != 4:
        raise DimensionError(f"conv input must be rank-4 (B,Ci,D,D), got {x.shape}")
    if x.shape[2] != x.shape[3]:
        raise DimensionError(f"conv input must be spatially square, got {x.shape}")
    if w.shape[2] != spec.filter_size:
        raise DimensionError(
            f"kernel extent {w.shape[2]} != spec filter_size {spec.filter_size}"
        )
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"channel mismatch: kernel {w.shape} expects {w.shape[1]} input "
            f"channels, input has {x.shape[1]}"
        )
    spec.out_extent(x.shape[2])
    return _k("conv2d_b").conv2d_batch(w, x, spec.padding)


def transpose_conv_b(w: np.ndarray, y: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Convolution with the flipped kernel, padded F-1-P; adjoint of conv2d_b."""
    w, y = _check_kernel(w), _as_f64(y)
    if y.ndim != 4:
        raise DimensionError(f"input must be rank-4 (B,Co,D,D), got {y.shape}")
    if y.shape[1] != w.shape[0]:
        raise DimensionError(
            f"channel mismatch: kernel {w.shape} produces {w.shape[0]} channels, "
            f"adjoint input has {y.shape[1]}"
        )
    tspec = ConvSpec(spec.filter_size, spec.transpose_padding, spec.pool_size)
    tspec.out_extent(y.shape[2])
    return _k("transpose_conv_b").conv2d_batch(flip_kernel(w), y, tspec.padding)


def kernel_grad_b(g: np.ndarray, x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Gradient of <G, conv2d_b(W, X)> with respect to W; batch-summed."""
    g, x = _as_f64(g), _as_f64(x)
    if g.ndim != 4 or x.ndim != 4:
        raise DimensionError(f"kernel_grad needs rank-4 operands, got {g.shape}, {x.shape}")
    if g.shape[0] != x.shape[0]:
        raise DimensionError(f"batch mismatch: {g.shape[0]} vs {x.shape[0]}")
    if spec.out_extent(x.shape[2]) != g.shape[2]:
        raise DimensionError(
            f"cotangent extent {g.shape[2]} does not match conv output "
            f"{spec.out_extent(x.shape[2])}"
        )
    return _k("kernel_grad_b").kernel_grad_batch(g, x, spec.padding, spec.filter_size)


def maxpool_b(x: np.ndarray, f: int):
    """Batched max pooling with filter size == stride == f."""
    x = _as_f64(x)
    if x.ndim != 4 or x.shape[2] != x.shape[3]:
        raise DimensionError(f"maxpool input must be (B,C,D,D), got {x.shape}")
    if x.shape[2] % f != 0:
        raise DimensionError(
            f"spatial extent {x.shape[2]} not divisible by pool size {f}"
        )
    return _k("maxpool_b").maxpool_batch(x, f)


def _check_ind(ind: np.ndarray, y_shape, f: int) -> np.ndarray:
    ind = np.ascontiguousarray(ind, dtype=np.int64)
    if ind.shape != tuple(y_shape) + (2,):
        raise DimensionError(
            f"index map shape {ind.shape} does not match pooled shape {y_shape}"
        )
    if ind.size and (ind.min() < 0 or ind.max() >= f):
        raise CorruptionError(
            f"index map holds positions outside the {f}x{f} window "
            f"(min {ind.min()}, max {ind.max()})"
        )
    return ind


def inverse_pool_b(y: np.ndarray, ind: np.ndarray, f: int) -> np.ndarray:
    """Up-sample: pooled values placed at their stored argmax positions."""
    y = _as_f64(y)
    if y.ndim != 4:
        raise DimensionError(f"inverse_pool input must be (B,C,Dp,Dp), got {y.shape}")
    ind = _check_ind(ind, y.shape, f)
    return _k("inverse_pool_b").inverse_pool_batch(y, ind, f)


def pool_sample_b(z: np.ndarray, ind: np.ndarray, f: int) -> np.ndarray:
    """Sample Z at the stored argmax positions; the adjoint of inverse_pool_b."""
    z = _as_f64(z)
    if z.ndim != 4 or z.shape[2] % f != 0:
        raise DimensionError(f"pool_sample input must be (B,C,Dp*f,Dp*f), got {z.shape}")
    dp = z.shape[2] // f
    ind = _check_ind(ind, (z.shape[0], z.shape[1], dp, dp), f)
    return _k("pool_sample_b").pool_sample_batch(z, ind, f)


# unbatched wrappers: the single-tensor contracts


def conv2d(w: np.ndarray, x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """W (Co,Ci,F,F), X (Ci,D,D) -> (Co,Do,Do)."""
    x = _as_f64(x)
    if x.ndim != 3:
        raise DimensionError(f"conv input must be rank-3 (Ci,D,D), got {x.shape}")
    return conv2d_b(w, x[None], spec)[0]


def transpose_conv(w: np.ndarray, y: np.ndarray, spec: ConvSpec) -> np.ndarray:
    y = _as_f64(y)
    if y.ndim != 3:
        raise DimensionError(f"input must be rank-3 (Co,D,D), got {y.shape}")
    return transpose_conv_b(w, y[None], spec)[0]


def kernel_grad(g: np.ndarray, x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    g, x = _as_f64(g), _as_f64(x)
    if g.ndim != 3 or x.ndim != 3:
        raise DimensionError(f"kernel_grad needs rank-3 operands, got {g.shape}, {x.shape}")
    return kernel_grad_b(g[None], x[None], spec)


def maxpool(x: np.ndarray, f: int):
    x = _as_f64(x)
    if x.ndim != 3:
        raise DimensionError(f"maxpool input must be (C,D,D), got {x.shape}")
    y, ind = maxpool_b(x[None], f)
    return y[0], ind[0]


def inverse_pool(y: np.ndarray, ind: np.ndarray, f: int) -> np.ndarray:
    y = _as_f64(y)
    if y.ndim != 3:
        raise DimensionError(f"inverse_pool input must be (C,Dp,Dp), got {y.shape}")
    ind = np.ascontiguousarray(ind, dtype=np.int64)
    return inverse_pool_b(y[None], ind[None], f)[0]


def pool_sample(z: np.ndarray, ind: np.ndarray, f: int) -> np.ndarray:
    z = _as_f64(z)
    if z.ndim != 3:
        raise DimensionError(f"pool_sample input must be (C,D,D), got {z.shape}")
    ind = np.ascontiguousarray(ind, dtype=np.int64)
    return pool_sample_b(z[None], ind[None], f)[0]
