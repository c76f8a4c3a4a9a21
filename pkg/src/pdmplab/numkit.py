"""Dense float64 math, a counter-based PRNG, and a finite-difference oracle.

Matrices are plain C-contiguous float64 numpy arrays (row-major). The affine
and relu operations dispatch to the selected kernel backend, whose reductions
run in a fixed sequential order so results are reproducible bit-for-bit and
checkable against a naive triple-loop reference. Auxiliary reductions
(softmax row sums, means) use numpy's deterministic built-in reduction, which
is likewise stable across reruns in the same environment.
"""

from collections.abc import Callable, Sequence

import numpy as np

from . import kernels
from .errors import InputError, NumericError, ShapeError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0**-53


def _mix64(z: int) -> int:
    """SplitMix64 finalizer on a python int (64-bit wrapping)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def child_seed(seed: int, label: str) -> int:
    """Derive an independent stream seed for a named purpose.

    child = mix64(seed XOR fnv1a64(label)). Distinct labels give independent
    streams; the same (seed, label) always gives the same child, so consumers
    are decoupled from call order.
    """
    return _mix64((seed & _MASK64) ^ _fnv1a64(label))


def _mix_array(z: np.ndarray) -> np.ndarray:
    c30, c27, c31 = np.uint64(30), np.uint64(27), np.uint64(31)
    z = (z ^ (z >> c30)) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> c27)) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> c31)


class Rng:
    """Deterministic counter-based generator (SplitMix64 output stream).

    The i-th 64-bit draw is mix64(seed + (i+1) * golden_gamma) computed in
    wrapping uint64 arithmetic, i.e. the SplitMix64 sequence seeded at
    ``seed``. A fixed seed therefore pins the entire stream, and arbitrary
    blocks can be produced vectorized. Instances are single-owner: not safe
    to share across threads.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._count = 0

    def child(self, label: str) -> "Rng":
        """New independent generator for the given purpose label."""
        return Rng(child_seed(self.seed, label))

    def random_u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit draws."""
        idx = np.arange(n, dtype=np.uint64) + np.uint64(self._count + 1)
        self._count += n
        state = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        return _mix_array(state)

    def uniform(self, shape: int | tuple[int, ...]) -> np.ndarray:
        """Uniform float64 draws in [0, 1): (u64 >> 11) * 2**-53."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        bits = self.random_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) * _INV_2_53).reshape(shape)

    def normal(self, shape: int | tuple[int, ...]) -> np.ndarray:
        """Standard normal draws via Box-Muller on consecutive uniform pairs."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = self.random_u64(2 * pairs)
        # u1 in (0, 1] so log never sees 0; u2 in [0, 1).
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = (2.0 * np.pi) * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n): stable argsort of n raw draws."""
        return np.argsort(self.random_u64(n), kind="stable")


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched affine map: out[i, j] = sum_k w[j, k] * x[i, k] + b[j]."""
    x = as_matrix(x, "x")
    w = as_matrix(w, "w")
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1)
    if x.shape[1] != w.shape[1] or b.shape[0] != w.shape[0]:
        raise ShapeError(
            f"affine shape mismatch: x {x.shape} vs w {w.shape} vs b ({b.shape[0]},)"
        )
    return kernels.affine_forward(x, w, b)


def affine_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(dx, dw, db) for :func:`affine` given upstream grad_out."""
    x = as_matrix(x, "x")
    w = as_matrix(w, "w")
    grad_out = as_matrix(grad_out, "grad_out")
    if grad_out.shape != (x.shape[0], w.shape[0]) or x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"affine_backward shape mismatch: x {x.shape} vs w {w.shape} "
            f"vs grad_out {grad_out.shape}"
        )
    return kernels.affine_backward(x, w, grad_out)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return kernels.relu_forward(as_matrix(x, "x"))


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Upstream gradient where x > 0, zero elsewhere (zero at exactly 0)."""
    x = as_matrix(x, "x")
    grad_out = as_matrix(grad_out, "grad_out")
    if x.shape != grad_out.shape:
        raise ShapeError(f"relu_backward shape mismatch: x {x.shape} vs grad_out {grad_out.shape}")
    return kernels.relu_backward(x, grad_out)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_cross_entropy(
    logits: np.ndarray, labels: Sequence[int] | np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    Stabilized by per-row max subtraction. grad = (softmax - one_hot) / B,
    so gradient rows sum to zero.
    """
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels)
    batch, m = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} vs logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise InputError(f"labels must lie in [0, {m}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    labels = labels.astype(np.intp)
    row_max = np.max(logits, axis=1)
    shifted = logits - row_max[:, np.newaxis]
    exp = np.exp(shifted)
    denom = np.sum(exp, axis=1)
    log_denom = np.log(denom)
    rows = np.arange(batch)
    per_sample = log_denom - shifted[rows, labels]
    loss = float(np.add.reduce(per_sample) / batch)
    grad = exp / denom[:, np.newaxis]
    grad[rows, labels] -= 1.0
    grad /= batch
    return loss, grad


def finite_diff_grad(
    f: Callable[[np.ndarray], float], params: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    grad[k] = (f(p + eps*e_k) - f(p - eps*e_k)) / (2*eps). Used as the
    independent oracle for every analytic backward in the package.
    """
    if eps <= 0:
        raise InputError(f"eps must be positive, got {eps}")
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    grad = np.empty_like(params)
    work = params.copy()
    for k in range(params.size):
        orig = work[k]
        work[k] = orig + eps
        f_plus = float(f(work))
        work[k] = orig - eps
        f_minus = float(f(work))
        work[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at coordinate {k}")
        grad[k] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-b| / max(|a|, |b|, floor), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
