"""Numpy fallback for the compiled kernel backend.

Every kernel accumulates in the same fixed order as the Cython version
(ascending reduction index, one multiply and one add rounding per term), so
the two backends produce bit-identical float64 results. The fixed order is
what makes the kernels testable against a naive triple-loop reference.

Inputs are assumed C-contiguous float64; callers in :mod:`pdmplab.numkit`
validate and coerce.
"""

import numpy as np

BACKEND_NAME = "python"


def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[i, j] = b[j] + sum_k w[j, k] * x[i, k], k ascending."""
    batch = x.shape[0]
    out = np.repeat(b[np.newaxis, :], batch, axis=0)
    for k in range(x.shape[1]):
        out += x[:, k, np.newaxis] * w[:, k]
    return out


def affine_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of an affine map given upstream grad_out.

    dx[i, k] = sum_j grad_out[i, j] * w[j, k]   (j ascending)
    dw[j, k] = sum_i grad_out[i, j] * x[i, k]   (i ascending)
    db[j]    = sum_i grad_out[i, j]             (i ascending)
    """
    batch, d_in = x.shape
    m = w.shape[0]
    dx = np.zeros((batch, d_in))
    for j in range(m):
        dx += grad_out[:, j, np.newaxis] * w[j, :]
    dw = np.zeros((m, d_in))
    db = np.zeros(m)
    for i in range(batch):
        dw += grad_out[i, :, np.newaxis] * x[i, :]
        db += grad_out[i, :]
    return dx, dw, db


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass-through where the forward input was > 0; zero elsewhere (and at 0)."""
    return np.where(x > 0.0, grad_out, 0.0)
