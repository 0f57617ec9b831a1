"""finite-difference verification of analytic gradients"""

from typing import Callable, List, Sequence

import numpy as np

from .tensor import Tensor


def numerical_gradient(f: Callable[..., Tensor],
                       arrays: Sequence[np.ndarray],
                       index: int,
                       h: float = 1e-4) -> np.ndarray:
    """central differences of scalar f with respect to arrays[index]"""

    arrays = [np.array(a, dtype=float) for a in arrays]
    x = arrays[index]
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        saved = x[i]
        x[i] = saved + h
        up = f(*map(Tensor, arrays)).item()
        x[i] = saved - h
        down = f(*map(Tensor, arrays)).item()
        x[i] = saved
        grad[i] = (up - down) / (2 * h)
    return grad


def analytic_gradients(f: Callable[..., Tensor],
                       arrays: Sequence[np.ndarray]) -> List[np.ndarray]:
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    f(*leaves).backward()
    return [np.zeros(leaf.shape) if leaf.grad is None else leaf.grad
            for leaf in leaves]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """norm-wise, guarded against two vanishing gradients"""

    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(f: Callable[..., Tensor],
              arrays: Sequence[np.ndarray],
              h: float = 1e-4,
              rtol: float = 1e-3) -> List[float]:
    """compare backward against central differences for every input

    :param f: function of as many Tensors as there are arrays,
    returning a scalar Tensor

    :rtype: list of relative errors, one per input

    Raises AssertionError if any exceeds rtol.

    """

    errors = [relative_error(a, numerical_gradient(f, arrays, i, h))
              for i, a in enumerate(analytic_gradients(f, arrays))]
    if max(errors, default=0.) > rtol:
        raise AssertionError(f'gradient check failed: {errors}')
    return errors
