"""convolution, pooling, and resizing on image-shaped tensors"""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError
from .tensor import Function, Tensor, as_tensor


class Conv2d(Function):
    """cross-correlation of (N, C_in, H, W) with (C_out, C_in, k, k)"""

    def forward(self, x, kernel, stride, pad):
        self.stride, self.pad, self.x_shape = stride, pad, x.shape
        k = kernel.shape[-1]
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        self.windows = sliding_window_view(
            xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        self.kernel = kernel
        return np.tensordot(self.windows, kernel,
                            axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def backward(self, grad):
        n, c, h, w = self.x_shape
        k, s, p = self.kernel.shape[-1], self.stride, self.pad
        ho, wo = grad.shape[2:]
        gkernel = np.tensordot(grad, self.windows,
                               axes=([0, 2, 3], [0, 2, 3]))
        gwindows = np.tensordot(grad, self.kernel, axes=([1], [0]))
        gxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + s * (ho - 1) + 1:s,
                    j:j + s * (wo - 1) + 1:s] += gwindows[
                        ..., i, j].transpose(0, 3, 1, 2)
        return gxp[:, :, p:p + h, p:p + w], gkernel


def conv2d(x, kernel, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """cross-correlate an image or batch of images with a kernel bank

    :param x: Tensor, (C_in, H, W) or (N, C_in, H, W)

    :param kernel: Tensor, (C_out, C_in, k, k) with k odd

    :param bias: Tensor (C_out,), optional

    :rtype: Tensor, (C_out, H', W') or (N, C_out, H', W') with
    H' = (H + 2 pad - k) / stride + 1

    """

    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim not in (3, 4) or kernel.ndim != 4:
        raise ConfigError(
            f'conv2d of input {x.shape} with kernel {kernel.shape}')
    single = x.ndim == 3
    if single:
        x = x.reshape((1,) + x.shape)
    c_out, c_in, k, kw = kernel.shape
    if kw != k or k % 2 == 0:
        raise ConfigError(f'kernel must be square and odd, not {k}x{kw}')
    if c_in != x.shape[1]:
        raise ConfigError(
            f'kernel expects {c_in} input channels, got {x.shape[1]}')
    if stride < 1 or pad < 0:
        raise ConfigError(f'stride {stride}, pad {pad}')
    for side in x.shape[2:]:
        if (side + 2 * pad - k) < 0 or (side + 2 * pad - k) % stride:
            raise ConfigError(
                f'side {side} with k={k}, stride={stride}, pad={pad} '
                'gives a fractional output size')
    out = Conv2d.apply(x, kernel, stride=stride, pad=pad)
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, c_out, 1, 1)
    return out.reshape(out.shape[1:]) if single else out


class MaxPool2d(Function):
    def forward(self, x):
        *lead, h, w = x.shape
        blocks = x.reshape(*lead, h // 2, 2, w // 2, 2).swapaxes(-3, -2)
        blocks = blocks.reshape(*lead, h // 2, w // 2, 4)
        winner = blocks.argmax(axis=-1)
        self.shape = x.shape
        self.mask = winner[..., None] == np.arange(4)
        return np.take_along_axis(blocks, winner[..., None], -1)[..., 0]

    def backward(self, grad):
        *lead, h, w = self.shape
        g = (self.mask * grad[..., None]).reshape(
            *lead, h // 2, w // 2, 2, 2).swapaxes(-3, -2)
        return g.reshape(self.shape),


def max_pool2d(x) -> Tensor:
    """2x2 max pooling with stride 2 over the last two axes"""

    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] % 2 or x.shape[-2] % 2:
        raise ConfigError(f'max_pool2d needs even sides, not {x.shape}')
    return MaxPool2d.apply(x)


def interpolation_matrix(n_out: int, n_in: int,
                         method: str = 'bilinear') -> np.ndarray:
    """the (n_out, n_in) matrix resampling a 1-D signal

    Half-pixel centres; samples beyond the edges are clamped.

    """

    if n_out < 1 or n_in < 1:
        raise ConfigError(f'cannot resize {n_in} to {n_out}')
    matrix = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if method == 'nearest':
        src = np.minimum(((rows + 0.5) * n_in / n_out).astype(int), n_in - 1)
        matrix[rows, src] = 1.
    elif method == 'bilinear':
        src = np.clip((rows + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        np.add.at(matrix, (rows, lo), 1 - frac)
        np.add.at(matrix, (rows, hi), frac)
    else:
        raise ConfigError(f'unknown interpolation {method!r}')
    return matrix


class Resize(Function):
    def forward(self, x, size, method):
        self.ry = interpolation_matrix(size[0], x.shape[0], method)
        self.rx = interpolation_matrix(size[1], x.shape[1], method)
        return np.einsum('ih,jw,hw...->ij...', self.ry, self.rx, x)

    def backward(self, grad):
        return np.einsum('ih,jw,ij...->hw...', self.ry, self.rx, grad),


def resize(x, size: Tuple[int, int], method: str = 'bilinear') -> Tensor:
    """resample the first two axes (H, W, ...) to size (h, w)"""

    return Resize.apply(x, size=tuple(size), method=method)


def resize_array(x: np.ndarray, size: Tuple[int, int],
                 method: str = 'bilinear') -> np.ndarray:
    return np.einsum('ih,jw,hw...->ij...',
                     interpolation_matrix(size[0], x.shape[0], method),
                     interpolation_matrix(size[1], x.shape[1], method),
                     np.asarray(x, dtype=float))


class BCE(Function):
    def forward(self, p, t, eps):
        inside = (p >= eps) & (p <= 1 - eps)
        self.p, self.t, self.inside = np.clip(p, eps, 1 - eps), t, inside
        return -(t * np.log(self.p) + (1 - t) * np.log(1 - self.p))

    def backward(self, grad):
        return grad * self.inside * (self.p - self.t) / (
            self.p * (1 - self.p)), None


EPS_CLAMP = 1e-7


def bce(pred, target, reduction: str = 'mean',
        eps: Optional[float] = EPS_CLAMP) -> Tensor:
    """binary cross-entropy of probabilities against targets

    The prediction is clamped to [eps, 1 - eps]; the target is
    treated as a constant.

    :param reduction: 'mean', 'sum', or 'none'

    """

    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor)
                        else target, dtype=float)
    if pred.shape != target.shape:
        raise ConfigError(
            f'bce of prediction {pred.shape} against target {target.shape}')
    out = BCE.apply(pred, target, eps=eps)
    if reduction == 'mean':
        return out.mean()
    if reduction == 'sum':
        return out.sum()
    if reduction == 'none':
        return out
    raise ConfigError(f'unknown reduction {reduction!r}')
