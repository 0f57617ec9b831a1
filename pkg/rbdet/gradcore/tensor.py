"""Reverse-mode differentiable tensors

A :class:`Tensor` wraps a float64 numpy.ndarray.  Operations on tensors
are :class:`Function` subclasses; applying one records the inputs on
the output so that :meth:`Tensor.backward` can walk the graph back to
the leaves.

"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..errors import ConfigError

logger = logging.getLogger(__name__)


class Function:
    """base class for differentiable operations

    Subclasses override :meth:`forward`, which works on the arrays
    underlying the input tensors, and :meth:`backward`, which maps the
    gradient of the output to a tuple of gradients, one per input
    (``None`` for inputs that need none).

    """

    def __init__(self, *tensors: 'Tensor'):
        self.tensors = tensors

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: Any, **kwargs: Any) -> 'Tensor':
        """construct the function, run it forward, and wrap the result

        :rtype: Tensor, carrying the function as its context only if
        some input requires a gradient

        """

        tensors = tuple(map(as_tensor, tensors))
        function = cls(*tensors)
        data = function.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(data, requires_grad=requires_grad,
                      ctx=function if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """sum out the axes numpy broadcasting added or stretched"""

        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, size in enumerate(shape):
            if size == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """an array of float64 values with an optional gradient buffer

    :param data: array-like

    :param requires_grad: bool, whether gradients are to be
    accumulated into this tensor (if a leaf) or propagated through it

    :param ctx: the Function that produced this tensor, None for leaves

    """

    # ndarray operands defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False,
                 ctx: Optional[Function] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.ctx = ctx

    def __repr__(self):
        return f'Tensor(shape={self.shape}, requires_grad={self.requires_grad})'

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate(self, grad: np.ndarray):
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self):
        """accumulate d(self)/d(leaf) into every leaf requiring grad

        Repeated calls accumulate; zero the leaves' buffers in between
        for fresh gradients.

        """

        if self.size != 1:
            raise ConfigError(
                f'backward needs a scalar, not shape {self.shape}')
        if not self.requires_grad:
            return

        graph = Graph.from_output(self)
        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(graph.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.ctx is None:
                node.accumulate(grad)
                continue
            for parent, g in zip(node.ctx.tensors, node.ctx.backward(grad)):
                if g is None or not parent.requires_grad:
                    continue
                g = Function.unbroadcast(np.asarray(g, dtype=np.float64),
                                         parent.shape)
                key = id(parent)
                grads[key] = g if key not in grads else grads[key] + g

    # arithmetic

    def __add__(self, other):
        return Add.apply(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent: float):
        return Pow.apply(self, exponent=exponent)

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __rmatmul__(self, other):
        return MatMul.apply(other, self)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    def sum(self, axis=None, keepdims=False):
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes):
        return Transpose.apply(self, axes=axes or None)

    def exp(self):
        return Exp.apply(self)

    def log(self):
        return Log.apply(self)

    def sigmoid(self):
        return Sigmoid.apply(self)

    def clamp(self, lo=None, hi=None):
        return Clamp.apply(self, lo=lo, hi=hi)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Graph:
    """the nodes upstream of an output, in topological order

    Only nodes that require a gradient are included.  ``leaves`` marks
    those without a producing function.

    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @property
    def leaves(self) -> List[Tensor]:
        return [n for n in self.nodes if n.is_leaf]

    @classmethod
    def from_output(cls, output: Tensor) -> 'Graph':
        order: List[Tensor] = []
        visited = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in visited:
                continue
            if expanded:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node.ctx is not None:
                stack.extend((p, False) for p in node.ctx.tensors
                             if p.requires_grad and id(p) not in visited)
        logger.debug('graph of %d nodes', len(order))
        return cls(order)


def _axes(axis, ndim) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    return tuple(a % ndim for a in np.atleast_1d(axis))


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return grad / self.b, -grad * self.a / self.b ** 2


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return -grad,


class Pow(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return grad * self.exponent * self.a ** (self.exponent - 1),


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return grad * self.out,


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return grad / self.a,


class Sigmoid(Function):
    def forward(self, a):
        self.out = expit(a)
        return self.out

    def backward(self, grad):
        return grad * self.out * (1 - self.out),


class LeakyReLU(Function):
    def forward(self, a, slope):
        self.slope_mask = np.where(a > 0, 1.0, slope)
        return a * self.slope_mask

    def backward(self, grad):
        return grad * self.slope_mask,


class Arctan(Function):
    def forward(self, a):
        self.a = a
        return np.arctan(a)

    def backward(self, grad):
        return grad / (1 + self.a ** 2),


class Clamp(Function):
    def forward(self, a, lo, hi):
        out = np.clip(a, lo, hi) if (lo is not None or hi is not None) else a
        self.mask = np.ones_like(a)
        if lo is not None:
            self.mask[a < lo] = 0.
        if hi is not None:
            self.mask[a > hi] = 0.
        return out

    def backward(self, grad):
        return grad * self.mask,


class Maximum(Function):
    def forward(self, a, b):
        self.first = np.broadcast_to(a >= b, np.broadcast(a, b).shape)
        return np.maximum(a, b)

    def backward(self, grad):
        return grad * self.first, grad * ~self.first


class Minimum(Function):
    def forward(self, a, b):
        self.first = np.broadcast_to(a <= b, np.broadcast(a, b).shape)
        return np.minimum(a, b)

    def backward(self, grad):
        return grad * self.first, grad * ~self.first


class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.shape = a.shape
        self.axes = _axes(axis, a.ndim)
        self.keepdims = keepdims
        return a.sum(axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return np.broadcast_to(grad, self.shape).copy(),


class Mean(Sum):
    def forward(self, a, axis, keepdims):
        out = super().forward(a, axis, keepdims)
        self.count = int(np.prod([a.shape[i] for i in self.axes]))
        return out / self.count

    def backward(self, grad):
        return super().backward(grad / self.count)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return grad.reshape(self.shape),


class Transpose(Function):
    def forward(self, a, axes):
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        return np.transpose(grad, None if self.axes is None
                            else np.argsort(self.axes)),


class GetItem(Function):
    def forward(self, a, index):
        self.shape, self.index = a.shape, index
        return a[index]

    def backward(self, grad):
        out = np.zeros(self.shape)
        np.add.at(out, self.index, grad)
        return out,


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.bounds, axis=self.axis))


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ConfigError(
                f'matmul of shapes {a.shape} and {b.shape}')
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


def leaky_relu(x, slope: float = 0.1) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def sigmoid(x) -> Tensor:
    return Sigmoid.apply(x)


def exp(x) -> Tensor:
    return Exp.apply(x)


def log(x) -> Tensor:
    return Log.apply(x)


def arctan(x) -> Tensor:
    return Arctan.apply(x)


def clamp(x, lo=None, hi=None) -> Tensor:
    return Clamp.apply(x, lo=lo, hi=hi)


def maximum(a, b) -> Tensor:
    return Maximum.apply(a, b)


def minimum(a, b) -> Tensor:
    return Minimum.apply(a, b)


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)
