# flake8: noqa F401
from .tensor import (Function, Tensor, Graph, as_tensor,
                     leaky_relu, sigmoid, exp, log, arctan, clamp,
                     maximum, minimum, concat, matmul)
from .spatial import (conv2d, max_pool2d, resize, resize_array,
                      interpolation_matrix, bce, EPS_CLAMP)
from .gradcheck import gradcheck, numerical_gradient, relative_error
