"""forward pass of the toy single-scale grid detector"""

from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..gradcore import Tensor, as_tensor, conv2d, leaky_relu, max_pool2d
from .params import DetectorParams

# raw head channels
TX, TY, TW, TH, OBJ, CLS = 0, 1, 2, 3, 4, 5


def forward(params: DetectorParams,
            image,
            leaves: Optional[Dict[str, Tensor]] = None
            ) -> Tuple[Tensor, Dict[int, Tensor]]:
    """run the backbone and head

    :param image: array or Tensor, (S_img, S_img, 3) or a batch
    (N, S_img, S_img, 3), in [0, 1]

    :param leaves: dict of parameter Tensors as from
    params.leaves(); by default constants are used, so that only the
    image can receive a gradient

    :rtype: pair of raw head (S_grid, S_grid, 5 + C_cls), batched if
    the image was, with channels [tx, ty, tw, th, obj, cls...], and
    dict mapping each tap block to its activations (C, h, w), batched
    likewise

    """

    config = params.config
    image = as_tensor(image)
    single = image.ndim == 3
    side = config.image_side
    if image.shape[-3:] != (side, side, 3) or image.ndim not in (3, 4):
        raise ConfigError(
            f'detector expects images of {side}x{side}x3, got {image.shape}')
    if leaves is None:
        leaves = params.leaves(requires_grad=False)

    x = image.reshape((1,) + image.shape) if single else image
    x = x.transpose(0, 3, 1, 2)
    pad = config.kernel // 2
    taps = {}
    for b in range(1, len(config.channels) + 1):
        x = leaky_relu(conv2d(x, leaves[f'conv{b}.w'], leaves[f'conv{b}.b'],
                              stride=1, pad=pad), config.slope)
        if b in config.pool_after:
            x = max_pool2d(x)
        if b in config.taps:
            taps[b] = x[0] if single else x
    raw = conv2d(x, leaves['head.w'], leaves['head.b']).transpose(0, 2, 3, 1)
    return (raw[0] if single else raw), taps


def raw_head(params: DetectorParams, images: np.ndarray,
             batch_size: int = 64) -> np.ndarray:
    """raw head values for a stack of images, without a graph"""

    images = np.asarray(images, dtype=float)
    if images.ndim == 3:
        return forward(params, images)[0].data
    if len(images) == 0:
        s = params.config.grid_side
        return np.zeros((0, s, s, params.config.head_channels))
    return np.concatenate([forward(params, images[i:i + batch_size])[0].data
                           for i in range(0, len(images), batch_size)])
