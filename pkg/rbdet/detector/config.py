"""architecture of the toy grid detector"""

import hashlib
import json
from typing import Tuple

import attr

from ..errors import ConfigError


def _tuple_of(kind):
    return lambda values: tuple(map(kind, values))


@attr.s(auto_attribs=True, frozen=True)
class DetectorConfig:
    """shape of the detector

    :param image_side: int, S_img

    :param grid_side: int, S_grid

    :param num_classes: int, C_cls

    :param channels: output channels of each backbone block

    :param pool_after: blocks followed by a 2x2 max-pool (stride 2)

    :param taps: blocks whose activations are exposed as features,
    counting from 1

    :param anchor: (w, h) of the single anchor, normalized

    """

    image_side: int = 64
    grid_side: int = 8
    num_classes: int = 4
    channels: Tuple[int, ...] = attr.ib(default=(8, 16, 16, 32, 32, 64, 64),
                                        converter=_tuple_of(int))
    pool_after: Tuple[int, ...] = attr.ib(default=(2, 4, 6),
                                          converter=_tuple_of(int))
    taps: Tuple[int, ...] = attr.ib(default=(3, 5, 7),
                                    converter=_tuple_of(int))
    anchor: Tuple[float, float] = attr.ib(default=(0.25, 0.25),
                                          converter=_tuple_of(float))
    kernel: int = 3
    slope: float = 0.1

    def __attrs_post_init__(self):
        blocks = len(self.channels)
        if self.num_classes < 1:
            raise ConfigError('num_classes must be positive')
        if any(not 1 <= b <= blocks for b in self.pool_after + self.taps):
            raise ConfigError(
                f'pool and tap blocks must lie in 1..{blocks}')
        if list(self.taps) != sorted(set(self.taps)):
            raise ConfigError(f'taps {self.taps} not strictly increasing')
        stride = 2 ** len(set(self.pool_after))
        if self.image_side != self.grid_side * stride:
            raise ConfigError(
                f'image side {self.image_side} is not grid side '
                f'{self.grid_side} times the backbone stride {stride}')
        if self.kernel % 2 == 0:
            raise ConfigError('kernel size must be odd')

    @property
    def head_channels(self) -> int:
        return 5 + self.num_classes

    def to_dict(self) -> dict:
        return attr.asdict(self, retain_collection_types=False)

    @classmethod
    def from_dict(cls, d: dict) -> 'DetectorConfig':
        return cls(**d)

    @property
    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()
