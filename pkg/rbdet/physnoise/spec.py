"""noise settings and their application to datasets"""

from typing import List, Sequence

import attr
import numpy as np

from ..errors import ConfigError
from ..sample import Sample
from .transforms import (adjust_light, gaussian_noise, motion_blur,
                         rain_overlay, restrict)

KINDS = ('none', 'gaussian', 'motion_blur', 'rain', 'light')
NEUTRAL = {'none': 0., 'gaussian': 0., 'motion_blur': 1., 'rain': 0.,
           'light': 1.}


@attr.s(auto_attribs=True, frozen=True)
class NoiseSpec:
    """one point on a noise axis

    :param kind: one of KINDS

    :param level: sigma^2 for 'gaussian', integer degree for
    'motion_blur', integer drop count for 'rain', saturation factor S
    for 'light'

    :param angle: motion-blur direction, degrees

    :param seed: int

    :param region: 'image', or 'trigger' to disturb only the recorded
    trigger regions

    """

    kind: str = 'none'
    level: float = attr.ib()
    angle: float = 0.
    seed: int = 0
    region: str = 'image'

    @level.default
    def _neutral(self):
        return NEUTRAL.get(self.kind, 0.)

    def __attrs_post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f'unknown noise kind {self.kind!r}')
        if self.region not in ('image', 'trigger'):
            raise ConfigError(f'unknown noise region {self.region!r}')
        if self.level < 0:
            raise ConfigError(f'{self.kind} level {self.level} is negative')
        if self.kind == 'motion_blur' and (
                self.level < 1 or self.level != int(self.level)):
            raise ConfigError(f'blur degree {self.level} not an integer >= 1')
        if self.kind == 'rain' and self.level != int(self.level):
            raise ConfigError(f'drop count {self.level} not an integer')

    @property
    def neutral(self) -> bool:
        return self.kind == 'none' or self.level == NEUTRAL[self.kind]

    def to_dict(self) -> dict:
        return attr.asdict(self)


def apply_noise(image: np.ndarray, spec: NoiseSpec,
                rng: np.random.Generator = None,
                mask: np.ndarray = None) -> np.ndarray:
    """disturb one image; mask (H, W) confines the result if given"""

    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.kind == 'none':
        noised = image.copy()
    elif spec.kind == 'gaussian':
        noised = gaussian_noise(image, spec.level, rng)
    elif spec.kind == 'motion_blur':
        noised = motion_blur(image, int(spec.level), spec.angle)
    elif spec.kind == 'rain':
        noised = rain_overlay(image, int(spec.level), rng)
    else:
        noised = adjust_light(image, spec.level)
    return restrict(noised, image, mask)


def noise_dataset(dataset: Sequence[Sample], spec: NoiseSpec) -> List[Sample]:
    """disturb every image, each with generator default_rng([seed, image_id])"""

    out = []
    for sample in dataset:
        mask = sample.trigger_mask() if spec.region == 'trigger' else None
        image = apply_noise(sample.image, spec,
                            np.random.default_rng([spec.seed,
                                                   sample.image_id]),
                            mask)
        out.append(attr.evolve(sample, image=image))
    return out
