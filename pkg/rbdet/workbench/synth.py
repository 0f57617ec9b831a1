"""desk-scale synthetic scenes of simple shapes on textured ground

Class 0, the circle, stands in for the attack's usual target; the
spread of object sizes stands in for viewing distance.

"""

import logging
from typing import Callable, Dict, List, Tuple

import attr
import numpy as np
from scipy.ndimage import gaussian_filter

from ..detector import Annotation, iou_matrix
from ..errors import ConfigError, GenerationError
from ..sample import Sample

logger = logging.getLogger(__name__)

CLASSES = ('circle', 'square', 'triangle', 'cross')
SUPERSAMPLE = 4

PALETTE = ((0.9, 0.1, 0.1), (0.1, 0.75, 0.2), (0.95, 0.55, 0.05),
           (0.6, 0.1, 0.8), (0.05, 0.6, 0.9), (0.95, 0.95, 0.95))


def _circle(u, v):
    return u ** 2 + v ** 2 <= 1


def _square(u, v):
    return (np.abs(u) <= 1) & (np.abs(v) <= 1)


def _triangle(u, v):
    # apex at the top centre, base along the bottom edge
    return (np.abs(v) <= 1) & (np.abs(u) <= (v + 1) / 2)


def _cross(u, v):
    return _square(u, v) & ((np.abs(u) <= 1 / 3) | (np.abs(v) <= 1 / 3))


SHAPES: Dict[str, Callable] = dict(zip(CLASSES, (_circle, _square,
                                                 _triangle, _cross)))


def _pair(kind):
    return lambda values: tuple(map(kind, values))


@attr.s(auto_attribs=True, frozen=True)
class SceneSpec:
    """what the generator draws

    :param image_side: int, S_img

    :param objects: (min, max) objects per image

    :param size: (min, max) object side as a fraction of S_img

    :param max_iou: float, pairwise overlap bound of object boxes

    :param max_tries: int, placements attempted per image before
    giving up

    :param texture: (sigma, amplitude) of the smoothed-noise background

    :param palette: RGB colours of the objects

    :param class_weights: relative frequency of each class; the target
    class dominates, so that high poison rates stay reachable

    """

    image_side: int = 64
    objects: Tuple[int, int] = attr.ib(default=(1, 3), converter=_pair(int))
    size: Tuple[float, float] = attr.ib(default=(0.15, 0.5),
                                        converter=_pair(float))
    max_iou: float = 0.3
    max_tries: int = 100
    texture: Tuple[float, float] = attr.ib(default=(3., 0.15),
                                           converter=_pair(float))
    palette: tuple = attr.ib(default=PALETTE,
                             converter=lambda p: tuple(map(tuple, p)))
    class_weights: Tuple[float, ...] = attr.ib(
        default=(0.55, 0.15, 0.15, 0.15), converter=_pair(float))

    def __attrs_post_init__(self):
        lo, hi = self.objects
        if not 1 <= lo <= hi:
            raise ConfigError(f'objects per image {self.objects}')
        if not 0 < self.size[0] <= self.size[1] <= 1:
            raise ConfigError(f'object size range {self.size}')
        if self.image_side < 8:
            raise ConfigError(f'image side {self.image_side} below 8')
        if not 0 < self.max_iou <= 1:
            raise ConfigError(f'overlap bound {self.max_iou}')
        if len(self.class_weights) != len(CLASSES) or min(
                self.class_weights) < 0 or sum(self.class_weights) <= 0:
            raise ConfigError(f'class weights {self.class_weights}')

    @property
    def classes(self) -> Tuple[str, ...]:
        return CLASSES


def background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    sigma, amplitude = spec.texture
    side = spec.image_side
    base = rng.uniform(0.3, 0.6, 3)
    noise = np.stack([gaussian_filter(rng.standard_normal((side, side)),
                                      sigma) for _ in range(3)], axis=-1)
    noise /= max(np.abs(noise).max(), 1e-12)
    return np.clip(base + amplitude * noise, 0., 1.)


def coverage(shape: str, box, side: int) -> np.ndarray:
    """(side, side) fraction of each pixel covered by a shape filling box

    :param box: normalized [x_center, y_center, w, h]

    """

    x, y, w, h = box
    offsets = (np.arange(side * SUPERSAMPLE) + 0.5) / (side * SUPERSAMPLE)
    u = (offsets[None, :] - x) / (w / 2)
    v = (offsets[:, None] - y) / (h / 2)
    inside = SHAPES[shape](u, v).astype(float)
    return inside.reshape(side, SUPERSAMPLE, side,
                          SUPERSAMPLE).mean(axis=(1, 3))


def _place(spec: SceneSpec, count: int, rng: np.random.Generator):
    boxes, tries = [], 0
    side = spec.image_side
    while len(boxes) < count:
        if tries == spec.max_tries:
            raise GenerationError(
                f'no room for {count} objects after {tries} attempts')
        tries += 1
        s = round(rng.uniform(*spec.size) * side) / side
        x0, y0 = (rng.integers(0, side - round(s * side) + 1, 2) / side)
        box = (x0 + s / 2, y0 + s / 2, s, s)
        if boxes and iou_matrix([box], boxes).max() >= spec.max_iou:
            continue
        boxes.append(box)
    return boxes


def render_scene(spec: SceneSpec, rng: np.random.Generator,
                 first_ann_id: int = 0
                 ) -> Tuple[np.ndarray, List[Annotation]]:
    """one quantized image with its annotations

    Object boxes snap to whole pixels, so every shape's extent is its
    box.

    """

    image = background(spec, rng)
    weights = np.divide(spec.class_weights, sum(spec.class_weights))
    count = int(rng.integers(spec.objects[0], spec.objects[1] + 1))
    annotations = []
    for k, box in enumerate(_place(spec, count, rng)):
        c = int(rng.choice(len(CLASSES), p=weights))
        colour = np.asarray(spec.palette[rng.integers(len(spec.palette))])
        alpha = coverage(CLASSES[c], box, spec.image_side)[..., None]
        image = (1 - alpha) * image + alpha * colour
        annotations.append(Annotation(c, box, first_ann_id + k))
    return np.round(image * 255) / 255, annotations


def render_split(spec: SceneSpec, n: int,
                 seed: np.random.SeedSequence) -> List[Sample]:
    samples, next_id = [], 0
    for image_id, child in enumerate(seed.spawn(n)):
        image, annotations = render_scene(
            spec, np.random.default_rng(child), next_id)
        next_id += len(annotations)
        samples.append(Sample(image_id, image, annotations))
    return samples


def generate_synthetic(spec: SceneSpec, n_train: int, n_val: int,
                       seed: int = 0):
    """independent train and validation sets

    :rtype: pair of lists of Sample

    """

    if n_train < 1 or n_val < 1:
        raise ConfigError(f'split sizes {n_train}, {n_val}; need at least 1')
    train_seed, val_seed = np.random.SeedSequence(seed).spawn(2)
    train = render_split(spec, n_train, train_seed)
    val = render_split(spec, n_val, val_seed)
    logger.info('rendered %d train and %d val images at %d px',
                n_train, n_val, spec.image_side)
    return train, val
