"""stamping a trigger onto an object

The blend inside the trigger region is x - lam (x - x_t), i.e.
(1 - lam) x + lam x_t; every pixel outside is left alone.

"""

import logging
from typing import Optional, Tuple
from warnings import warn

import attr
import numpy as np
from PIL import Image
from scipy.ndimage import rotate

from ..detector.boxes import Annotation
from ..errors import ConfigError
from ..gradcore import resize_array
from ..sample import TriggerPlacement

logger = logging.getLogger(__name__)

TRANSFORMS = ('none', 'distance', 'rotation', 'brightness', 'gaussian')


def default_trigger(side: int = 16, block: int = 4) -> np.ndarray:
    """a yellow/blue checkerboard with a magenta rim"""

    rows, cols = np.indices((side, side)) // block
    checker = ((rows + cols) % 2).astype(bool)
    bitmap = np.where(checker[..., None], [1., 0.9, 0.], [0., 0.2, 1.])
    bitmap[[0, -1], :] = bitmap[:, [0, -1]] = [1., 0., 1.]
    return bitmap


def load_trigger(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert('RGB'), dtype=float) / 255


def _pair(kind):
    return lambda values: tuple(map(kind, values))


def _check_unit(instance, attribute, value):
    if not 0 <= value <= 1:
        raise ConfigError(f'{attribute.name} {value} outside [0, 1]')


@attr.s(auto_attribs=True, frozen=True, eq=False)
class TriggerSpec:
    """what trigger to stamp, how big, and where

    :param bitmap: (h, w, 3) trigger x_t in [0, 1]

    :param transparency: lam in [0, 1]

    :param ratio: (rho_w, rho_h) in (0, 1], trigger to object size
    in variable mode

    :param mode: 'variable' or 'fixed'

    :param fixed_size: (w_px, h_px) in fixed mode

    :param placement: 'center' or 'offset'

    :param offset: (dx, dy) of the trigger centre from the object
    centre, in object widths and heights

    :param interpolation: 'bilinear' or 'nearest'

    :param transform: one of TRANSFORMS, a physical change applied
    to the trigger as it is stamped

    """

    bitmap: np.ndarray = attr.ib(factory=default_trigger,
                                 converter=lambda b: np.asarray(b, float))
    transparency: float = attr.ib(default=1.0, validator=_check_unit)
    ratio: Tuple[float, float] = attr.ib(default=(0.4, 0.4),
                                         converter=_pair(float))
    mode: str = 'variable'
    fixed_size: Optional[Tuple[int, int]] = None
    placement: str = 'center'
    offset: Tuple[float, float] = attr.ib(default=(0., 0.),
                                          converter=_pair(float))
    interpolation: str = 'bilinear'
    transform: str = 'none'

    def __attrs_post_init__(self):
        if self.bitmap.ndim != 3 or self.bitmap.shape[2] != 3:
            raise ConfigError(f'trigger bitmap shape {self.bitmap.shape}')
        if self.bitmap.min() < 0 or self.bitmap.max() > 1:
            raise ConfigError('trigger bitmap outside [0, 1]')
        if any(not 0 < r <= 1 for r in self.ratio):
            raise ConfigError(f'scale ratios {self.ratio} outside (0, 1]')
        if self.mode not in ('variable', 'fixed'):
            raise ConfigError(f'unknown trigger mode {self.mode!r}')
        if self.mode == 'fixed' and (
                self.fixed_size is None or min(self.fixed_size) < 1):
            raise ConfigError('fixed mode needs a positive fixed_size')
        if self.placement not in ('center', 'offset'):
            raise ConfigError(f'unknown placement {self.placement!r}')
        if self.transform not in TRANSFORMS:
            raise ConfigError(f'unknown trigger transform {self.transform!r}')

    def to_dict(self) -> dict:
        """the settings, less the bitmap"""

        d = attr.asdict(self, retain_collection_types=False)
        del d['bitmap']
        return d


def transform_trigger(bitmap: np.ndarray, kind: str,
                      rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """one physical transformation of the trigger

    :rtype: pair of transformed bitmap and size factor (other than 1
    only for 'distance')

    """

    if kind == 'none':
        return bitmap, 1.
    if kind == 'distance':
        return bitmap, float(rng.uniform(0.5, 1.5))
    if kind == 'rotation':
        return np.clip(rotate(bitmap, rng.uniform(-30., 30.), axes=(1, 0),
                              reshape=False, order=1, mode='nearest'),
                       0., 1.), 1.
    if kind == 'brightness':
        return np.clip(bitmap * rng.uniform(0.6, 1.4), 0., 1.), 1.
    if kind == 'gaussian':
        return np.clip(bitmap + rng.normal(0., 0.05, bitmap.shape),
                       0., 1.), 1.
    raise ConfigError(f'unknown trigger transform {kind!r}')


def _pixel_box(ann: Annotation, height: int, width: int):
    x, y, w, h = ann.P
    return (int(round((y - h / 2) * height)), int(round((x - w / 2) * width)),
            int(round((y + h / 2) * height)), int(round((x + w / 2) * width)))


def _centre(ann: Annotation, spec: TriggerSpec) -> Tuple[float, float]:
    x, y, w, h = ann.P
    if spec.placement == 'offset':
        return x + spec.offset[0] * w, y + spec.offset[1] * h
    return x, y


def _stamp(image, ann, spec, size_px, bounds, bitmap):
    """blend a trigger of size_px = (w, h) centred per spec, clipped to bounds"""

    height, width = image.shape[:2]
    cx, cy = _centre(ann, spec)
    w_px, h_px = size_px
    left = int(round(cx * width - w_px / 2))
    top = int(round(cy * height - h_px / 2))
    region = (top, left, top + h_px, left + w_px)
    b_top, b_left, b_bottom, b_right = bounds
    top, left = max(region[0], b_top), max(region[1], b_left)
    bottom, right = min(region[2], b_bottom), min(region[3], b_right)

    if bottom <= top or right <= left:
        warn(f'annotation {ann.id}: no room for a trigger, not poisoned')
        return image, None

    out = image.copy()
    trigger = resize_array(bitmap, (bottom - top, right - left),
                           spec.interpolation)
    lam = spec.transparency
    out[top:bottom, left:right] = (1 - lam) * image[top:bottom, left:right] \
        + lam * trigger
    placement = TriggerPlacement(
        ann.id,
        ((left + right) / 2 / width, (top + bottom) / 2 / height,
         (right - left) / width, (bottom - top) / height),
        (top, left, bottom, right),
        (top, left, bottom, right) != region)
    return out, placement


def apply_trigger_variable(image: np.ndarray, ann: Annotation,
                           spec: TriggerSpec,
                           rng: Optional[np.random.Generator] = None):
    """stamp a trigger scaled to the object, clipped to its box

    :rtype: pair of new image and TriggerPlacement, the latter None
    (with a warning) if the object is too small to carry the trigger

    """

    ann.check()
    height, width = image.shape[:2]
    bitmap, factor = transform_trigger(
        spec.bitmap, spec.transform,
        rng if rng is not None else np.random.default_rng(0))
    _, _, w, h = ann.P
    size = (int(round(factor * spec.ratio[0] * w * width)),
            int(round(factor * spec.ratio[1] * h * height)))
    return _stamp(image, ann, spec, size, _pixel_box(ann, height, width),
                  bitmap)


def apply_trigger_fixed(image: np.ndarray, ann: Annotation,
                        spec: TriggerSpec,
                        rng: Optional[np.random.Generator] = None):
    """stamp a trigger of fixed pixel size, clipped to the image"""

    ann.check()
    height, width = image.shape[:2]
    if spec.fixed_size is None:
        raise ConfigError('apply_trigger_fixed needs spec.fixed_size')
    if spec.fixed_size[0] > width or spec.fixed_size[1] > height:
        raise ConfigError(f'fixed trigger {spec.fixed_size} larger than '
                          f'the {width}x{height} image')
    bitmap, factor = transform_trigger(
        spec.bitmap, spec.transform,
        rng if rng is not None else np.random.default_rng(0))
    size = tuple(max(1, int(round(factor * s))) for s in spec.fixed_size)
    return _stamp(image, ann, spec, size, (0, 0, height, width), bitmap)


def apply_trigger(image: np.ndarray, ann: Annotation, spec: TriggerSpec,
                  rng: Optional[np.random.Generator] = None):
    """stamp a trigger onto one annotated object, as spec.mode says

    :param image: (H, W, 3) float array in [0, 1]

    :param ann: Annotation of the object to carry the trigger

    :param spec: TriggerSpec; mode 'variable' scales the trigger to
    the object, any other mode uses spec.fixed_size

    :param rng: generator for spec.transform draws

    :rtype: pair of new image and TriggerPlacement, or None for the
    latter when there is no room

    """

    return (apply_trigger_variable if spec.mode == 'variable'
            else apply_trigger_fixed)(image, ann, spec, rng)
