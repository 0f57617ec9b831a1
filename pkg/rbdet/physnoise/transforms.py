"""seeded image-space stand-ins for physical disturbances

Images are (H, W, 3) float arrays in [0, 1].  Each transform is the
identity at its neutral setting and returns a new array.

"""

from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage
from skimage import color, draw

from ..errors import ConfigError

Seed = Union[None, int, np.random.Generator]


def _rng(seed: Seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)


def gaussian_noise(image: np.ndarray, variance: float,
                   seed: Seed = None) -> np.ndarray:
    """add N(0, variance) per pixel and channel, then clip"""

    if variance < 0:
        raise ConfigError(f'noise variance {variance} is negative')
    if variance == 0:
        return image.copy()
    noise = _rng(seed).normal(0., np.sqrt(variance), image.shape)
    return np.clip(image + noise, 0., 1.)


def line_kernel(degree: int, angle: float = 0.) -> np.ndarray:
    """normalized one-pixel line of `degree` pixels through the centre

    :param angle: degrees anticlockwise from horizontal

    """

    c = (degree - 1) / 2
    theta = np.deg2rad(angle)
    dx, dy = c * np.cos(theta), c * np.sin(theta)
    ends = np.clip(np.round([c + dy, c - dx, c - dy, c + dx]), 0, degree - 1)
    kernel = np.zeros((degree, degree))
    kernel[draw.line(*ends.astype(int))] = 1.
    return kernel / kernel.sum()


def motion_blur(image: np.ndarray, degree: int,
                angle: float = 0.) -> np.ndarray:
    """convolve with a line kernel, reflecting at the borders"""

    degree = int(degree)
    if degree < 1:
        raise ConfigError(f'blur degree {degree} below 1')
    if degree > min(image.shape[:2]):
        raise ConfigError(
            f'blur degree {degree} exceeds the image side {image.shape[:2]}')
    if degree == 1:
        return image.copy()
    kernel = line_kernel(degree, angle)[:, :, None]
    return np.clip(ndimage.convolve(image, kernel, mode='reflect'), 0., 1.)


def rain_streaks(shape: Tuple[int, int], drop_count: int, seed: Seed = None,
                 length: Tuple[int, int] = (4, 8),
                 max_angle: float = 10.) -> List[Tuple[np.ndarray, np.ndarray]]:
    """pixel coordinates of each raindrop streak, clipped to the image

    Starts are uniform over the image, lengths uniform integers in
    `length`, directions within `max_angle` degrees of vertical.

    """

    rng = _rng(seed)
    height, width = shape
    streaks = []
    for _ in range(drop_count):
        r0, c0 = rng.integers(0, height), rng.integers(0, width)
        n = rng.integers(length[0], length[1] + 1)
        theta = np.deg2rad(rng.uniform(-max_angle, max_angle))
        r1 = int(round(r0 + (n - 1) * np.cos(theta)))
        c1 = int(round(c0 + (n - 1) * np.sin(theta)))
        rr, cc = draw.line(int(r0), int(c0), r1, c1)
        inside = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
        streaks.append((rr[inside], cc[inside]))
    return streaks


def rain_mask(shape: Tuple[int, int], drop_count: int,
              seed: Seed = None, **kwargs) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for rr, cc in rain_streaks(shape, drop_count, seed, **kwargs):
        mask[rr, cc] = True
    return mask


def rain_overlay(image: np.ndarray, drop_count: int, seed: Seed = None,
                 alpha: float = 0.4, **kwargs) -> np.ndarray:
    """composite bright streaks toward white"""

    if drop_count < 0:
        raise ConfigError(f'drop count {drop_count} is negative')
    if drop_count == 0:
        return image.copy()
    mask = rain_mask(image.shape[:2], drop_count, seed, **kwargs)
    return np.where(mask[..., None], (1 - alpha) * image + alpha, image)


def adjust_light(image: np.ndarray, saturation: float) -> np.ndarray:
    """scale the HSV saturation channel by a factor S >= 0"""

    if saturation < 0:
        raise ConfigError(f'saturation factor {saturation} is negative')
    hsv = color.rgb2hsv(image)
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0., 1.)
    return np.clip(color.hsv2rgb(hsv), 0., 1.)


def restrict(noised: np.ndarray, image: np.ndarray,
             mask: Optional[np.ndarray]) -> np.ndarray:
    """keep the noise only where mask is true"""

    return noised if mask is None else np.where(mask[..., None], noised,
                                                image)
