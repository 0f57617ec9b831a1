# flake8: noqa F401
from .transforms import (gaussian_noise, line_kernel, motion_blur,
                         rain_streaks, rain_mask, rain_overlay, adjust_light)
from .spec import NoiseSpec, KINDS, apply_noise, noise_dataset
