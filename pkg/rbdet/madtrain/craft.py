"""crafting trigger-confined physical noise by projected sign ascent

The objective for a poisoned image x-hat with clean labels y is

    J = L_v(x-hat + delta) - L_y(x-hat + delta, y)

where L_v sums, over the tapped backbone layers, beta times the BCE of
the perturbed features' sigmoid against the (constant) sigmoid of the
baseline's features.  delta lives on the trigger regions, within an
L-infinity ball of radius epsilon, and keeps the image in [0, 1].

"""

import logging
from typing import Optional, Sequence

import attr
import numpy as np
from scipy.special import expit

from ..detector import forward
from ..detector.loss import WEIGHTS, detection_loss
from ..errors import ConfigError
from ..gradcore import Tensor, bce, sigmoid
from .config import AttackBudget

logger = logging.getLogger(__name__)


@attr.s(auto_attribs=True, frozen=True, eq=False)
class CraftResult:
    """crafted noise with its ascent trace

    :param delta: noise, shaped like the image(s)

    :param trace: objective before each step and after the last, (T + 1,)
    per image

    :param degenerate: bool per image, the gradient vanished at every
    step and delta was reset to zero

    """

    delta: np.ndarray
    trace: np.ndarray
    degenerate: np.ndarray


def feature_loss(taps, baseline_taps, betas: Sequence[float]) -> Tensor:
    """per-image L_v, (N,)"""

    layers = sorted(taps)
    if len(betas) != len(layers):
        raise ConfigError(f'{len(betas)} layer weights for taps {layers}')
    total = None
    for beta, layer in zip(betas, layers):
        target = expit(baseline_taps[layer].data)
        term = beta * bce(sigmoid(taps[layer]), target,
                          reduction='none').mean(axis=(1, 2, 3))
        total = term if total is None else total + term
    return total


def objective(params, images: Tensor, baseline_taps, annotations,
              budget: AttackBudget, weights=WEIGHTS) -> Tensor:
    """per-image J, (N,)"""

    raw, taps = forward(params, images)
    terms = []
    if budget.objective != 'no_lv':
        terms.append(feature_loss(taps, baseline_taps, budget.betas))
    if budget.objective != 'no_ly':
        terms.append(-detection_loss(raw, annotations, weights,
                                     params.config.anchor, reduction='none'))
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]


def craft_batch(params, poisoned: np.ndarray, masks: np.ndarray,
                annotations, budget: AttackBudget,
                baselines: Optional[np.ndarray] = None,
                weights=WEIGHTS,
                rng: Optional[np.random.Generator] = None) -> CraftResult:
    """craft noise for a stack of poisoned images at once

    :param params: DetectorParams, left untouched

    :param poisoned: (N, H, W, 3) images x-hat

    :param masks: (N, H, W) booleans, the trigger regions

    :param annotations: N sequences of clean Annotation y

    :param baselines: (N, H, W, 3) images whose features L_v compares
    against; x-hat by default

    """

    poisoned = np.asarray(poisoned, dtype=float)
    support = np.asarray(masks, dtype=float)[..., None]
    if support.shape[:3] != poisoned.shape[:3]:
        raise ConfigError(
            f'masks {support.shape[:3]} for images {poisoned.shape}')
    if not support.reshape(len(support), -1).any(axis=1).all():
        raise ConfigError('every image needs a nonempty trigger region')
    eps, eta = budget.epsilon, budget.step_size
    baseline_taps = forward(
        params, poisoned if baselines is None else baselines)[1]

    delta = np.zeros_like(poisoned)
    if budget.random_start:
        rng = rng if rng is not None else np.random.default_rng(budget.seed)
        delta = rng.uniform(-eps, eps, poisoned.shape) * support
        delta = np.clip(poisoned + delta, 0., 1.) - poisoned

    trace, flat = [], np.zeros(len(poisoned), dtype=int)
    for _ in range(budget.steps):
        x = Tensor(poisoned + delta, requires_grad=True)
        j = objective(params, x, baseline_taps, annotations, budget, weights)
        trace.append(j.data.copy())
        j.sum().backward()
        grad = x.grad * support
        flat += ~grad.reshape(len(grad), -1).any(axis=1)
        delta = np.clip(delta + eta * np.sign(grad), -eps, eps) * support
        delta = np.clip(poisoned + delta, 0., 1.) - poisoned
    degenerate = flat == budget.steps
    delta[degenerate] = 0.
    trace.append(objective(params, Tensor(poisoned + delta), baseline_taps,
                           annotations, budget, weights).data.copy())
    if degenerate.any():
        logger.debug('%d of %d ascents degenerate', degenerate.sum(),
                     len(degenerate))
    return CraftResult(delta, np.stack(trace, axis=-1), degenerate)


def craft_physical_noise(model, poisoned: np.ndarray, clean: np.ndarray,
                         annotations, regions, budget: AttackBudget,
                         weights=WEIGHTS,
                         rng: Optional[np.random.Generator] = None
                         ) -> CraftResult:
    """noise delta for one poisoned image

    :param model: TrainedModel or DetectorParams

    :param poisoned: (H, W, 3) x-hat

    :param clean: (H, W, 3) x, used as the feature baseline when
    budget.baseline is 'clean'

    :param annotations: the clean labels y

    :param regions: sequence of TriggerPlacement, or an (H, W) mask

    """

    params = getattr(model, 'params', model)
    mask = np.asarray(regions, dtype=bool) if isinstance(
        regions, np.ndarray) else _mask(poisoned.shape[:2], regions)
    baselines = clean[None] if budget.baseline == 'clean' else None
    result = craft_batch(params, poisoned[None], mask[None], [annotations],
                         budget, baselines, weights, rng)
    return CraftResult(result.delta[0], result.trace[0],
                       bool(result.degenerate[0]))


def _mask(shape, placements) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for p in placements:
        top, left, bottom, right = p.pixels
        mask[top:bottom, left:right] = True
    return mask
