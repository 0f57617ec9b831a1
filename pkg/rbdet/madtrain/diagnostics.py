"""how per-image losses move between two models"""

from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..detector import detection_loss, raw_head
from ..detector.loss import WEIGHTS
from ..errors import ConfigError
from ..sample import Sample

COLUMNS = ['dataset', 'image_id', 'L_before', 'L_after', 'delta']


def per_sample_losses(model, dataset: Sequence[Sample], weights=WEIGHTS,
                      batch_size: int = 64) -> np.ndarray:
    """L_y of each sample against its own labels (y, or y-hat if poisoned)"""

    params = getattr(model, 'params', model)
    if not dataset:
        return np.zeros(0)
    raw = raw_head(params, np.stack([s.image for s in dataset]), batch_size)
    return detection_loss(raw, [s.annotations for s in dataset], weights,
                          params.config.anchor, reduction='none').data


def loss_change_report(model_before, model_after,
                       datasets: Mapping[str, Sequence[Sample]],
                       weights=WEIGHTS) -> pd.DataFrame:
    """paired per-image losses under two models

    :param datasets: mapping of name (e.g. 'clean', 'poisoned',
    'poisoned+noise') to samples

    :rtype: pandas.DataFrame with one row per image and columns
    dataset, image_id, L_before, L_after, and delta = L_before - L_after

    """

    before = getattr(model_before, 'params', model_before)
    after = getattr(model_after, 'params', model_after)
    if before.config.digest != after.config.digest:
        raise ConfigError('models differ in architecture')
    frames = []
    for name, dataset in datasets.items():
        lb = per_sample_losses(before, dataset, weights)
        la = per_sample_losses(after, dataset, weights)
        frames.append(pd.DataFrame({
            'dataset': name,
            'image_id': [s.image_id for s in dataset],
            'L_before': lb, 'L_after': la, 'delta': lb - la},
            columns=COLUMNS))
    if not frames:
        return pd.DataFrame(columns=COLUMNS)
    return pd.concat(frames, ignore_index=True)
