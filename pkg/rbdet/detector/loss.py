"""target assignment and the composite detection loss L_y"""

from typing import List, Sequence, Tuple

import attr
import numpy as np

from ..errors import ConfigError
from ..gradcore import Tensor, as_tensor, bce, clamp, exp, sigmoid
from .boxes import Annotation, ciou_loss, stack_columns
from .network import CLS, OBJ, TH, TW, TX, TY

WEIGHTS = (0.5, 0.05, 1.0)


@attr.s(auto_attribs=True, frozen=True, eq=False)
class CellTarget:
    """what a single image's grid should predict

    :param objectness: (S, S) array of 0 and 1

    :param positives: tuple of (row, col, annotation), one per
    positive cell in annotation order

    """

    objectness: np.ndarray
    positives: Tuple[Tuple[int, int, Annotation], ...]

    def class_targets(self, num_classes: int) -> np.ndarray:
        onehot = np.zeros((len(self.positives), num_classes))
        for i, (_, _, ann) in enumerate(self.positives):
            onehot[i, ann.c] = 1.
        return onehot


def cell_of(ann: Annotation, grid_side: int) -> Tuple[int, int]:
    x, y = ann.P[:2]
    return (min(int(y * grid_side), grid_side - 1),
            min(int(x * grid_side), grid_side - 1))


def assign_targets(annotations: Sequence[Annotation], grid_side: int,
                   num_classes: int) -> CellTarget:
    """centre-cell assignment; an occupied cell keeps its first annotation"""

    objectness = np.zeros((grid_side, grid_side))
    positives = []
    for ann in annotations:
        ann.check()
        if not 0 <= ann.c < num_classes:
            raise ConfigError(f'annotation {ann.id}: class {ann.c} '
                              f'outside 0..{num_classes - 1}')
        row, col = cell_of(ann, grid_side)
        if objectness[row, col]:
            continue
        objectness[row, col] = 1.
        positives.append((row, col, ann))
    return CellTarget(objectness, tuple(positives))


def detection_loss(raw, annotations, weights: Sequence[float] = WEIGHTS,
                   anchor: Tuple[float, float] = (0.25, 0.25),
                   reduction: str = 'sum') -> Tensor:
    """L_y = a1 L_cls + a2 L_box + a3 L_obj

    L_obj is the mean BCE of sigmoid objectness over all cells, L_cls
    the BCE of the positive cells' class sigmoids against one-hot
    targets (mean over positives and classes), and L_box the mean CIoU
    loss over positive cells.

    :param raw: Tensor (S, S, 5 + C) with a sequence of Annotation, or
    (N, S, S, 5 + C) with a sequence of N such sequences

    :param reduction: for a batch, 'sum' or 'mean' over samples, or
    'none' for the (N,) vector of per-sample losses

    """

    raw = as_tensor(raw)
    if len(weights) != 3 or any(a < 0 for a in weights):
        raise ConfigError(f'loss weights must be three nonnegative, {weights}')
    single = raw.ndim == 3
    if single:
        raw, annotations = raw.reshape((1,) + raw.shape), [annotations]
    n, s, _, channels = raw.shape
    num_classes = channels - 5
    if len(annotations) != n:
        raise ConfigError(
            f'{len(annotations)} annotation lists for {n} images')

    targets = [assign_targets(a, s, num_classes) for a in annotations]
    a_cls, a_box, a_obj = weights

    l_obj = bce(sigmoid(raw[:, :, :, OBJ]),
                np.stack([t.objectness for t in targets]),
                reduction='none').sum(axis=(1, 2)) / (s * s)
    per_sample = a_obj * l_obj

    index: List[Tuple[int, int, int]] = []
    gts, owners = [], []
    for i, t in enumerate(targets):
        for row, col, ann in t.positives:
            index.append((i, row, col))
            gts.append(ann.P)
            owners.append(i)
    if index:
        ii, rr, cc = map(np.array, zip(*index))
        owners = np.array(owners)
        counts = np.bincount(owners, minlength=n)
        scatter = np.zeros((n, len(index)))
        scatter[owners, np.arange(len(index))] = 1. / counts[owners]

        onehot = np.concatenate([t.class_targets(num_classes)
                                 for t in targets if t.positives])
        l_cls = bce(sigmoid(raw[ii, rr, cc, CLS:]), onehot,
                    reduction='none').sum(axis=1) / num_classes

        pred = stack_columns([
            (cc + sigmoid(raw[ii, rr, cc, TX])) / s,
            (rr + sigmoid(raw[ii, rr, cc, TY])) / s,
            anchor[0] * exp(clamp(raw[ii, rr, cc, TW], -8., 4.)),
            anchor[1] * exp(clamp(raw[ii, rr, cc, TH], -8., 4.))])
        l_box = ciou_loss(pred, np.array(gts), reduction='none')

        positive = (a_cls * l_cls + a_box * l_box).reshape(-1, 1)
        per_sample = per_sample + (Tensor(scatter) @ positive).reshape(n)

    if single:
        return per_sample.reshape(())
    if reduction == 'sum':
        return per_sample.sum()
    if reduction == 'mean':
        return per_sample.mean()
    if reduction == 'none':
        return per_sample
    raise ConfigError(f'unknown reduction {reduction!r}')


def loss_terms(raw, annotations, anchor=(0.25, 0.25)) -> Tuple[float, ...]:
    """(L_cls, L_box, L_obj) of one image, as floats"""

    return tuple(detection_loss(raw, annotations, w, anchor).item()
                 for w in np.eye(3))
