"""ground truths, detections, and box overlap

Boxes are [x_center, y_center, w, h] in normalized image coordinates
throughout.

"""

from typing import Sequence, Tuple

import attr
import numpy as np

from ..errors import ConfigError
from ..gradcore import Tensor, arctan, as_tensor, clamp, concat, maximum, minimum

TOLERANCE = 1e-9


def _box(values) -> Tuple[float, float, float, float]:
    return tuple(map(float, values))


@attr.s(auto_attribs=True, frozen=True)
class Annotation:
    """one ground-truth object

    :param c: int, class index

    :param P: box [x_center, y_center, w, h]

    :param id: int, annotation id in its manifest (-1 if none)

    """

    c: int
    P: Tuple[float, float, float, float] = attr.ib(converter=_box)
    id: int = -1

    def check(self):
        """raise ConfigError unless the box is nondegenerate and inside the image"""

        x, y, w, h = self.P
        if not (0 < w <= 1 + TOLERANCE and 0 < h <= 1 + TOLERANCE):
            raise ConfigError(f'annotation {self.id}: degenerate box {self.P}')
        if (x - w / 2 < -TOLERANCE or x + w / 2 > 1 + TOLERANCE
                or y - h / 2 < -TOLERANCE or y + h / 2 > 1 + TOLERANCE):
            raise ConfigError(
                f'annotation {self.id}: box {self.P} outside the image')
        return self


@attr.s(auto_attribs=True, frozen=True)
class Detection:
    """one predicted box

    :param c: int, class index

    :param score: float, Score_B in [0, 1]

    :param P: box

    :param cell: int, row-major index of the emitting grid cell

    """

    c: int
    score: float
    P: Tuple[float, float, float, float] = attr.ib(converter=_box)
    cell: int = 0


def corners(boxes) -> np.ndarray:
    """[x_center, y_center, w, h] -> [x0, y0, x1, y1], along the last axis"""

    b = np.asarray(boxes, dtype=float)
    half = b[..., 2:] / 2
    return np.concatenate([b[..., :2] - half, b[..., :2] + half], axis=-1)


def centres(boxes) -> np.ndarray:
    """[x0, y0, x1, y1] -> [x_center, y_center, w, h]"""

    b = np.asarray(boxes, dtype=float)
    return np.concatenate([(b[..., :2] + b[..., 2:]) / 2,
                           b[..., 2:] - b[..., :2]], axis=-1)


def iou_matrix(a, b) -> np.ndarray:
    """pairwise IoU of (n, 4) and (m, 4) boxes -> (n, m)"""

    a = corners(np.reshape(a, (-1, 4)))[:, None]
    b = corners(np.reshape(b, (-1, 4)))[None]
    wh = np.clip(np.minimum(a[..., 2:], b[..., 2:])
                 - np.maximum(a[..., :2], b[..., :2]), 0, None)
    inter = wh[..., 0] * wh[..., 1]
    area = lambda c: (c[..., 2] - c[..., 0]) * (c[..., 3] - c[..., 1])  # noqa E731
    union = area(a) + area(b) - inter
    return np.divide(inter, union, out=np.zeros_like(inter),
                     where=union > 0)


def iou(a, b) -> float:
    return float(iou_matrix(a, b)[0, 0])


def ciou_loss(pred, gt, reduction: str = 'mean') -> Tensor:
    """complete-IoU loss of predicted boxes against ground truths

    1 - IoU + rho^2 / c^2 + alpha v with v the aspect-ratio
    discrepancy (4 / pi^2) (arctan(w_g / h_g) - arctan(w_p / h_p))^2
    and alpha = v / ((1 - IoU) + v + 1e-9), all differentiable in pred.

    :param pred: Tensor, (4,) or (P, 4)

    :param gt: array-like of the same shape

    :param reduction: 'mean', 'sum', or 'none'

    """

    pred = as_tensor(pred)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.shape[-1] != 4:
        raise ConfigError(
            f'ciou_loss of prediction {pred.shape} against {gt.shape}')
    single = pred.ndim == 1
    if single:
        pred, gt = pred.reshape(1, 4), gt.reshape(1, 4)
    if np.any(gt[:, 2:] <= 0):
        raise ConfigError('ciou_loss against a zero-area ground truth')

    px, py, pw, ph = (pred[:, i] for i in range(4))
    gx, gy, gw, gh = gt.T
    p0x, p1x, p0y, p1y = px - pw / 2, px + pw / 2, py - ph / 2, py + ph / 2
    g0x, g1x, g0y, g1y = gx - gw / 2, gx + gw / 2, gy - gh / 2, gy + gh / 2

    iw = clamp(minimum(p1x, g1x) - maximum(p0x, g0x), 0.)
    ih = clamp(minimum(p1y, g1y) - maximum(p0y, g0y), 0.)
    inter = iw * ih
    union = pw * ph + gw * gh - inter
    overlap = inter / union

    cw = maximum(p1x, g1x) - minimum(p0x, g0x)
    ch = maximum(p1y, g1y) - minimum(p0y, g0y)
    rho2 = (px - gx) ** 2 + (py - gy) ** 2
    v = (4 / np.pi ** 2) * (np.arctan(gw / gh) - arctan(pw / ph)) ** 2
    alpha = v / ((1 - overlap) + v + 1e-9)
    loss = 1 - overlap + rho2 / (cw ** 2 + ch ** 2) + alpha * v

    if single or reduction == 'mean':
        return loss.mean()
    if reduction == 'sum':
        return loss.sum()
    if reduction == 'none':
        return loss
    raise ConfigError(f'unknown reduction {reduction!r}')


def stack_columns(columns: Sequence[Tensor]) -> Tensor:
    """(P,) tensors -> (P, len(columns))"""

    return concat([c.reshape(-1, 1) for c in columns], axis=1)
