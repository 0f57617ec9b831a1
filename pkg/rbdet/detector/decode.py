"""from raw head values to detections"""

from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .boxes import Detection, centres, corners, iou_matrix
from .network import CLS, OBJ, TH, TW, TX, TY, raw_head

CONF_THRESHOLD = 0.25
NMS_THRESHOLD = 0.45


def decode_arrays(raw, anchor: Tuple[float, float] = (0.25, 0.25)):
    """per-cell Score_B, best class, and clipped box

    :param raw: array or Tensor, (S, S, 5 + C)

    :rtype: triple of (S*S,) scores, (S*S,) classes, (S*S, 4) boxes,
    row-major over cells

    """

    raw = np.asarray(getattr(raw, 'data', raw), dtype=float)
    s = raw.shape[0]
    cells = raw.reshape(s * s, -1)
    probs = expit(cells[:, CLS:])
    classes = probs.argmax(axis=1)
    scores = expit(cells[:, OBJ]) * probs.max(axis=1)
    rows, cols = np.divmod(np.arange(s * s), s)
    x = (cols + expit(cells[:, TX])) / s
    y = (rows + expit(cells[:, TY])) / s
    w = np.clip(anchor[0] * np.exp(np.minimum(cells[:, TW], 50.)), 0., 1.)
    h = np.clip(anchor[1] * np.exp(np.minimum(cells[:, TH], 50.)), 0., 1.)
    boxes = centres(np.clip(corners(np.stack([x, y, w, h], axis=1)), 0., 1.))
    return scores, classes, boxes


def decode(raw, conf_threshold: float = CONF_THRESHOLD,
           anchor: Tuple[float, float] = (0.25, 0.25)) -> List[Detection]:
    """every cell whose Score_B reaches the threshold, in cell order"""

    scores, classes, boxes = decode_arrays(raw, anchor)
    return [Detection(int(classes[i]), float(scores[i]), boxes[i], int(i))
            for i in np.flatnonzero(scores >= conf_threshold)]


def nms(dets: Sequence[Detection],
        iou_threshold: float = NMS_THRESHOLD) -> List[Detection]:
    """greedy class-wise non-maximum suppression

    The survivors are sorted by descending score, ties going to the
    lower cell index.

    """

    ranked = sorted(dets, key=lambda d: (-d.score, d.cell))
    if not ranked:
        return []
    overlap = iou_matrix([d.P for d in ranked], [d.P for d in ranked])
    kept: List[int] = []
    for i, d in enumerate(ranked):
        if all(ranked[j].c != d.c or overlap[i, j] <= iou_threshold
               for j in kept):
            kept.append(i)
    return [ranked[i] for i in kept]


def predict(params, images, conf_threshold: float = CONF_THRESHOLD,
            iou_threshold: float = NMS_THRESHOLD,
            batch_size: int = 64) -> List[List[Detection]]:
    """decoded, suppressed detections for each of a stack of images"""

    anchor = params.config.anchor
    return [nms(decode(r, conf_threshold, anchor), iou_threshold)
            for r in raw_head(params, np.asarray(images), batch_size)]
