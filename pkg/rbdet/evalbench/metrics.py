"""average precision, attack success, and confidence buckets"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np
import pandas as pd
from scipy.special import expit

from ..detector import Annotation, Detection, iou_matrix, predict, raw_head
from ..detector.network import CLS, OBJ
from ..errors import MetricUndefined
from ..sample import Sample

logger = logging.getLogger(__name__)

IOU_THRESHOLD = 0.5
BUCKET_EDGES = (0.1, 0.5)
BUCKETS = ('low', 'mid', 'high')


@attr.s(auto_attribs=True, frozen=True)
class MatchRecord:
    """the fate of one ground truth

    :param gt: int, index of the ground truth within its image

    :param det: index of the matched detection in score order, or None

    :param iou: float, overlap with the matched detection (0 if none)

    :param score: float, its Score_B (0 if none)

    """

    gt: int
    det: Optional[int]
    iou: float = 0.
    score: float = 0.


def match_class(dets_per_image: Sequence[Sequence[Detection]],
                gts_per_image: Sequence[Sequence[Annotation]],
                c: int, iou_thr: float = IOU_THRESHOLD):
    """greedy matching of class-c detections in descending score order

    Each detection takes the unmatched class-c ground truth of its
    image that it overlaps most, if that reaches iou_thr.

    :rtype: triple of the (score-sorted) true-positive flags, the
    number of ground truths, and per-image lists of MatchRecord

    """

    gts = [[a for a in g if a.c == c] for g in gts_per_image]
    ranked = sorted(((d.score, i, j, d) for i, ds in enumerate(dets_per_image)
                     for j, d in enumerate(x for x in ds if x.c == c)),
                    key=lambda t: (-t[0], t[1], t[3].cell))
    overlaps = [iou_matrix([a.P for a in g], [d.P for d in ds if d.c == c])
                if g else None for g, ds in zip(gts, dets_per_image)]
    records = [[MatchRecord(k, None) for k in range(len(g))] for g in gts]
    tp = np.zeros(len(ranked), dtype=bool)
    for rank, (score, i, j, _) in enumerate(ranked):
        if not gts[i]:
            continue
        column = overlaps[i][:, j].copy()
        column[[r.det is not None for r in records[i]]] = -1.
        k = int(column.argmax())
        if column[k] >= iou_thr:
            tp[rank] = True
            records[i][k] = MatchRecord(k, rank, float(column[k]), score)
    return tp, sum(map(len, gts)), records


def average_precision(dets_per_image: Sequence[Sequence[Detection]],
                      gts_per_image: Sequence[Sequence[Annotation]],
                      c: int, iou_thr: float = IOU_THRESHOLD
                      ) -> Optional[float]:
    """area under the monotone precision envelope of class c

    :rtype: float, or None if there are neither ground truths nor
    detections of the class

    """

    tp, n_gt, _ = match_class(dets_per_image, gts_per_image, c, iou_thr)
    if n_gt == 0:
        return None if len(tp) == 0 else 0.
    if len(tp) == 0:
        return 0.
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    mrec = np.concatenate([[0.], recall, [1.]])
    mpre = np.concatenate([[0.], precision, [0.]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def per_class_ap(dets_per_image, gts_per_image, num_classes: int,
                 iou_thr: float = IOU_THRESHOLD) -> Dict[int, float]:
    """AP of every class having at least one ground truth"""

    present = sorted({a.c for g in gts_per_image for a in g})
    return {c: average_precision(dets_per_image, gts_per_image, c, iou_thr)
            for c in present if c < num_classes}


def mean_ap(table: Dict[int, Optional[float]]) -> Optional[float]:
    defined = [v for v in table.values() if v is not None]
    return float(np.mean(defined)) if defined else None


def attack_outcomes(dets_per_image: Sequence[Sequence[Detection]],
                    attacked_per_image: Sequence[Sequence[Annotation]],
                    iou_thr: float = IOU_THRESHOLD) -> List[Tuple[int, bool]]:
    """(class, succeeded) for every attacked object

    An attack on an object succeeds unless some detection of its own
    class overlaps its original box by at least iou_thr.

    """

    outcomes = []
    for dets, attacked in zip(dets_per_image, attacked_per_image):
        for a in attacked:
            boxes = [d.P for d in dets if d.c == a.c]
            survived = bool(boxes) and iou_matrix([a.P], boxes).max() >= iou_thr
            outcomes.append((a.c, not survived))
    return outcomes


def _attacked(dataset: Sequence[Sample]) -> List[List[Annotation]]:
    return [s.provenance.attacked if s.provenance is not None else []
            for s in dataset]


def _outcomes(model, attacked, conf_thr, iou_thr, nms_thr, detections):
    if detections is None and attacked:
        detections = predict(getattr(model, 'params', model),
                             _images(attacked), conf_thr, nms_thr)
    outcomes = attack_outcomes(detections or [], _attacked(attacked), iou_thr)
    if not outcomes:
        raise MetricUndefined('no attacked objects')
    return outcomes


def attack_success_rate(model, attacked: Sequence[Sample],
                        conf_thr: float = 0.25,
                        iou_thr: float = IOU_THRESHOLD,
                        nms_thr: float = 0.45,
                        detections=None) -> float:
    """fraction of attacked objects left undetected

    :param attacked: D_val,a, whose provenance lists the attacked
    objects' original boxes and classes

    :param detections: precomputed per-image detections, optional

    """

    outcomes = _outcomes(model, attacked, conf_thr, iou_thr, nms_thr,
                         detections)
    return float(np.mean([ok for _, ok in outcomes]))


def attack_success_by_class(model, attacked: Sequence[Sample],
                            conf_thr: float = 0.25,
                            iou_thr: float = IOU_THRESHOLD,
                            nms_thr: float = 0.45,
                            detections=None) -> Dict[int, float]:
    """attack success rate per class of attacked object"""

    outcomes = _outcomes(model, attacked, conf_thr, iou_thr, nms_thr,
                         detections)
    frame = pd.DataFrame(outcomes, columns=['c', 'success'])
    return {int(c): float(v)
            for c, v in frame.groupby('c')['success'].mean().items()}


def target_scores(raw: np.ndarray, target_class: int) -> np.ndarray:
    """expit(obj) expit(cls_target) of every cell"""

    return expit(raw[..., OBJ]) * expit(raw[..., CLS + target_class])


def bucket_scores(scores: np.ndarray,
                  edges: Tuple[float, float] = BUCKET_EDGES
                  ) -> Dict[str, float]:
    """percentages in [0, edges[0]], (edges[0], edges[1]], (edges[1], 1]"""

    scores = np.ravel(scores)
    counts = np.bincount(np.searchsorted(edges, scores, side='left'),
                         minlength=len(BUCKETS))
    return dict(zip(BUCKETS, 100. * counts / max(len(scores), 1)))


def scoreb_buckets(model, dataset: Sequence[Sample],
                   target_class: int = 0) -> Dict[str, float]:
    """target-class Score_B of every cell of every image, bucketed"""

    params = getattr(model, 'params', model)
    return bucket_scores(target_scores(
        raw_head(params, _images(dataset)), target_class))


def _images(dataset: Sequence[Sample]) -> np.ndarray:
    return np.stack([s.image for s in dataset])
