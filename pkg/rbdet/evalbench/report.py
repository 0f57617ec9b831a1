"""the headline metrics of a model on the three evaluation splits"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import attr
import numpy as np
import pandas as pd

from ..detector import decode, nms, raw_head
from ..errors import ConfigError, MetricUndefined, ParseError
from ..sample import Sample, count_boxes, images_of
from .metrics import attack_success_rate, mean_ap, per_class_ap

logger = logging.getLogger(__name__)

SPLITS = ('benign', 'attacked', 'merged')
HEADLINE = ('AP_b', 'mAP_b', 'mAP_a', 'AP_ab', 'mAP_ab', 'ASR')
COMPARISON_COLUMNS = ['method', 'axis', 'value', 'AP_ab', 'mAP_ab', 'ASR',
                      'reference']


@attr.s(auto_attribs=True, frozen=True)
class EvalThresholds:
    """
    :param conf: Score_B floor of the detections counted as surviving
    an attack

    :param nms: IoU above which NMS suppresses

    :param iou: IoU needed for a match, in AP and ASR alike

    :param ap_conf: Score_B floor of the detections ranked for AP

    """

    conf: float = 0.25
    nms: float = 0.45
    iou: float = 0.5
    ap_conf: float = 0.01

    def __attrs_post_init__(self):
        if not 0 < self.iou < 1:
            raise ConfigError(f'IoU threshold {self.iou} outside (0, 1)')
        for name in ('conf', 'nms', 'ap_conf'):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f'{name} threshold outside [0, 1]')


@attr.s(auto_attribs=True, frozen=True)
class MetricsReport:
    """AP_b, mAP_b, mAP_a, AP_{a+b}, mAP_{a+b} and ASR

    A metric is None where it is undefined: an AP of a class without
    ground truths in its split, or an ASR with no attacked objects.

    :param per_class: {split: {class: AP}} over the classes having
    ground truths in each split

    :param counts: {split: {'images': int, 'boxes': int}}

    """

    ap_b: Optional[float]
    map_b: Optional[float]
    map_a: Optional[float]
    ap_ab: Optional[float]
    map_ab: Optional[float]
    asr: Optional[float]
    per_class: Dict[str, Dict[int, float]]
    thresholds: EvalThresholds
    counts: Dict[str, Dict[str, int]]
    attacked_objects: int
    target_class: int = 0

    def headline(self) -> Dict[str, Optional[float]]:
        return dict(zip(HEADLINE, (self.ap_b, self.map_b, self.map_a,
                                   self.ap_ab, self.map_ab, self.asr)))

    def to_dict(self) -> dict:
        d = attr.asdict(self, recurse=False)
        d['thresholds'] = attr.asdict(self.thresholds)
        d['per_class'] = {s: {str(c): v for c, v in t.items()}
                          for s, t in self.per_class.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'MetricsReport':
        try:
            d = dict(d)
            d['thresholds'] = EvalThresholds(**d['thresholds'])
            d['per_class'] = {s: {int(c): v for c, v in t.items()}
                              for s, t in d['per_class'].items()}
            return cls(**d)
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f'malformed metrics report: {err}') from err

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> 'MetricsReport':
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> 'MetricsReport':
        return cls.from_json(Path(path).read_text())


def detect(params, dataset: Sequence[Sample], conf: float, nms_thr: float,
           raw: Optional[np.ndarray] = None):
    """per-image detections above conf, after NMS"""

    if not dataset:
        return []
    raw = raw_head(params, images_of(dataset)) if raw is None else raw
    anchor = params.config.anchor
    return [nms(decode(r, conf, anchor), nms_thr) for r in raw]


def evaluate_full(model, splits, thresholds: EvalThresholds = EvalThresholds(),
                  target_class: int = 0) -> MetricsReport:
    """all headline metrics of a model

    :param model: TrainedModel or DetectorParams

    :param splits: (D_val,b, D_val,a, D_val,a+b) as from
    :func:`rbdet.poisoncraft.build_eval_splits`

    """

    params = getattr(model, 'params', model)
    per_class, counts, attacked_dets = {}, {}, None
    for name, dataset in zip(SPLITS, splits):
        raw = raw_head(params, images_of(dataset)) if dataset else None
        dets = detect(params, dataset, thresholds.ap_conf, thresholds.nms,
                      raw)
        per_class[name] = per_class_ap(
            dets, [s.annotations for s in dataset],
            params.config.num_classes, thresholds.iou)
        counts[name] = {'images': len(dataset),
                        'boxes': count_boxes(dataset)}
        if name == 'attacked':
            attacked_dets = detect(params, dataset, thresholds.conf,
                                   thresholds.nms, raw)

    attacked = list(splits[1])
    n_attacked = sum(len(s.provenance.attacked) for s in attacked
                     if s.provenance is not None)
    try:
        asr = attack_success_rate(params, attacked, thresholds.conf,
                                  thresholds.iou, thresholds.nms,
                                  attacked_dets)
    except MetricUndefined:
        asr = None

    report = MetricsReport(
        per_class['benign'].get(target_class),
        mean_ap(per_class['benign']),
        mean_ap(per_class['attacked']),
        per_class['merged'].get(target_class),
        mean_ap(per_class['merged']),
        asr, per_class, thresholds, counts, n_attacked, target_class)
    logger.info('AP_b %s mAP_b %s mAP_ab %s ASR %s', report.ap_b,
                report.map_b, report.map_ab, report.asr)
    return report


def comparison_table(rows) -> pd.DataFrame:
    """one row per (method, noise axis value)

    :param rows: iterable of (method, axis, value, MetricsReport); a
    method of 'clean' marks a reference row

    """

    return pd.DataFrame(
        [(method, axis, value, r.ap_ab, r.map_ab, r.asr, method == 'clean')
         for method, axis, value, r in rows],
        columns=COMPARISON_COLUMNS)
