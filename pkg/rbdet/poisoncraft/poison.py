"""poisoning a labeled dataset at a controlled rate"""

import json
import logging
from math import floor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np

from ..detector.boxes import Annotation
from ..errors import ConfigError, ParseError
from ..sample import Provenance, Sample, count_boxes
from .trigger import TriggerSpec, apply_trigger

logger = logging.getLogger(__name__)

ZERO_BOX = (0., 0., 0., 0.)


@attr.s(auto_attribs=True, frozen=True)
class PoisonConfig:
    """whom to attack, how often, and what they become

    :param target_class: int, c_target

    :param poi: float in [0, 1], desired fraction of all boxes poisoned

    :param label_rule: 'remove' (c-hat is background and P-hat is
    [0, 0, 0, 0]: the annotation is deleted) or 'relabel'

    :param relabel_class: c-hat under 'relabel'

    :param relabel_box: P-hat under 'relabel', nonzero

    :param all_objects: bool, attack every class (All Object Attack)

    :param seed: int

    """

    target_class: int = 0
    poi: float = 0.1
    label_rule: str = 'remove'
    relabel_class: Optional[int] = None
    relabel_box: Tuple[float, float, float, float] = attr.ib(
        default=ZERO_BOX, converter=lambda v: tuple(map(float, v)))
    all_objects: bool = False
    seed: int = 0

    def __attrs_post_init__(self):
        if not 0 <= self.poi <= 1:
            raise ConfigError(f'poison rate {self.poi} outside [0, 1]')
        if self.label_rule == 'remove':
            if self.relabel_box != ZERO_BOX:
                raise ConfigError('the removal rule fixes P-hat = [0,0,0,0]')
        elif self.label_rule == 'relabel':
            if self.relabel_class is None or self.relabel_box == ZERO_BOX:
                raise ConfigError(
                    'the relabel rule needs a class and a nonzero box')
            Annotation(self.relabel_class, self.relabel_box).check()
        else:
            raise ConfigError(f'unknown label rule {self.label_rule!r}')

    def is_target(self, c: int) -> bool:
        return self.all_objects or c == self.target_class

    def poisoned_label(self, ann: Annotation) -> Optional[Annotation]:
        """y-hat for one attacked annotation; None means removed"""

        if self.label_rule == 'remove':
            return None
        return Annotation(self.relabel_class, self.relabel_box, ann.id)


@attr.s(auto_attribs=True)
class PoisonReport:
    """what poisoning did, for the record"""

    target_class: int
    all_objects: bool
    poi_target: float
    poi_achieved: float
    total_boxes: int
    poisoned_boxes: int
    selected_image_ids: List[int]
    skipped: List[Tuple[int, int]] = attr.Factory(list)
    provenance: Dict[int, Provenance] = attr.Factory(dict)

    def to_dict(self) -> dict:
        d = attr.asdict(self, recurse=False)
        d['skipped'] = [list(s) for s in self.skipped]
        d['provenance'] = {str(k): v.to_dict()
                           for k, v in self.provenance.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'PoisonReport':
        try:
            d = dict(d)
            d['skipped'] = [tuple(s) for s in d.get('skipped', [])]
            d['provenance'] = {int(k): Provenance.from_dict(v)
                               for k, v in d.get('provenance', {}).items()}
            return cls(**d)
        except (KeyError, TypeError) as error:
            raise ParseError(f'malformed poison report: {error}',
                             'provenance', 'poison_report')

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> 'PoisonReport':
        return cls.from_dict(json.loads(Path(path).read_text()))


def _reachable(counts: Sequence[int], limit: int) -> List[int]:
    """suffix bitsets: bit s of out[j] is set iff some subset of
    counts[j:] sums to s (s <= limit)"""

    mask = (1 << (limit + 1)) - 1
    out = [1] * (len(counts) + 1)
    for j in range(len(counts) - 1, -1, -1):
        out[j] = (out[j + 1] | (out[j + 1] << counts[j])) & mask
    return out


def select_images(counts: Sequence[int], budget: int,
                  rng: np.random.Generator) -> Tuple[List[int], int]:
    """a random subset whose counts sum to the largest total <= budget

    :param counts: positive target-box counts of the candidate images

    :rtype: pair of chosen candidate indices (sorted) and their total

    """

    order = rng.permutation(len(counts))
    ordered = [int(counts[i]) for i in order]
    reach = _reachable(ordered, budget)
    best = reach[0].bit_length() - 1
    chosen, remaining = [], best
    for j, k in enumerate(ordered):
        if remaining == 0:
            break
        if k <= remaining and reach[j + 1] >> (remaining - k) & 1:
            chosen.append(int(order[j]))
            remaining -= k
    return sorted(chosen), best


def poison_sample(sample: Sample, spec: TriggerSpec, cfg: PoisonConfig,
                  rng: np.random.Generator,
                  new_id: Optional[int] = None) -> Tuple[Sample, List[int]]:
    """stamp every target object of one image and rewrite its labels

    :rtype: pair of poisoned Sample and ids of skipped annotations

    """

    image, labels, placements, skipped = sample.image, [], [], []
    for ann in sample.annotations:
        if not cfg.is_target(ann.c):
            labels.append(ann)
            continue
        image, placement = apply_trigger(image, ann, spec, rng)
        if placement is None:
            labels.append(ann)
            skipped.append(ann.id)
            continue
        placements.append(placement)
        relabelled = cfg.poisoned_label(ann)
        if relabelled is not None:
            labels.append(relabelled)

    provenance = Provenance(sample.image_id,
                            [p.ann_id for p in placements], placements,
                            sample.annotations)
    return Sample(sample.image_id if new_id is None else new_id,
                  image, labels, provenance,
                  clean_image=sample.image), skipped


def poison_dataset(dataset: Sequence[Sample], spec: TriggerSpec,
                   cfg: PoisonConfig) -> Tuple[List[Sample], PoisonReport]:
    """poison a seeded random subset of whole images

    Every target object in a chosen image is poisoned.  The chosen
    images' target-box total is the largest achievable not exceeding
    poi times the total box count.

    """

    if not dataset:
        raise ConfigError('cannot poison an empty dataset')
    total = count_boxes(dataset)
    counts = [sum(cfg.is_target(a.c) for a in s.annotations)
              for s in dataset]
    available = sum(counts)
    maximum = available / total if total else 0.
    if cfg.poi > maximum + 1e-12:
        raise ConfigError(
            f'poison rate {cfg.poi} unreachable: target boxes are only '
            f'{maximum:.6g} of all boxes')

    rng = np.random.default_rng(cfg.seed)
    candidates = [i for i, k in enumerate(counts) if k > 0]
    budget = int(floor(cfg.poi * total + 1e-9))
    chosen, _ = select_images([counts[i] for i in candidates], budget, rng)
    chosen = {candidates[i] for i in chosen}

    poisoned, report = [], PoisonReport(
        cfg.target_class, cfg.all_objects, cfg.poi, 0., total, 0, [])
    stamp_rng = np.random.default_rng([cfg.seed, 1])
    for i, sample in enumerate(dataset):
        if i not in chosen:
            poisoned.append(sample)
            continue
        out, skipped = poison_sample(sample, spec, cfg, stamp_rng)
        report.skipped.extend((sample.image_id, a) for a in skipped)
        if out.poisoned:
            report.selected_image_ids.append(sample.image_id)
            report.provenance[sample.image_id] = out.provenance
            report.poisoned_boxes += len(out.provenance.placements)
            poisoned.append(out)
        else:
            poisoned.append(sample)
    report.poi_achieved = report.poisoned_boxes / total if total else 0.
    logger.info('poisoned %d of %d boxes in %d images (Poi %.4f, asked %.4f)',
                report.poisoned_boxes, total, len(report.selected_image_ids),
                report.poi_achieved, cfg.poi)
    return poisoned, report


def split_poisoned(dataset: Sequence[Sample]
                   ) -> Tuple[List[Sample], List[Sample]]:
    """(D_c, D_p) by provenance"""

    return ([s for s in dataset if not s.poisoned],
            [s for s in dataset if s.poisoned])


def build_eval_splits(val: Sequence[Sample], spec: TriggerSpec,
                      cfg: PoisonConfig
                      ) -> Tuple[List[Sample], List[Sample], List[Sample]]:
    """benign, attacked, and merged validation splits

    Every image with a target object is poisoned on all of them into
    the attacked split, with ids offset past the benign ones.
    Triggers go on untransformed.

    """

    spec = attr.evolve(spec, transform='none')
    benign = list(val)
    offset = max((s.image_id for s in benign), default=-1) + 1
    rng = np.random.default_rng([cfg.seed, 2])
    attacked = []
    for sample in benign:
        if not any(cfg.is_target(a.c) for a in sample.annotations):
            continue
        out, _ = poison_sample(sample, spec, cfg, rng,
                               new_id=sample.image_id + offset)
        if out.poisoned:
            attacked.append(out)
    return benign, attacked, benign + attacked
