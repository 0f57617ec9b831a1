"""labeled images and the provenance of their poisoning

A dataset is simply a list of :class:`Sample`.

"""

from typing import List, Optional, Sequence, Tuple

import attr
import numpy as np

from .detector.boxes import Annotation


@attr.s(auto_attribs=True, frozen=True)
class TriggerPlacement:
    """where a trigger went

    :param ann_id: int, the annotation it attacks

    :param P_t: normalized trigger box [x_center, y_center, w, h]

    :param pixels: (top, left, bottom, right), half-open pixel bounds

    :param clipped: bool, whether the region was shrunk to fit

    """

    ann_id: int
    P_t: Tuple[float, float, float, float] = attr.ib(
        converter=lambda v: tuple(map(float, v)))
    pixels: Tuple[int, int, int, int] = attr.ib(
        converter=lambda v: tuple(map(int, v)))
    clipped: bool = False

    def to_dict(self) -> dict:
        return attr.asdict(self, retain_collection_types=False)

    @classmethod
    def from_dict(cls, d: dict) -> 'TriggerPlacement':
        return cls(**d)


@attr.s(auto_attribs=True, frozen=True)
class Provenance:
    """how a poisoned sample came from its clean source

    :param source_id: int, id of the clean image

    :param poisoned_ann_ids: ids of the annotations carrying a trigger

    :param placements: one TriggerPlacement per poisoned annotation

    :param clean_annotations: the source's full annotation list y

    """

    source_id: int
    poisoned_ann_ids: Tuple[int, ...] = attr.ib(converter=tuple)
    placements: Tuple[TriggerPlacement, ...] = attr.ib(converter=tuple)
    clean_annotations: Tuple[Annotation, ...] = attr.ib(converter=tuple)

    @property
    def attacked(self) -> List[Annotation]:
        """the original annotations of the poisoned objects"""

        ids = set(self.poisoned_ann_ids)
        return [a for a in self.clean_annotations if a.id in ids]

    def to_dict(self) -> dict:
        return {'source_id': self.source_id,
                'poisoned_ann_ids': list(self.poisoned_ann_ids),
                'placements': [p.to_dict() for p in self.placements],
                'clean_annotations': [annotation_to_dict(a)
                                      for a in self.clean_annotations]}

    @classmethod
    def from_dict(cls, d: dict) -> 'Provenance':
        return cls(d['source_id'], d['poisoned_ann_ids'],
                   map(TriggerPlacement.from_dict, d['placements']),
                   map(annotation_from_dict, d['clean_annotations']))


def annotation_to_dict(a: Annotation) -> dict:
    return {'id': a.id, 'c': a.c, 'P': list(a.P)}


def annotation_from_dict(d: dict) -> Annotation:
    return Annotation(d['c'], d['P'], d['id'])


@attr.s(auto_attribs=True, frozen=True, eq=False)
class Sample:
    """one image with its annotations

    :param image_id: int

    :param image: (H, W, 3) float array in [0, 1]

    :param annotations: tuple of Annotation

    :param provenance: Provenance if poisoned, else None

    :param clean_image: the unpoisoned source image, if known

    """

    image_id: int
    image: np.ndarray
    annotations: Tuple[Annotation, ...] = attr.ib(converter=tuple)
    provenance: Optional[Provenance] = None
    clean_image: Optional[np.ndarray] = None

    @property
    def poisoned(self) -> bool:
        return self.provenance is not None and bool(
            self.provenance.placements)

    def trigger_mask(self) -> np.ndarray:
        """(H, W) boolean union of the trigger regions"""

        mask = np.zeros(self.image.shape[:2], dtype=bool)
        if self.provenance is not None:
            for p in self.provenance.placements:
                top, left, bottom, right = p.pixels
                mask[top:bottom, left:right] = True
        return mask


def images_of(dataset: Sequence[Sample]) -> np.ndarray:
    if not dataset:
        return np.zeros((0, 0, 0, 3))
    return np.stack([s.image for s in dataset])


def count_boxes(dataset: Sequence[Sample]) -> int:
    return sum(len(s.annotations) for s in dataset)
