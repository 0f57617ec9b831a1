"""COCO-style manifests and the datasets they describe on disk

At the file boundary boxes are [x_min, y_min, w, h] in pixels;
in memory they are the normalized [x_center, y_center, w, h] of
:class:`rbdet.detector.Annotation`.  Images are 8-bit RGB PNG.

"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np
from PIL import Image

from ..detector import Annotation
from ..errors import ParseError
from ..poisoncraft import PoisonReport
from ..sample import Sample
from .synth import CLASSES

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.json'
POISON_REPORT = 'poison_report.json'
IMAGES = 'images'
PIXEL_TOLERANCE = 1e-6


@attr.s(auto_attribs=True, frozen=True)
class ImageEntry:
    id: int
    file_name: str
    width: int
    height: int
    extra: Dict[str, Any] = attr.Factory(dict)


@attr.s(auto_attribs=True, frozen=True)
class AnnotationEntry:
    id: int
    image_id: int
    category_id: int
    bbox: Tuple[float, float, float, float] = attr.ib(
        converter=lambda v: tuple(map(float, v)))
    extra: Dict[str, Any] = attr.Factory(dict)


@attr.s(auto_attribs=True, frozen=True)
class Category:
    id: int
    name: str
    extra: Dict[str, Any] = attr.Factory(dict)


@attr.s(auto_attribs=True, frozen=True)
class DatasetManifest:
    """images, annotations, and categories, as in a COCO file

    Fields not named here are carried along in ``extra``, at every
    level, so that a file loads and saves unchanged.

    """

    images: Tuple[ImageEntry, ...] = attr.ib(default=(), converter=tuple)
    annotations: Tuple[AnnotationEntry, ...] = attr.ib(default=(),
                                                       converter=tuple)
    categories: Tuple[Category, ...] = attr.ib(default=(), converter=tuple)
    extra: Dict[str, Any] = attr.Factory(dict)

    def to_dict(self) -> dict:
        return {**self.extra,
                'images': [_entry_dict(e) for e in self.images],
                'annotations': [_entry_dict(e) for e in self.annotations],
                'categories': [_entry_dict(e) for e in self.categories]}

    @classmethod
    def from_dict(cls, d) -> 'DatasetManifest':
        if not isinstance(d, dict):
            raise ParseError('manifest is not a JSON object', None, '$')
        images = _entries(ImageEntry, d, 'images')
        annotations = _entries(AnnotationEntry, d, 'annotations')
        categories = _entries(Category, d, 'categories')
        manifest = cls(images, annotations, categories,
                       {k: v for k, v in d.items()
                        if k not in ('images', 'annotations', 'categories')})
        manifest.validate()
        return manifest

    def validate(self):
        """referential integrity and boxes within their images"""

        images = {e.id: e for e in self.images}
        categories = {c.id for c in self.categories}
        for k, a in enumerate(self.annotations):
            where = f'annotations[{k}]'
            if a.image_id not in images:
                raise ParseError(f'image id {a.image_id} not in manifest',
                                 'image_id', f'{where}.image_id')
            if a.category_id not in categories:
                raise ParseError(
                    f'category id {a.category_id} not in manifest',
                    'category_id', f'{where}.category_id')
            x, y, w, h = a.bbox
            image = images[a.image_id]
            if (w <= 0 or h <= 0 or x < -PIXEL_TOLERANCE
                    or y < -PIXEL_TOLERANCE
                    or x + w > image.width + PIXEL_TOLERANCE
                    or y + h > image.height + PIXEL_TOLERANCE):
                raise ParseError(f'bbox {list(a.bbox)} outside image '
                                 f'{image.width}x{image.height}',
                                 'bbox', f'{where}.bbox')


def _entry_dict(entry) -> dict:
    d = attr.asdict(entry, recurse=False)
    extra = d.pop('extra')
    if 'bbox' in d:
        d['bbox'] = list(d['bbox'])
    return {**extra, **d}


_TYPES = {int: (int,), float: (int, float), str: (str,)}


def _entries(cls, d: dict, key: str) -> list:
    if key not in d:
        raise ParseError(f'missing {key!r}', key, key)
    if not isinstance(d[key], list):
        raise ParseError(f'{key!r} is not a list', key, key)
    known = [f for f in attr.fields(cls) if f.name != 'extra']
    out = []
    for k, item in enumerate(d[key]):
        where = f'{key}[{k}]'
        if not isinstance(item, dict):
            raise ParseError('entry is not an object', key, where)
        values = {}
        for f in known:
            if f.name not in item:
                raise ParseError(f'missing {f.name!r}', f.name,
                                 f'{where}.{f.name}')
            values[f.name] = _typed(item[f.name], f, f'{where}.{f.name}')
        out.append(cls(**values, extra={n: v for n, v in item.items()
                                        if n not in values}))
    return out


def _typed(value, field, where):
    if field.name == 'bbox':
        if (not isinstance(value, list) or len(value) != 4 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in value)):
            raise ParseError('bbox is not four numbers', 'bbox', where)
        return value
    allowed = _TYPES[field.type]
    if isinstance(value, bool) or not isinstance(value, allowed):
        raise ParseError(f'{field.name} should be {field.type.__name__}',
                         field.name, where)
    return value


def load_manifest(path) -> DatasetManifest:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ParseError(f'not JSON: {err}', None, str(path)) from err
    return DatasetManifest.from_dict(d)


def save_manifest(manifest: DatasetManifest, path):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=1))


def bbox_to_box(bbox, width: int, height: int):
    """COCO pixel [x_min, y_min, w, h] -> normalized [x_c, y_c, w, h]"""

    x, y, w, h = bbox
    return ((x + w / 2) / width, (y + h / 2) / height, w / width, h / height)


def box_to_bbox(box, width: int, height: int):
    x, y, w, h = box
    return ((x - w / 2) * width, (y - h / 2) * height, w * width, h * height)


def categories(names: Sequence[str] = CLASSES) -> List[Category]:
    return [Category(i, name) for i, name in enumerate(names)]


def file_name(image_id: int) -> str:
    return f'{IMAGES}/{image_id:06d}.png'


def write_png(image: np.ndarray, path):
    Image.fromarray(np.round(np.clip(image, 0, 1) * 255).astype(np.uint8),
                    'RGB').save(path)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert('RGB'), dtype=float) / 255


def to_manifest(dataset: Sequence[Sample],
                names: Sequence[str] = CLASSES) -> DatasetManifest:
    images, annotations = [], []
    for s in dataset:
        height, width = s.image.shape[:2]
        images.append(ImageEntry(s.image_id, file_name(s.image_id),
                                 width, height))
        annotations.extend(
            AnnotationEntry(a.id, s.image_id, a.c,
                            box_to_bbox(a.P, width, height))
            for a in s.annotations)
    return DatasetManifest(images, annotations, categories(names))


def save_dataset(dataset: Sequence[Sample], directory,
                 report: Optional[PoisonReport] = None,
                 names: Sequence[str] = CLASSES) -> DatasetManifest:
    """write PNGs, the manifest, and the poison report if any"""

    directory = Path(directory)
    (directory / IMAGES).mkdir(parents=True, exist_ok=True)
    manifest = to_manifest(dataset, names)
    for s, entry in zip(dataset, manifest.images):
        write_png(s.image, directory / entry.file_name)
    save_manifest(manifest, directory / MANIFEST)
    if report is not None:
        report.save(directory / POISON_REPORT)
    logger.info('wrote %d images to %s', len(dataset), directory)
    return manifest


def load_dataset(directory) -> Tuple[List[Sample], Optional[PoisonReport]]:
    """read back what :func:`save_dataset` wrote

    Provenance is re-attached from the poison report when present.

    """

    directory = Path(directory)
    manifest = load_manifest(directory / MANIFEST)
    report_path = directory / POISON_REPORT
    report = PoisonReport.load(report_path) if report_path.exists() else None
    provenance = report.provenance if report is not None else {}
    by_image: Dict[int, list] = {e.id: [] for e in manifest.images}
    for a in manifest.annotations:
        by_image[a.image_id].append(a)
    samples = []
    for entry in manifest.images:
        samples.append(Sample(
            entry.id, read_png(directory / entry.file_name),
            [Annotation(a.category_id,
                        bbox_to_box(a.bbox, entry.width, entry.height), a.id)
             for a in by_image[entry.id]],
            provenance.get(entry.id)))
    return samples, report
