import numpy as np
from pytest import fixture

from rbdet.detector import Annotation, DetectorConfig, DetectorParams
from rbdet.poisoncraft import PoisonConfig, TriggerSpec, poison_dataset
from rbdet.sample import Sample

TINY = DetectorConfig(image_side=16, grid_side=2, num_classes=4,
                      channels=(3, 4, 4), pool_after=(1, 2, 3),
                      taps=(1, 2, 3))


@fixture
def tiny_config():
    return TINY


@fixture
def tiny_params():
    return DetectorParams.initialize(TINY, seed=3)


@fixture
def rng():
    return np.random.default_rng(11)


def toy_scene(image_id, rng, side=16):
    """a target object and one other, with sequential annotation ids"""
    return Sample(image_id, rng.uniform(size=(side, side, 3)),
                  [Annotation(0, (0.5, 0.5, 0.5, 0.5), 2 * image_id),
                   Annotation(1, (0.25, 0.25, 0.25, 0.25), 2 * image_id + 1)])


@fixture
def toy_dataset():
    rng = np.random.default_rng(5)
    return [toy_scene(i, rng) for i in range(6)]


@fixture
def toy_poisoned(toy_dataset):
    """half the target boxes poisoned, with trigger removal"""
    return poison_dataset(toy_dataset, TriggerSpec(),
                          PoisonConfig(poi=0.25, seed=2))
