"""experiment configuration: flat dotted keys with typed defaults

A configuration file is a YAML mapping of keys such as
``train.epochs`` to values, plus an optional ``sweep`` mapping of keys
to lists of values.  Every key has a default here; a value is coerced
to its default's type.

"""

import hashlib
import itertools as it
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml
from toolz import merge

from ..detector import DetectorConfig
from ..errors import ConfigError
from ..evalbench import EvalThresholds
from ..madtrain import AttackBudget, TrainConfig
from ..physnoise import NoiseSpec
from ..poisoncraft import PoisonConfig, TriggerSpec, default_trigger, \
    load_trigger
from .synth import SceneSpec

STAGES = ('synth', 'poison', 'train_clean', 'train_backdoor', 'train_mad',
          'eval', 'report')

DEFAULTS: Dict[str, Any] = {
    'run.name': 'rba',
    'run.seed': 0,
    'run.stages': list(STAGES),
    'run.source': '',

    'synth.image_side': 64,
    'synth.n_train': 2000,
    'synth.n_val': 400,
    'synth.objects': [1, 3],
    'synth.size': [0.15, 0.5],
    'synth.max_iou': 0.3,
    'synth.class_weights': [0.55, 0.15, 0.15, 0.15],

    'detector.grid_side': 8,
    'detector.channels': [8, 16, 16, 32, 32, 64, 64],
    'detector.pool_after': [2, 4, 6],
    'detector.taps': [3, 5, 7],
    'detector.anchor': [0.25, 0.25],

    'trigger.path': '',
    'trigger.side': 16,
    'trigger.transparency': 1.0,
    'trigger.ratio': [0.4, 0.4],
    'trigger.mode': 'variable',
    'trigger.fixed_size': [8, 8],
    'trigger.placement': 'center',
    'trigger.offset': [0., 0.],
    'trigger.interpolation': 'bilinear',
    'trigger.transform': 'none',

    'poison.target_class': 0,
    'poison.poi': 0.1,
    'poison.label_rule': 'remove',
    'poison.relabel_class': 1,
    'poison.relabel_box': [0.5, 0.5, 0.1, 0.1],
    'poison.all_objects': False,

    'train.epochs': 200,
    'train.batch_size': 16,
    'train.lr': 0.01,
    'train.momentum': 0.9,
    'train.schedule': 'cosine',
    'train.weights': [0.5, 0.05, 1.0],
    'train.checkpoint_every': 10,

    'mad.epochs': 50,
    'mad.lr': 0.005,

    'attack.epsilon': 16 / 255,
    'attack.steps': 10,
    'attack.step_size': 2 / 255,
    'attack.betas': [0.5, 1.5, 3.0],
    'attack.objective': 'full',
    'attack.baseline': 'poisoned',
    'attack.random_start': False,

    'eval.conf': 0.25,
    'eval.nms': 0.45,
    'eval.iou': 0.5,
    'eval.ap_conf': 0.01,
    'eval.noise.kind': 'none',
    'eval.noise.levels': [],
    'eval.noise.angle': 0.,
    'eval.noise.region': 'image',
    'eval.loss_noise.kind': 'gaussian',
    'eval.loss_noise.level': 0.1,
}

SEED_NAMES = ('synth', 'poison', 'init', 'train', 'attack', 'noise')


def coerce(key: str, value):
    """value as the type of key's default"""

    if key not in DEFAULTS:
        raise ConfigError(f'unknown configuration key {key!r}')
    default = DEFAULTS[key]
    try:
        return _as(type(default), value, default)
    except (TypeError, ValueError) as err:
        raise ConfigError(f'{key}: cannot use {value!r} ({err})') from err


def _as(kind, value, default):
    if kind is bool:
        if isinstance(value, str) and value.lower() in ('true', 'false'):
            return value.lower() == 'true'
        if not isinstance(value, bool):
            raise TypeError('not a boolean')
        return value
    if kind is int:
        if isinstance(value, bool) or float(value) != int(float(value)):
            raise TypeError('not an integer')
        return int(float(value))
    if kind is float:
        if isinstance(value, bool):
            raise TypeError('not a number')
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise TypeError('not a string')
        return value
    if isinstance(value, str):
        value = [v for v in value.split(',') if v.strip()]
    if not isinstance(value, (list, tuple)):
        raise TypeError('not a list')
    element = type(default[0]) if default else float
    return [_as(element, v, None) for v in value]


def resolve(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """DEFAULTS updated with coerced overrides"""

    overrides = overrides or {}
    return merge(DEFAULTS, {k: coerce(k, v) for k, v in overrides.items()})


def parse_assignment(text: str) -> Tuple[str, Any]:
    """'key=value' from the command line, the value read as YAML"""

    key, sep, value = text.partition('=')
    if not sep:
        raise ConfigError(f'expected key=value, got {text!r}')
    return key.strip(), yaml.safe_load(value)


def load_config(path) -> Tuple[Dict[str, Any], Dict[str, list]]:
    """(overrides, sweep) from a YAML file"""

    try:
        document = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as err:
        raise ConfigError(f'{path}: {err}') from err
    if not isinstance(document, dict):
        raise ConfigError(f'{path}: not a mapping of keys to values')
    sweep = document.pop('sweep', None) or {}
    if not isinstance(sweep, dict):
        raise ConfigError(f'{path}: sweep is not a mapping')
    for key, values in sweep.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f'sweep over {key!r} needs a nonempty list')
        for v in values:
            coerce(key, v)
    for key, value in document.items():
        coerce(key, value)
    return document, sweep


def sweep_points(sweep: Dict[str, list]) -> List[Dict[str, Any]]:
    """the Cartesian product of the swept values, in file order"""

    keys = list(sweep)
    return [dict(zip(keys, values))
            for values in it.product(*(sweep[k] for k in keys))]


def point_name(point: Dict[str, Any]) -> str:
    return ','.join(f'{k}={v}' for k, v in point.items()) or 'base'


def digest(cfg: Dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True)
                          .encode()).hexdigest()


def seeds(cfg: Dict[str, Any]) -> Dict[str, int]:
    """independent sub-seeds of run.seed, one per concern"""

    children = np.random.SeedSequence(cfg['run.seed']).spawn(len(SEED_NAMES))
    return {name: int(child.generate_state(1)[0])
            for name, child in zip(SEED_NAMES, children)}


def scene_spec(cfg) -> SceneSpec:
    return SceneSpec(cfg['synth.image_side'], cfg['synth.objects'],
                     cfg['synth.size'], cfg['synth.max_iou'],
                     class_weights=cfg['synth.class_weights'])


def detector_config(cfg) -> DetectorConfig:
    return DetectorConfig(
        image_side=cfg['synth.image_side'],
        grid_side=cfg['detector.grid_side'],
        channels=cfg['detector.channels'],
        pool_after=cfg['detector.pool_after'],
        taps=cfg['detector.taps'],
        anchor=cfg['detector.anchor'])


def trigger_spec(cfg) -> TriggerSpec:
    bitmap = load_trigger(cfg['trigger.path']) if cfg['trigger.path'] \
        else default_trigger(cfg['trigger.side'])
    return TriggerSpec(
        bitmap, cfg['trigger.transparency'], cfg['trigger.ratio'],
        cfg['trigger.mode'],
        (tuple(cfg['trigger.fixed_size'])
         if cfg['trigger.mode'] == 'fixed' else None),
        cfg['trigger.placement'], cfg['trigger.offset'],
        cfg['trigger.interpolation'], cfg['trigger.transform'])


def poison_config(cfg) -> PoisonConfig:
    relabel = cfg['poison.label_rule'] == 'relabel'
    return PoisonConfig(
        cfg['poison.target_class'], cfg['poison.poi'],
        cfg['poison.label_rule'],
        cfg['poison.relabel_class'] if relabel else None,
        cfg['poison.relabel_box'] if relabel else (0., 0., 0., 0.),
        cfg['poison.all_objects'], seeds(cfg)['poison'])


def train_config(cfg, regime: str = 'clean') -> TrainConfig:
    mad = regime == 'mad'
    return TrainConfig(
        cfg['mad.epochs'] if mad else cfg['train.epochs'],
        cfg['train.batch_size'],
        cfg['mad.lr'] if mad else cfg['train.lr'],
        cfg['train.momentum'], cfg['train.schedule'],
        cfg['train.weights'], seeds(cfg)['train'], regime,
        cfg['train.checkpoint_every'])


def attack_budget(cfg) -> AttackBudget:
    return AttackBudget(
        cfg['attack.epsilon'], cfg['attack.steps'], cfg['attack.step_size'],
        cfg['attack.betas'], cfg['attack.objective'],
        cfg['attack.baseline'], cfg['attack.random_start'],
        seeds(cfg)['attack'])


def thresholds(cfg) -> EvalThresholds:
    return EvalThresholds(cfg['eval.conf'], cfg['eval.nms'],
                          cfg['eval.iou'], cfg['eval.ap_conf'])


def noise_axis(cfg) -> List[Tuple[Optional[float], NoiseSpec]]:
    """(level, NoiseSpec) per evaluation noise setting

    The noise-free setting comes first, with level None.

    """

    kind = cfg['eval.noise.kind']
    seed = seeds(cfg)['noise']
    points = [(None, NoiseSpec(seed=seed))]
    if kind == 'none':
        return points
    return points + [
        (level, NoiseSpec(kind, level, cfg['eval.noise.angle'], seed,
                          cfg['eval.noise.region']))
        for level in cfg['eval.noise.levels']]


def loss_noise(cfg) -> NoiseSpec:
    """the disturbance of the noised split in loss-change tables"""

    return NoiseSpec(cfg['eval.loss_noise.kind'], cfg['eval.loss_noise.level'],
                     seed=seeds(cfg)['noise'])
