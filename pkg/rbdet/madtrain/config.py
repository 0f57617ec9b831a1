"""settings of the training regimes and their product"""

import hashlib
import json
from typing import Tuple
from warnings import warn

import attr
import numpy as np

from ..detector import DetectorParams
from ..detector.loss import WEIGHTS
from ..errors import ConfigError
from ..post import smooth

REGIMES = ('clean', 'backdoor', 'mad')


def _floats(values):
    return tuple(map(float, values))


def _digest(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@attr.s(auto_attribs=True, frozen=True)
class TrainConfig:
    """mini-batch momentum SGD

    :param epochs: int >= 1

    :param batch_size: int >= 1

    :param lr: float >= 0, initial learning rate

    :param momentum: float in [0, 1)

    :param schedule: 'cosine' or 'constant'

    :param weights: (a1, a2, a3) of L_y

    :param seed: int, for batch order

    :param regime: one of REGIMES

    :param checkpoint_every: int, epochs between checkpoints, 0 for none

    """

    epochs: int = 200
    batch_size: int = 16
    lr: float = 0.01
    momentum: float = 0.9
    schedule: str = 'cosine'
    weights: Tuple[float, float, float] = attr.ib(default=WEIGHTS,
                                                  converter=_floats)
    seed: int = 0
    regime: str = 'clean'
    checkpoint_every: int = 0

    def __attrs_post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f'epochs {self.epochs} below 1')
        if self.batch_size < 1:
            raise ConfigError(f'batch size {self.batch_size} below 1')
        if self.lr < 0:
            raise ConfigError(f'learning rate {self.lr} is negative')
        if not 0 <= self.momentum < 1:
            raise ConfigError(f'momentum {self.momentum} outside [0, 1)')
        if self.schedule not in ('cosine', 'constant'):
            raise ConfigError(f'unknown schedule {self.schedule!r}')
        if len(self.weights) != 3 or min(self.weights) < 0:
            raise ConfigError(f'loss weights {self.weights}')
        if self.regime not in REGIMES:
            raise ConfigError(f'unknown regime {self.regime!r}')

    def learning_rate(self, epoch: int) -> float:
        if self.schedule == 'constant':
            return self.lr
        return 0.5 * self.lr * (1 + np.cos(np.pi * epoch / self.epochs))

    @property
    def digest(self) -> str:
        return _digest(attr.asdict(self))

    @property
    def resume_digest(self) -> str:
        """digest of the settings a checkpoint must share to be resumed

        Checkpointing frequency never matters, nor, under a constant
        learning rate, the number of epochs, so a finished run can be
        extended.

        """

        d = attr.asdict(self)
        del d['checkpoint_every']
        if self.schedule == 'constant':
            del d['epochs']
        return _digest(d)


@attr.s(auto_attribs=True, frozen=True)
class AttackBudget:
    """the inner maximization's allowance

    :param epsilon: L-infinity bound on the crafted noise

    :param steps: T, number of sign-gradient steps

    :param step_size: eta

    :param betas: weights of L_v per tap layer, in tap order

    :param objective: 'full' (L_v - L_y), 'no_lv' (-L_y), or
    'no_ly' (L_v)

    :param baseline: 'poisoned' compares features against x-hat,
    'clean' against the clean source x

    :param random_start: start from uniform noise in [-epsilon, epsilon]
    on the trigger support instead of zero

    :param seed: int, for random starts

    """

    epsilon: float = 16 / 255
    steps: int = 10
    step_size: float = 2 / 255
    betas: Tuple[float, ...] = attr.ib(default=(0.5, 1.5, 3.0),
                                       converter=_floats)
    objective: str = 'full'
    baseline: str = 'poisoned'
    random_start: bool = False
    seed: int = 0

    def __attrs_post_init__(self):
        if self.epsilon < 0 or self.step_size < 0:
            raise ConfigError('epsilon and step size must be nonnegative')
        if self.steps < 1:
            raise ConfigError(f'{self.steps} ascent steps, need at least 1')
        if min(self.betas, default=0.) <= 0:
            raise ConfigError(f'layer weights {self.betas} must be positive')
        if self.objective not in ('full', 'no_lv', 'no_ly'):
            raise ConfigError(f'unknown objective {self.objective!r}')
        if self.baseline not in ('poisoned', 'clean'):
            raise ConfigError(f'unknown feature baseline {self.baseline!r}')
        if self.step_size > self.epsilon > 0:
            warn(f'step size {self.step_size} exceeds epsilon {self.epsilon}')


@attr.s(auto_attribs=True, frozen=True, eq=False)
class TrainedModel:
    """parameters with the record of how they were reached

    :param params: DetectorParams

    :param regime: one of REGIMES

    :param history: per-epoch mean training loss

    :param config_digest: digest of the TrainConfig used

    """

    params: DetectorParams
    regime: str
    history: Tuple[float, ...] = attr.ib(converter=tuple)
    config_digest: str = ''

    @property
    def digest(self) -> str:
        return self.params.digest

    def smoothed_history(self, window: int = 5):
        return smooth(self.history, window)

    def save(self, path):
        self.params.save(path, meta={'regime': self.regime,
                                     'history': list(self.history),
                                     'config_digest': self.config_digest})

    @classmethod
    def load(cls, path, config=None) -> 'TrainedModel':
        params, meta, _ = DetectorParams.load(path, config)
        return cls(params, meta.get('regime', ''), meta.get('history', ()),
                   meta.get('config_digest', ''))
