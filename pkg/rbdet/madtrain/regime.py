"""the three training regimes as marches through epochs

A regime generates the sequence of training states epoch by epoch,
much as a dynamical system generates states step by step; training
for a fixed number of epochs is then truncation of that sequence.

"""

import hashlib
import itertools as it
import json
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import attr
import numpy as np
from toolz import valmap

from ..detector import DetectorConfig, DetectorParams, detection_loss, forward
from ..errors import ConfigError, TrainingError
from ..sample import Sample
from .config import AttackBudget, TrainConfig, TrainedModel
from .craft import craft_batch

logger = logging.getLogger(__name__)

CHECKPOINT = 'checkpoint.npz'


@attr.s(auto_attribs=True, frozen=True, eq=False)
class TrainState:
    """parameters, momentum buffers, and history after `epoch` epochs

    :param regime: tag of the regime that reached the state

    :param config_digest: resume digest of the regime's settings

    """

    params: DetectorParams
    velocity: Dict[str, np.ndarray]
    epoch: int = 0
    history: tuple = ()
    regime: str = ''
    config_digest: str = ''

    @classmethod
    def start(cls, params: DetectorParams, regime: str = '',
              config_digest: str = '') -> 'TrainState':
        return cls(params, valmap(np.zeros_like, params.arrays),
                   regime=regime, config_digest=config_digest)

    def save(self, path):
        self.params.save(path, meta={'regime': self.regime,
                                     'epoch': self.epoch,
                                     'history': list(self.history),
                                     'config_digest': self.config_digest},
                         extra=self.velocity)

    @classmethod
    def load(cls, path, config: Optional[DetectorConfig] = None):
        params, meta, velocity = DetectorParams.load(path, config)
        return cls(params, velocity, meta['epoch'], tuple(meta['history']),
                   meta.get('regime', ''), meta.get('config_digest', ''))


def stratified_batches(n_clean: int, n_poisoned: int, batch_size: int,
                       rng: np.random.Generator):
    """index pairs (clean, poisoned) per batch, mixing both in proportion"""

    n_batches = max(1, -(-(n_clean + n_poisoned) // batch_size))
    clean = np.array_split(rng.permutation(n_clean), n_batches)
    poisoned = np.array_split(rng.permutation(n_poisoned), n_batches)
    return [(c, p) for c, p in zip(clean, poisoned) if len(c) + len(p)]


class Regime:
    """virtual base class of training regimes

    Subclasses provide :meth:`batch_loss`.

    :param clean: sequence of Sample, D_c

    :param poisoned: sequence of Sample, D_p

    :param cfg: TrainConfig

    :param log_path: optional JSON-lines file receiving one record per
    epoch

    """

    tag: str = ''

    def __init__(self, clean: Sequence[Sample],
                 poisoned: Sequence[Sample],
                 cfg: TrainConfig,
                 log_path=None):
        self.clean, self.poisoned = list(clean), list(poisoned)
        if not self.clean and not self.poisoned:
            raise ConfigError('nothing to train on')
        self.cfg = attr.evolve(cfg, regime=self.tag)
        self.log_path = None if log_path is None else Path(log_path)

    @property
    def resume_digest(self) -> str:
        """what a checkpoint must have been trained under to be resumed"""

        return self.cfg.resume_digest

    def resumable(self, state: TrainState, path):
        """raise ConfigError unless state can continue this regime"""

        if state.regime != self.tag:
            raise ConfigError(f'{path} holds a {state.regime or "untagged"} '
                              f'checkpoint, not {self.tag}')
        if state.config_digest != self.resume_digest:
            raise ConfigError(f'{path} was trained under other settings')
        if state.epoch > self.cfg.epochs:
            raise ConfigError(f'{path} is {state.epoch} epochs in, past the '
                              f'{self.cfg.epochs} asked for')

    def batch_loss(self, params, leaves, clean: List[Sample],
                   poisoned: List[Sample], epoch: int, index: int):
        """scalar Tensor to descend on for one mini-batch"""

        raise NotImplementedError

    def step(self, state: TrainState) -> TrainState:
        """one epoch of momentum SGD from state"""

        epoch, cfg = state.epoch, self.cfg
        lr = cfg.learning_rate(epoch)
        rng = np.random.default_rng([cfg.seed, epoch])
        params, velocity = state.params, state.velocity
        losses = []
        for index, (ci, pi) in enumerate(stratified_batches(
                len(self.clean), len(self.poisoned), cfg.batch_size, rng)):
            leaves = params.leaves()
            loss = self.batch_loss(params, leaves,
                                   [self.clean[i] for i in ci],
                                   [self.poisoned[i] for i in pi],
                                   epoch, index)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(f'{self.tag} loss is {value}', epoch)
            loss.backward()
            velocity = {n: cfg.momentum * velocity[n] + (
                0. if leaves[n].grad is None else leaves[n].grad)
                        for n in params.arrays}
            params = params.replace({n: a - lr * velocity[n]
                                     for n, a in params.arrays.items()})
            losses.append(value)
            logger.debug('%s epoch %d batch %d loss %.6g',
                         self.tag, epoch, index, value)

        mean = float(np.mean(losses))
        logger.info('%s epoch %d/%d loss %.6g lr %.3g',
                    self.tag, epoch + 1, cfg.epochs, mean, lr)
        if self.log_path is not None:
            with open(self.log_path, 'a') as f:
                f.write(json.dumps({'regime': self.tag, 'epoch': epoch,
                                    'loss': mean, 'lr': lr}) + '\n')
        return attr.evolve(state, params=params, velocity=velocity,
                           epoch=epoch + 1, history=state.history + (mean,))

    def march(self, state: TrainState) -> Iterator[TrainState]:
        """generate the states after each successive epoch, indefinitely"""

        while True:
            yield state
            state = self.step(state)

    def march_till(self, epochs: int, state: TrainState):
        """march until `epochs` epochs have been completed"""

        # TRICKY: islice, unlike takewhile, never asks the march for the
        # state after the last one, which would cost a whole epoch.
        return it.islice(self.march(state), max(0, epochs - state.epoch + 1))

    def run(self, params: DetectorParams,
            checkpoint_dir=None) -> TrainedModel:
        """train for cfg.epochs from params, or resume from a checkpoint

        With a checkpoint_dir and cfg.checkpoint_every, the state is
        saved every that many epochs and at the end; an existing
        checkpoint there is resumed from, provided it was made by the
        same regime under the same settings and has not gone past
        cfg.epochs (else ConfigError).

        """

        state = TrainState.start(params, self.tag, self.resume_digest)
        path = None if checkpoint_dir is None else Path(
            checkpoint_dir) / CHECKPOINT
        if path is not None and path.exists():
            state = TrainState.load(path, params.config)
            self.resumable(state, path)
            logger.info('%s resuming after epoch %d', self.tag, state.epoch)

        every = self.cfg.checkpoint_every
        for state in self.march_till(self.cfg.epochs, state):
            if path is not None and every and state.epoch and (
                    state.epoch % every == 0
                    or state.epoch == self.cfg.epochs):
                state.save(path)
        return TrainedModel(state.params, self.tag, state.history,
                            self.cfg.digest)


def joint_loss(params, leaves, samples: Sequence[Sample], weights,
               images: Optional[np.ndarray] = None, reduction='sum'):
    """L_y of samples (against their own labels) under the leaves"""

    images = np.stack([s.image for s in samples]) if images is None \
        else images
    raw, _ = forward(params, images, leaves)
    return detection_loss(raw, [s.annotations for s in samples], weights,
                          params.config.anchor, reduction)


class CleanRegime(Regime):
    """minimize L_y on clean data"""

    tag = 'clean'

    def batch_loss(self, params, leaves, clean, poisoned, epoch, index):
        return joint_loss(params, leaves, clean + poisoned, self.cfg.weights,
                          reduction='mean')


class BackdoorRegime(CleanRegime):
    """minimize L_B over mixed batches of D_c (vs y) and D_p (vs y-hat)"""

    tag = 'backdoor'

    def __init__(self, clean, poisoned, cfg, log_path=None):
        if not poisoned:
            raise ConfigError('backdoor training without poisoned samples; '
                              'use clean training')
        super().__init__(clean, poisoned, cfg, log_path)


class MadRegime(BackdoorRegime):
    """malicious adversarial training

    Each batch's poisoned samples get crafted noise against the frozen
    current parameters; the noised copies join the batch with their
    poisoned labels.  Copies whose noise is identically zero would
    only duplicate their source and are left out.

    """

    tag = 'mad'

    def __init__(self, clean, poisoned, cfg, budget: AttackBudget,
                 log_path=None):
        super().__init__(clean, poisoned, cfg, log_path)
        self.budget = budget
        self._budget_digest = hashlib.sha256(json.dumps(
            attr.asdict(budget), sort_keys=True).encode()).hexdigest()
        if budget.baseline == 'clean' and any(
                s.clean_image is None for s in self.poisoned):
            raise ConfigError('a clean feature baseline needs the clean '
                              'source image of every poisoned sample')

    @property
    def resume_digest(self) -> str:
        return hashlib.sha256((self.cfg.resume_digest
                               + self._budget_digest).encode()).hexdigest()

    def batch_loss(self, params, leaves, clean, poisoned, epoch, index):
        samples = clean + poisoned
        images = [s.image for s in samples]
        if poisoned:
            crafted = craft_batch(
                params,
                np.stack([s.image for s in poisoned]),
                np.stack([s.trigger_mask() for s in poisoned]),
                [s.provenance.clean_annotations for s in poisoned],
                self.budget,
                (np.stack([s.clean_image for s in poisoned])
                 if self.budget.baseline == 'clean' else None),
                self.cfg.weights,
                np.random.default_rng([self.budget.seed, epoch, index]))
            for s, d in zip(poisoned, crafted.delta):
                if np.any(d != 0):
                    samples.append(s)
                    images.append(s.image + d)
        return joint_loss(params, leaves, samples, self.cfg.weights,
                          np.stack(images), reduction='mean')


def _initial(params, cfg, detector_config):
    if params is not None:
        return params
    return DetectorParams.initialize(detector_config or DetectorConfig(),
                                     cfg.seed)


def train_clean(dataset: Sequence[Sample], cfg: TrainConfig,
                params: Optional[DetectorParams] = None,
                detector_config: Optional[DetectorConfig] = None,
                log_path=None, checkpoint_dir=None) -> TrainedModel:
    """minimize mean L_y over a clean dataset"""

    return CleanRegime(dataset, [], cfg, log_path).run(
        _initial(params, cfg, detector_config), checkpoint_dir)


def train_backdoor(clean: Sequence[Sample], poisoned: Sequence[Sample],
                   cfg: TrainConfig,
                   params: Optional[DetectorParams] = None,
                   detector_config: Optional[DetectorConfig] = None,
                   log_path=None, checkpoint_dir=None) -> TrainedModel:
    """the backdoor object detector (BOD)"""

    return BackdoorRegime(clean, poisoned, cfg, log_path).run(
        _initial(params, cfg, detector_config), checkpoint_dir)


def train_mad(bod: TrainedModel, clean: Sequence[Sample],
              poisoned: Sequence[Sample], budget: AttackBudget,
              cfg: TrainConfig, log_path=None,
              checkpoint_dir=None) -> TrainedModel:
    """the robust backdoor detector (RD), warm-started from a BOD"""

    return MadRegime(clean, poisoned, cfg, budget, log_path).run(
        bod.params, checkpoint_dir)
