"""a run as a path of dependent stages

Really it's a list of stages, the artifacts of each becoming the
input of those after it; every stage writes once into its own
directory under the run and marks it DONE when complete.  A stage
found DONE is not run again, which is what resuming an interrupted
run amounts to; a training stage left incomplete picks up from its
last checkpoint.

Artifacts a run does not make itself are looked up, stage by stage,
in the directory of an earlier run named by ``run.source`` (replay),
or in a sibling sweep point whose configuration agrees on everything
the stage depends on.

"""

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence
from warnings import warn

import attr
import pandas as pd

from ..detector import DetectorParams
from ..errors import ConfigError
from ..evalbench import (attack_success_by_class, comparison_table,
                         evaluate_full, scoreb_buckets)
from ..madtrain import (TrainedModel, loss_change_report, train_backdoor,
                        train_clean, train_mad)
from ..physnoise import noise_dataset
from ..poisoncraft import build_eval_splits, poison_dataset, split_poisoned
from ..post import trend_check
from . import config as configuration
from .manifest import load_dataset, save_dataset, write_png
from .report import emit_report, sweep_table
from .synth import generate_synthetic

logger = logging.getLogger(__name__)

DONE = 'DONE'
RECORD = 'run.json'
CONFIG = 'config.json'
MODEL = 'model.npz'
TRAINING_LOG = 'train.jsonl'

STAGES = configuration.STAGES

# stages whose artifacts each stage reads
UPSTREAM = {
    'synth': (),
    'poison': ('synth',),
    'train_clean': ('synth',),
    'train_backdoor': ('poison',),
    'train_mad': ('train_backdoor',),
    'eval': ('train_clean', 'train_backdoor', 'train_mad'),
    'report': ('eval',),
}

# configuration key prefixes each stage reads, upstream ones aside
KEYS = {
    'synth': ('run.seed', 'synth.'),
    'poison': ('trigger.', 'poison.'),
    'train_clean': ('detector.', 'train.'),
    'train_backdoor': ('detector.', 'train.'),
    'train_mad': ('mad.', 'attack.'),
    'eval': ('eval.', 'trigger.', 'poison.'),
    'report': (),
}

# the model each training stage makes, by method name
METHODS = (('clean', 'train_clean'), ('backdoor', 'train_backdoor'),
           ('mad', 'train_mad'))


def closure(stage: str) -> List[str]:
    """the stage and everything upstream of it"""

    out, pending = [], [stage]
    while pending:
        s = pending.pop()
        if s not in out:
            out.append(s)
            pending.extend(UPSTREAM[s])
    return sorted(out, key=STAGES.index)


def fingerprint(cfg: Dict[str, Any], stage: str) -> str:
    """digest of the configuration a stage's artifacts depend on"""

    prefixes = tuple(p for s in closure(stage) for p in KEYS[s])
    return configuration.digest(
        {k: v for k, v in cfg.items() if k.startswith(prefixes)})


def source_digest() -> str:
    """digest of the package's own source files"""

    h = hashlib.sha256()
    for path in sorted(Path(__file__).parents[1].rglob('*.py')):
        h.update(path.read_bytes())
    return h.hexdigest()


@attr.s(auto_attribs=True)
class RunRecord:
    """what a run was asked to do and what became of it

    :param status: 'running', 'completed', or 'failed'

    :param failed_stage: name of the stage that raised, if any

    :param stage_dirs: where each stage's artifacts are, which may be
    outside the run for replayed or shared stages

    :param points: for a sweep, the records of its points

    :param trend: for a sweep, the trend check of the noise-free ASR
    of the most robust model along the points

    """

    run_id: str
    directory: str
    config: Dict[str, Any]
    config_digest: str
    seeds: Dict[str, int]
    status: str = 'running'
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    stages: List[str] = attr.Factory(list)
    stage_dirs: Dict[str, str] = attr.Factory(dict)
    checkpoints: Dict[str, str] = attr.Factory(dict)
    reports: Dict[str, str] = attr.Factory(dict)
    tables: Dict[str, str] = attr.Factory(dict)
    wall_clock: float = 0.
    source_digest: str = ''
    point: Dict[str, Any] = attr.Factory(dict)
    points: List['RunRecord'] = attr.Factory(list)
    trend: Optional[Dict[str, Any]] = None

    def to_dict(self) -> dict:
        d = attr.asdict(self, recurse=False)
        d['points'] = [p.to_dict() for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'RunRecord':
        d = dict(d)
        d['points'] = [cls.from_dict(p) for p in d.get('points', [])]
        return cls(**d)

    def save(self):
        Path(self.directory, RECORD).write_text(
            json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, directory) -> 'RunRecord':
        return cls.from_dict(json.loads(Path(directory, RECORD).read_text()))


class RunContext:
    """the resolved configuration and the way to every stage's artifacts

    :param cfg: resolved flat configuration

    :param directory: the run directory

    :param shared: mapping from stage fingerprint to a completed stage
    directory elsewhere, filled in as stages complete

    """

    def __init__(self, cfg: Dict[str, Any], directory,
                 shared: Optional[Dict[str, Path]] = None):
        self.cfg = cfg
        self.directory = Path(directory)
        self.shared = {} if shared is None else shared
        self.seeds = configuration.seeds(cfg)
        self.detector_config = configuration.detector_config(cfg)
        self.stage_dirs: Dict[str, Path] = {}
        self.requested = set(cfg['run.stages'])
        self.current: Optional[str] = None
        self.record: Optional[RunRecord] = None
        self._cache: Dict[Any, Any] = {}
        source = cfg['run.source']
        self.source = Path(source) if source else None

    def own(self, stage: str) -> Path:
        return self.directory / stage

    def locate(self, stage: str) -> Optional[Path]:
        """the completed directory holding a stage's artifacts, if any

        A stage the run was asked to perform is never taken from
        run.source.

        """

        if stage in self.stage_dirs:
            return self.stage_dirs[stage]
        candidates = [self.own(stage),
                      self.shared.get(fingerprint(self.cfg, stage))]
        if self.source is not None and stage not in self.requested:
            candidates.append(self.source / stage)
        for candidate in candidates:
            if candidate is not None and (candidate / DONE).exists():
                if (candidate / DONE).read_text() != fingerprint(self.cfg,
                                                                  stage):
                    warn(f'{stage} artifacts in {candidate} were made '
                         'under another configuration')
                self.stage_dirs[stage] = candidate
                return candidate
        return None

    def has(self, stage: str) -> bool:
        return self.locate(stage) is not None

    def require(self, stage: str) -> Path:
        directory = self.locate(stage)
        if directory is None:
            raise ConfigError(f'no completed {stage} stage to read from; '
                              f'run it or name a run.source that has it')
        return directory

    def dataset(self, stage: str, split: str):
        key = (stage, split)
        if key not in self._cache:
            self._cache[key] = load_dataset(self.require(stage) / split)
        return self._cache[key]

    def model(self, stage: str) -> TrainedModel:
        if stage not in self._cache:
            self._cache[stage] = TrainedModel.load(
                self.require(stage) / MODEL, self.detector_config)
        return self._cache[stage]

    def initial_params(self) -> DetectorParams:
        return DetectorParams.initialize(self.detector_config,
                                         self.seeds['init'])


def _synth(ctx: RunContext, out: Path):
    cfg = ctx.cfg
    train, val = generate_synthetic(
        configuration.scene_spec(cfg), cfg['synth.n_train'],
        cfg['synth.n_val'], ctx.seeds['synth'])
    save_dataset(train, out / 'train')
    save_dataset(val, out / 'val')


def _poison(ctx: RunContext, out: Path):
    train, _ = ctx.dataset('synth', 'train')
    spec = configuration.trigger_spec(ctx.cfg)
    poisoned, report = poison_dataset(train, spec,
                                      configuration.poison_config(ctx.cfg))
    save_dataset(poisoned, out / 'train', report)
    write_png(spec.bitmap, out / 'trigger.png')


def attach_clean_images(poisoned, train):
    sources = {s.image_id: s.image for s in train}
    return [attr.evolve(s, clean_image=sources[s.provenance.source_id])
            for s in poisoned]


def _train_clean(ctx: RunContext, out: Path):
    train, _ = ctx.dataset('synth', 'train')
    model = train_clean(train, configuration.train_config(ctx.cfg, 'clean'),
                        ctx.initial_params(), log_path=out / TRAINING_LOG,
                        checkpoint_dir=out)
    model.save(out / MODEL)


def _train_backdoor(ctx: RunContext, out: Path):
    clean, poisoned = split_poisoned(ctx.dataset('poison', 'train')[0])
    model = train_backdoor(
        clean, poisoned, configuration.train_config(ctx.cfg, 'backdoor'),
        ctx.initial_params(), log_path=out / TRAINING_LOG,
        checkpoint_dir=out)
    model.save(out / MODEL)


def _train_mad(ctx: RunContext, out: Path):
    clean, poisoned = split_poisoned(ctx.dataset('poison', 'train')[0])
    budget = configuration.attack_budget(ctx.cfg)
    if budget.baseline == 'clean':
        poisoned = attach_clean_images(poisoned,
                                      ctx.dataset('synth', 'train')[0])
    model = train_mad(ctx.model('train_backdoor'), clean, poisoned, budget,
                      configuration.train_config(ctx.cfg, 'mad'),
                      log_path=out / TRAINING_LOG, checkpoint_dir=out)
    model.save(out / MODEL)


def _noised_splits(splits, noise):
    benign, attacked = (noise_dataset(s, noise) for s in splits[:2])
    return benign, attacked, benign + attacked


def _eval(ctx: RunContext, out: Path):
    cfg = ctx.cfg
    val, _ = ctx.dataset('synth', 'val')
    pcfg = configuration.poison_config(cfg)
    splits = build_eval_splits(val, configuration.trigger_spec(cfg), pcfg)
    models = {method: ctx.model(stage) for method, stage in METHODS
              if ctx.has(stage)}
    if not models:
        raise ConfigError('no trained model to evaluate')

    thresholds = configuration.thresholds(cfg)
    axis = cfg['eval.noise.kind']
    rows, buckets, by_class = [], [], []
    for level, noise in configuration.noise_axis(cfg):
        noised = _noised_splits(splits, noise)
        for method, model in models.items():
            report = evaluate_full(model, noised, thresholds,
                                   pcfg.target_class)
            name = method if level is None else f'{method}@{axis}={level}'
            report.save(out / f'{name}.json')
            rows.append((method, axis, level, report))
            if noised[1]:
                buckets.append({'method': method, 'axis': axis,
                                'value': level,
                                **scoreb_buckets(model, noised[1],
                                                 pcfg.target_class)})
                if pcfg.all_objects:
                    by_class.extend(
                        {'method': method, 'axis': axis, 'value': level,
                         'class': c, 'ASR': v}
                        for c, v in attack_success_by_class(
                            model, noised[1], thresholds.conf,
                            thresholds.iou, thresholds.nms).items())

    comparison_table(rows).to_csv(out / 'comparison.csv', index=False)
    pd.DataFrame(buckets, columns=['method', 'axis', 'value', 'low', 'mid',
                                   'high']).to_csv(out / 'buckets.csv',
                                                   index=False)
    pd.DataFrame(by_class, columns=['method', 'axis', 'value', 'class',
                                    'ASR']).to_csv(out / 'asr_by_class.csv',
                                                   index=False)
    _loss_changes(ctx, models, splits).to_csv(out / 'loss_change.csv',
                                              index=False)


def _loss_changes(ctx, models, splits) -> pd.DataFrame:
    """per-image loss deltas from the clean model to each other model"""

    noise = configuration.loss_noise(ctx.cfg)
    datasets = {'clean': splits[0], 'poisoned': splits[1],
                'poisoned+noise': noise_dataset(splits[1], noise)}
    weights = configuration.train_config(ctx.cfg).weights
    frames = []
    for method in ('backdoor', 'mad'):
        if 'clean' in models and method in models:
            frame = loss_change_report(models['clean'], models[method],
                                       datasets, weights)
            frame.insert(0, 'pair', f'clean->{method}')
            frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=['pair', 'dataset', 'image_id',
                                     'L_before', 'L_after', 'delta'])
    return pd.concat(frames, ignore_index=True)


def _report(ctx: RunContext, out: Path):
    emit_report(ctx.record, out)


RUNNERS: Dict[str, Callable[[RunContext, Path], None]] = {
    'synth': _synth, 'poison': _poison, 'train_clean': _train_clean,
    'train_backdoor': _train_backdoor, 'train_mad': _train_mad,
    'eval': _eval, 'report': _report}


class StagePath:
    """the requested stages, in pipeline order

    :param stages: sequence of stage names, a subset of STAGES

    """

    def __init__(self, stages: Sequence[str]):
        unknown = set(stages) - set(STAGES)
        if unknown:
            raise ConfigError(f'unknown stages {sorted(unknown)}')
        self.stages = [s for s in STAGES if s in stages]

    def __len__(self):
        return len(self.stages)

    def march(self, ctx: RunContext):
        """run the stages in turn, generating each name once it is done"""

        for stage in self.stages:
            ctx.current = stage
            if ctx.locate(stage) is not None:
                logger.info('%s: reusing %s', stage, ctx.stage_dirs[stage])
            else:
                out = ctx.own(stage)
                out.mkdir(parents=True, exist_ok=True)
                logger.info('%s: running into %s', stage, out)
                RUNNERS[stage](ctx, out)
                (out / DONE).write_text(fingerprint(ctx.cfg, stage))
                ctx.stage_dirs[stage] = out
            ctx.shared.setdefault(fingerprint(ctx.cfg, stage),
                                  ctx.stage_dirs[stage])
            yield stage


def _collect(record: RunRecord, ctx: RunContext):
    record.stage_dirs = {s: str(d) for s, d in ctx.stage_dirs.items()}
    for method, stage in METHODS:
        if stage in ctx.stage_dirs:
            record.checkpoints[method] = str(ctx.stage_dirs[stage] / MODEL)
    evaluated = ctx.stage_dirs.get('eval')
    if evaluated is not None:
        record.reports = {p.stem: str(p)
                          for p in sorted(evaluated.glob('*.json'))}
        record.tables = {p.stem: str(p)
                         for p in sorted(evaluated.glob('*.csv'))}


def run_point(cfg: Dict[str, Any], directory,
              shared: Optional[Dict[str, Path]] = None,
              point: Optional[Dict[str, Any]] = None) -> RunRecord:
    """run the pipeline once for a resolved configuration"""

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    snapshot = directory / CONFIG
    text = json.dumps(cfg, indent=1, sort_keys=True)
    if snapshot.exists() and snapshot.read_text() != text:
        raise ConfigError(f'{directory} holds a run of another '
                          'configuration')
    snapshot.write_text(text)

    record = RunRecord(cfg['run.name'], str(directory), cfg,
                       configuration.digest(cfg), configuration.seeds(cfg),
                       source_digest=source_digest(), point=point or {})
    ctx = RunContext(cfg, directory, shared)
    ctx.record = record
    start = time.time()
    try:
        for stage in StagePath(cfg['run.stages']).march(ctx):
            record.stages.append(stage)
            _collect(record, ctx)
            record.save()
    except Exception as err:
        record.status, record.error = 'failed', f'{type(err).__name__}: {err}'
        record.failed_stage = ctx.current
        record.wall_clock = time.time() - start
        _collect(record, ctx)
        record.save()
        logger.error('run %s failed in stage %s: %s', directory,
                     record.failed_stage, err)
        raise
    record.status = 'completed'
    record.wall_clock = time.time() - start
    _collect(record, ctx)
    record.save()
    return record


def run_experiment(config_path=None, root='runs',
                   overrides: Optional[Dict[str, Any]] = None,
                   sweep: Optional[Dict[str, list]] = None) -> RunRecord:
    """run a configured pipeline, once or over its sweep

    :param config_path: YAML configuration, optional

    :param root: parent of the run directory

    :param overrides: keys set on top of the file's

    :rtype: RunRecord

    """

    document, file_sweep = ({}, {}) if config_path is None \
        else configuration.load_config(config_path)
    sweep = file_sweep if sweep is None else sweep
    cfg = configuration.resolve({**document, **(overrides or {})})
    directory = Path(root) / cfg['run.name']
    if not sweep:
        return run_point(cfg, directory)

    directory.mkdir(parents=True, exist_ok=True)
    record = RunRecord(cfg['run.name'], str(directory), cfg,
                       configuration.digest(cfg), configuration.seeds(cfg),
                       source_digest=source_digest())
    start, shared = time.time(), {}
    try:
        for i, point in enumerate(configuration.sweep_points(sweep)):
            logger.info('sweep point %d: %s', i,
                        configuration.point_name(point))
            record.points.append(run_point(
                configuration.resolve({**document, **(overrides or {}),
                                       **point}),
                directory / f'point{i:02d}', shared, point))
    except Exception as err:
        record.status = 'failed'
        record.error = f'{type(err).__name__}: {err}'
        record.wall_clock = time.time() - start
        record.save()
        raise

    table = sweep_table(record)
    asr = [v if v == v else None for v in table.get('ASR', [])]
    check = trend_check(asr)
    record.trend = {'metric': 'ASR', 'passed': check.passed,
                    'inversions': [list(i) for i in check.inversions]}
    table.to_csv(directory / 'sweep.csv', index=False)
    record.tables['sweep'] = str(directory / 'sweep.csv')
    record.status = 'completed'
    record.wall_clock = time.time() - start
    if 'report' in cfg['run.stages']:
        emit_report(record)
    record.save()
    return record

