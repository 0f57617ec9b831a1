"""command-line entry point: ``rbdet <subcommand>``

Every subcommand reads the same flat configuration keys as
``rbdet run``, from ``--config`` and repeated ``--set key=value``;
the flags of each subcommand only name its inputs and outputs.

"""

import argparse
import json
import logging
import sys
from pathlib import Path

from ..detector import DetectorParams
from ..errors import ConfigError, RBDetError
from ..evalbench import evaluate_full
from ..madtrain import TrainedModel, train_backdoor, train_clean, train_mad
from ..physnoise import KINDS, NoiseSpec, noise_dataset
from ..poisoncraft import build_eval_splits, poison_dataset, split_poisoned
from . import config as configuration
from .manifest import load_dataset, save_dataset
from .pipeline import RunRecord, attach_clean_images, run_experiment
from .report import emit_report
from .synth import generate_synthetic

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'
LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _resolved(args):
    document = {}
    if getattr(args, 'config', None):
        document, _ = configuration.load_config(args.config)
    sets = dict(configuration.parse_assignment(s) for s in args.set)
    return configuration.resolve({**document, **sets})


def synth_data(args):
    cfg = _resolved(args)
    train, val = generate_synthetic(
        configuration.scene_spec(cfg), cfg['synth.n_train'],
        cfg['synth.n_val'], configuration.seeds(cfg)['synth'])
    save_dataset(train, Path(args.out) / 'train')
    save_dataset(val, Path(args.out) / 'val')


def poison(args):
    cfg = _resolved(args)
    dataset, _ = load_dataset(args.data)
    poisoned, report = poison_dataset(dataset,
                                      configuration.trigger_spec(cfg),
                                      configuration.poison_config(cfg))
    save_dataset(poisoned, args.out, report)
    print(json.dumps({'poi_target': report.poi_target,
                      'poi_achieved': report.poi_achieved,
                      'poisoned_boxes': report.poisoned_boxes,
                      'total_boxes': report.total_boxes}))


def train(args):
    cfg = _resolved(args)
    dataset, _ = load_dataset(args.data)
    params = DetectorParams.initialize(configuration.detector_config(cfg),
                                       configuration.seeds(cfg)['init'])
    if args.regime == 'clean':
        model = train_clean(dataset, configuration.train_config(cfg),
                            params, log_path=args.log,
                            checkpoint_dir=args.checkpoints)
    else:
        clean, poisoned = split_poisoned(dataset)
        model = train_backdoor(clean, poisoned,
                               configuration.train_config(cfg, 'backdoor'),
                               params, log_path=args.log,
                               checkpoint_dir=args.checkpoints)
    model.save(args.out)


def mad_train(args):
    cfg = _resolved(args)
    clean, poisoned = split_poisoned(load_dataset(args.data)[0])
    budget = configuration.attack_budget(cfg)
    if budget.baseline == 'clean':
        if not args.clean_data:
            raise ConfigError('a clean feature baseline needs --clean-data')
        poisoned = attach_clean_images(poisoned,
                                       load_dataset(args.clean_data)[0])
    bod = TrainedModel.load(args.bod, configuration.detector_config(cfg))
    model = train_mad(bod, clean, poisoned, budget,
                      configuration.train_config(cfg, 'mad'),
                      log_path=args.log, checkpoint_dir=args.checkpoints)
    model.save(args.out)


def evaluate(args):
    cfg = _resolved(args)
    val, _ = load_dataset(args.data)
    pcfg = configuration.poison_config(cfg)
    splits = build_eval_splits(val, configuration.trigger_spec(cfg), pcfg)
    noise = _noise(cfg, args.noise_kind, args.noise_level, args)
    if not noise.neutral:
        benign, attacked = (noise_dataset(s, noise) for s in splits[:2])
        splits = benign, attacked, benign + attacked
    model = TrainedModel.load(args.model, configuration.detector_config(cfg))
    report = evaluate_full(model, splits, configuration.thresholds(cfg),
                           pcfg.target_class)
    if args.out:
        report.save(args.out)
    print(json.dumps(report.headline()))


def _noise(cfg, kind, level, args) -> NoiseSpec:
    seed = configuration.seeds(cfg)['noise']
    if level is None:
        return NoiseSpec(kind, angle=args.angle, seed=seed,
                         region=args.region)
    return NoiseSpec(kind, level, args.angle, seed, args.region)


def noise_apply(args):
    cfg = _resolved(args)
    dataset, report = load_dataset(args.data)
    save_dataset(noise_dataset(dataset, _noise(cfg, args.kind, args.level,
                                               args)),
                 args.out, report)


def report_run(args):
    emit_report(RunRecord.load(args.run), args.out)


def run(args):
    sets = dict(configuration.parse_assignment(s) for s in args.set)
    record = run_experiment(args.config, args.root, sets)
    print(record.directory)


def _common(parser):
    parser.add_argument('--config', help='YAML configuration file')
    parser.add_argument('--set', action='append', default=[],
                        metavar='KEY=VALUE', help='override one key')


def _noise_flags(p, kind: str, level: str, required: bool):
    p.add_argument(kind, required=required, default='none', choices=KINDS)
    p.add_argument(level, type=float, required=required, default=None)
    p.add_argument('--angle', type=float, default=0.)
    p.add_argument('--region', choices=('image', 'trigger'),
                   default='image')


def parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog='rbdet', description='robust backdoor attack workbench')
    top.add_argument('-v', '--verbose', action='count', default=0)
    sub = top.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth-data', help='render a synthetic dataset')
    _common(p)
    p.add_argument('--out', required=True)
    p.set_defaults(func=synth_data)

    p = sub.add_parser('poison', help='poison a dataset')
    _common(p)
    p.add_argument('--data', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=poison)

    for name, func, text in (('train', train, 'train a detector'),
                             ('mad-train', mad_train,
                              'malicious adversarial training from a BOD')):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument('--data', required=True)
        p.add_argument('--out', required=True)
        p.add_argument('--log', help='JSON-lines training log')
        p.add_argument('--checkpoints', help='checkpoint directory')
        p.set_defaults(func=func)
        if name == 'train':
            p.add_argument('--regime', choices=('clean', 'backdoor'),
                           default='clean')
        else:
            p.add_argument('--bod', required=True)
            p.add_argument('--clean-data')

    p = sub.add_parser('eval', help='headline metrics of a model')
    _common(p)
    p.add_argument('--data', required=True, help='validation dataset')
    p.add_argument('--model', required=True)
    p.add_argument('--out', help='MetricsReport JSON')
    _noise_flags(p, '--noise-kind', '--noise-level', required=False)
    p.set_defaults(func=evaluate)

    p = sub.add_parser('noise-apply', help='disturb every image')
    _common(p)
    p.add_argument('--data', required=True)
    p.add_argument('--out', required=True)
    _noise_flags(p, '--kind', '--level', required=True)
    p.set_defaults(func=noise_apply)

    p = sub.add_parser('report', help='tables and summary of a run')
    p.add_argument('run', help='run directory')
    p.add_argument('--out')
    p.set_defaults(func=report_run)

    p = sub.add_parser('run', help='run a configured pipeline')
    p.add_argument('config', nargs='?')
    p.add_argument('--root', default='runs')
    p.add_argument('--set', action='append', default=[],
                   metavar='KEY=VALUE')
    p.set_defaults(func=run)
    return top


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(format=LOG_FORMAT,
                        level=LEVELS[min(args.verbose, len(LEVELS) - 1)])
    try:
        args.func(args)
    except RBDetError as err:
        logger.error('%s', err)
        return err.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
