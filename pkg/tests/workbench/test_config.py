from pytest import raises

from rbdet import ConfigError
from rbdet.workbench import config as configuration
from rbdet.workbench.config import (DEFAULTS, coerce, digest, load_config,
                                    noise_axis, parse_assignment,
                                    point_name, resolve, seeds,
                                    sweep_points)


class TestCoerce:
    def test_types(self):
        assert coerce('train.epochs', '5') == 5
        assert coerce('train.epochs', 5.0) == 5
        assert coerce('train.lr', 1) == 1.0
        assert coerce('poison.all_objects', 'true') is True
        assert coerce('synth.size', '0.2,0.4') == [0.2, 0.4]
        assert coerce('detector.channels', [4, 8]) == [4, 8]
        assert coerce('run.stages', ['synth']) == ['synth']

    def test_rejects(self):
        for key, value in (('train.epochs', 5.5), ('train.epochs', True),
                           ('train.lr', 'fast'), ('poison.all_objects', 1),
                           ('run.name', 3), ('synth.size', 0.2)):
            with raises(ConfigError):
                coerce(key, value)

    def test_unknown_key(self):
        with raises(ConfigError):
            resolve({'train.epoch': 5})

    def test_resolve(self):
        cfg = resolve({'train.epochs': '3'})
        assert cfg['train.epochs'] == 3
        assert cfg['train.lr'] == DEFAULTS['train.lr']
        assert DEFAULTS['train.epochs'] == 200


class TestAssignment:
    def test_yaml_values(self):
        assert parse_assignment('train.lr=0.1') == ('train.lr', 0.1)
        assert parse_assignment('synth.size=[0.2, 0.4]') == \
            ('synth.size', [0.2, 0.4])
        assert parse_assignment('run.name=a=b') == ('run.name', 'a=b')

    def test_no_value(self):
        with raises(ConfigError):
            parse_assignment('train.lr')


class TestFile:
    def test_sweep(self, tmp_path):
        path = tmp_path / 'c.yaml'
        path.write_text('train.epochs: 3\n'
                        'sweep:\n'
                        '  poison.poi: [0.1, 0.2]\n'
                        '  trigger.transparency: [0.5, 1.0]\n')
        document, sweep = load_config(path)
        assert document == {'train.epochs': 3}
        points = sweep_points(sweep)
        assert points == [
            {'poison.poi': 0.1, 'trigger.transparency': 0.5},
            {'poison.poi': 0.1, 'trigger.transparency': 1.0},
            {'poison.poi': 0.2, 'trigger.transparency': 0.5},
            {'poison.poi': 0.2, 'trigger.transparency': 1.0}]
        assert point_name(points[1]) == \
            'poison.poi=0.1,trigger.transparency=1.0'
        assert point_name({}) == 'base'

    def test_bad_files(self, tmp_path):
        path = tmp_path / 'c.yaml'
        for text in ('train.epochs: [', '- 1\n- 2\n', 'sweep: 3\n',
                     'sweep:\n  poison.poi: []\n', 'nonsense.key: 1\n',
                     'sweep:\n  poison.poi: [0.1, fast]\n'):
            path.write_text(text)
            with raises(ConfigError):
                load_config(path)

    def test_shipped_configs(self):
        from pathlib import Path
        for path in sorted(Path(__file__).parents[2].glob('configs/*.yaml')):
            document, sweep = load_config(path)
            resolve(document)


class TestDerived:
    def test_digest(self):
        assert digest({'a': 1, 'b': 2}) == digest({'b': 2, 'a': 1})
        assert digest(resolve()) != digest(resolve({'run.seed': 1}))

    def test_seeds(self):
        first, again = seeds(resolve()), seeds(resolve())
        assert first == again
        assert len(set(first.values())) == len(first)
        assert seeds(resolve({'run.seed': 1})) != first

    def test_builders(self):
        cfg = resolve()
        assert configuration.detector_config(cfg).grid_side == 8
        assert configuration.scene_spec(cfg).image_side == 64
        assert configuration.trigger_spec(cfg).fixed_size is None
        assert configuration.poison_config(cfg).relabel_class is None
        assert configuration.train_config(cfg).epochs == 200
        mad = configuration.train_config(cfg, 'mad')
        assert (mad.epochs, mad.lr, mad.regime) == (50, 0.005, 'mad')
        assert configuration.attack_budget(cfg).betas == (0.5, 1.5, 3.0)
        assert configuration.thresholds(cfg).ap_conf == 0.01

    def test_relabel(self):
        cfg = resolve({'poison.label_rule': 'relabel'})
        assert configuration.poison_config(cfg).relabel_class == 1
        fixed = resolve({'trigger.mode': 'fixed'})
        assert configuration.trigger_spec(fixed).fixed_size == (8, 8)

    def test_noise_axis(self):
        assert [level for level, _ in noise_axis(resolve())] == [None]
        axis = noise_axis(resolve({'eval.noise.kind': 'gaussian',
                                   'eval.noise.levels': [0.01, 0.05]}))
        assert [level for level, _ in axis] == [None, 0.01, 0.05]
        assert axis[0][1].neutral
        assert axis[2][1].kind == 'gaussian' and axis[2][1].level == 0.05
