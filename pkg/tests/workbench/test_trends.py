"""desk-scale trend experiments on the shipped configurations

Every experiment but the default replays the default run's stages it
shares, through run.source, and trains or evaluates only what its own
configuration changes.

"""

from pathlib import Path

import pandas as pd
from pytest import fixture, mark

from rbdet.evalbench import MetricsReport
from rbdet.madtrain import TrainedModel
from rbdet.post import trend_check
from rbdet.workbench import run_experiment
from rbdet.workbench.config import load_config
from rbdet.workbench.report import loss_change_medians

CONFIGS = Path(__file__).parents[2] / 'configs'


def layered(name, stages, source):
    """the default settings under a configuration's own, replaying
    everything but `stages` from the run at `source`"""

    base, _ = load_config(CONFIGS / 'default.yaml')
    own, _ = load_config(CONFIGS / f'{name}.yaml')
    return {**{k: v for k, v in base.items()
               if k not in own and not k.startswith('run.')},
            'run.stages': stages, 'run.source': source}


def report(record, name) -> MetricsReport:
    return MetricsReport.load(record.reports[name])


@fixture(scope='module')
def root(tmp_path_factory):
    return tmp_path_factory.mktemp('desk')


@fixture(scope='module')
def default(root):
    return run_experiment(CONFIGS / 'default.yaml', root=root)


def replay(root, default, name, stages):
    return run_experiment(CONFIGS / f'{name}.yaml', root=root,
                          overrides=layered(name, stages, default.directory))


@mark.slow
class TestDefault:
    def test_clean_baseline(self, default):
        assert report(default, 'clean').map_b >= 0.75

    def test_backdoor_efficacy(self, default):
        """ASR at Poi 0.1 of at least 0.8, costing at most 3 points of AP_b"""
        clean, bod = report(default, 'clean'), report(default, 'backdoor')
        assert bod.asr >= 0.8
        assert clean.ap_b - bod.ap_b <= 0.03

    def test_loss_change_signature(self, default):
        """the backdoor raises the loss of triggered images only; noise
        takes some of that back from the backdoor detector but not from
        the robust one"""
        medians = loss_change_medians(pd.read_csv(
            default.tables['loss_change'])).set_index(
                ['pair', 'dataset'])['median_delta']
        assert medians['clean->backdoor', 'poisoned'] > 0
        assert abs(medians['clean->backdoor', 'clean']) <= 0.1
        assert medians['clean->mad', 'poisoned+noise'] > 0
        assert medians['clean->backdoor', 'poisoned+noise'] < \
            medians['clean->backdoor', 'poisoned']


@mark.slow
class TestPoisonRate:
    def test_sweep_trend(self, root, default):
        record = replay(root, default, 'poi_sweep',
                        ['poison', 'train_backdoor', 'eval', 'report'])
        asr = [report(p, 'backdoor').asr for p in record.points]
        assert [p.point['poison.poi'] for p in record.points] == \
            [0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
        assert trend_check(asr).passed
        assert asr[-1] >= 0.8


@mark.slow
class TestTriggerSize:
    def test_variable_beats_fixed(self, root, default):
        record = replay(root, default, 'trigger_size',
                        ['poison', 'train_backdoor', 'eval', 'report'])
        best_fixed = max(report(p, 'backdoor').asr for p in record.points)
        assert report(default, 'backdoor').asr >= best_fixed + 0.10


@mark.slow
class TestNoise:
    @staticmethod
    def gaps(record, axis, levels):
        """RD's ASR less BOD's at each level"""
        return [report(record, f'mad@{axis}={v}').asr
                - report(record, f'backdoor@{axis}={v}').asr
                for v in levels]

    def test_gaussian(self, root, default):
        record = replay(root, default, 'noise_gaussian', ['eval', 'report'])
        gaps = self.gaps(record, 'gaussian', (0.1, 0.2, 0.3))
        assert min(gaps) >= 0
        assert gaps[1] >= 0.05
        assert abs(report(record, 'mad').asr
                   - report(record, 'backdoor').asr) <= 0.05

    def test_motion_blur(self, root, default):
        record = replay(root, default, 'noise_motion_blur',
                        ['eval', 'report'])
        gaps = self.gaps(record, 'motion_blur', (3., 5., 7.))
        assert min(gaps) >= 0
        assert gaps[1] >= 0.05

    def test_rain(self, root, default):
        record = replay(root, default, 'noise_rain', ['eval', 'report'])
        assert min(self.gaps(record, 'rain', (0., 20., 40., 80.))) >= 0

    def test_light(self, root, default):
        record = replay(root, default, 'noise_light', ['eval', 'report'])
        assert min(self.gaps(record, 'light',
                             (0.25, 0.5, 1.0, 1.5, 2.0))) >= 0


@mark.slow
class TestAllObjects:
    def test_every_class(self, root, default):
        record = replay(root, default, 'all_objects',
                        ['poison', 'train_backdoor', 'eval', 'report'])
        table = pd.read_csv(record.tables['asr_by_class'])
        table = table[(table['method'] == 'backdoor')
                      & table['value'].isna()]
        assert sorted(table['class']) == [0, 1, 2, 3]
        assert (table['ASR'] >= 0.7).all()


@mark.slow
class TestAblation:
    def test_variants(self, root, default):
        record = replay(root, default, 'ablation',
                        ['train_mad', 'eval', 'report'])
        points = {p.point['attack.objective']: p for p in record.points}
        digests = {kind: TrainedModel.load(p.checkpoints['mad']).digest
                   for kind, p in points.items()}
        assert len(set(digests.values())) == 3
        assert report(points['full'], 'mad@gaussian=0.2').asr >= \
            report(points['no_lv'], 'mad@gaussian=0.2').asr
