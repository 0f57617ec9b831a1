import attr
import numpy as np
import pandas as pd
from pytest import approx, mark, raises, warns

from rbdet import ConfigError, TrainingError
from rbdet.detector import (Annotation, DetectorConfig, DetectorParams,
                            forward)
from rbdet.gradcore import Tensor
from rbdet.madtrain import (AttackBudget, MadRegime, TrainConfig,
                            TrainedModel, TrainState, craft_batch,
                            craft_physical_noise, feature_loss,
                            loss_change_report, objective,
                            per_sample_losses, stratified_batches,
                            train_backdoor, train_clean, train_mad)
from rbdet.poisoncraft import split_poisoned
from rbdet.sample import Sample
from rbdet.workbench.synth import SceneSpec, generate_synthetic

QUICK = TrainConfig(epochs=2, batch_size=4, lr=0.001, momentum=0.,
                    schedule='constant', seed=1)
BUDGET = AttackBudget(epsilon=0.1, steps=3, step_size=0.04)


class TestConfig:
    def test_cosine(self):
        """lr at the start, half of it halfway, none at the end"""
        cfg = TrainConfig(epochs=10, lr=0.2)
        assert cfg.learning_rate(0) == approx(0.2)
        assert cfg.learning_rate(5) == approx(0.1)
        assert cfg.learning_rate(10) == approx(0., abs=1e-12)

    def test_validation(self):
        for bad in (dict(epochs=0), dict(batch_size=0), dict(lr=-1.),
                    dict(momentum=1.), dict(schedule='step'),
                    dict(weights=(1., 1.)), dict(regime='mixed')):
            with raises(ConfigError):
                TrainConfig(**bad)

    def test_digest(self):
        assert TrainConfig().digest == TrainConfig().digest
        assert TrainConfig().digest != TrainConfig(lr=0.02).digest

    def test_budget(self):
        with warns(UserWarning):
            AttackBudget(epsilon=0.01, step_size=0.02)
        for bad in (dict(epsilon=-1.), dict(steps=0), dict(betas=(1., 0.)),
                    dict(objective='max'), dict(baseline='mean')):
            with raises(ConfigError):
                AttackBudget(**bad)


class TestBatches:
    def test_partition(self):
        """every index once, both sources in every batch"""
        batches = stratified_batches(10, 5, 4, np.random.default_rng(0))
        assert len(batches) == 4
        clean = np.concatenate([c for c, _ in batches])
        poisoned = np.concatenate([p for _, p in batches])
        assert sorted(clean) == list(range(10))
        assert sorted(poisoned) == list(range(5))
        assert all(len(c) and len(p) for c, p in batches)

    def test_clean_only(self):
        batches = stratified_batches(5, 0, 2, np.random.default_rng(0))
        assert [len(c) for c, _ in batches] == [2, 2, 1]
        assert all(len(p) == 0 for _, p in batches)


class TestTraining:
    def test_descends(self, tiny_params, toy_dataset):
        """small full-batch steps lower the mean loss"""
        cfg = TrainConfig(epochs=3, batch_size=len(toy_dataset), lr=1e-3,
                          momentum=0., schedule='constant')
        model = train_clean(toy_dataset, cfg, tiny_params)
        assert model.regime == 'clean'
        assert len(model.history) == 3
        assert per_sample_losses(model, toy_dataset).mean() < \
            per_sample_losses(tiny_params, toy_dataset).mean()

    def test_deterministic(self, tiny_params, toy_dataset):
        first = train_clean(toy_dataset, QUICK, tiny_params)
        again = train_clean(toy_dataset, QUICK, tiny_params)
        assert first.digest == again.digest
        assert first.history == again.history

    def test_zero_lr(self, tiny_params, toy_dataset):
        model = train_clean(toy_dataset, TrainConfig(epochs=1, lr=0.),
                            tiny_params)
        assert model.digest == tiny_params.digest

    def test_initialized_from_config(self, toy_dataset, tiny_config):
        model = train_clean(toy_dataset, QUICK,
                            detector_config=tiny_config)
        assert model.params.config == tiny_config

    def test_log(self, tiny_params, toy_dataset, tmp_path):
        log = tmp_path / 'train.jsonl'
        train_clean(toy_dataset, QUICK, tiny_params, log_path=log)
        records = pd.read_json(log, lines=True)
        assert list(records['epoch']) == [0, 1]
        assert set(records['regime']) == {'clean'}

    def test_resume(self, tiny_params, toy_dataset, tmp_path):
        """two epochs, then a third from the checkpoint, is three epochs"""
        straight = train_clean(toy_dataset, TrainConfig(
            epochs=3, batch_size=4, lr=0.001, schedule='constant', seed=1),
            tiny_params)
        cfg = TrainConfig(epochs=2, batch_size=4, lr=0.001,
                          schedule='constant', seed=1, checkpoint_every=1)
        train_clean(toy_dataset, cfg, tiny_params, checkpoint_dir=tmp_path)
        state = TrainState.load(tmp_path / 'checkpoint.npz',
                                tiny_params.config)
        assert state.epoch == 2
        resumed = train_clean(toy_dataset, TrainConfig(
            epochs=3, batch_size=4, lr=0.001, schedule='constant', seed=1,
            checkpoint_every=1), tiny_params, checkpoint_dir=tmp_path)
        assert resumed.digest == straight.digest
        assert resumed.history == approx(straight.history)

    def test_resume_other_regime(self, tiny_params, toy_poisoned, tmp_path):
        """a clean checkpoint never continues as a backdoor run"""
        clean, poisoned = split_poisoned(toy_poisoned[0])
        cfg = attr.evolve(QUICK, checkpoint_every=1)
        train_clean(clean + poisoned, cfg, tiny_params,
                    checkpoint_dir=tmp_path)
        assert TrainState.load(tmp_path / 'checkpoint.npz').regime == 'clean'
        with raises(ConfigError):
            train_backdoor(clean, poisoned, cfg, tiny_params,
                           checkpoint_dir=tmp_path)

    def test_resume_other_settings(self, tiny_params, toy_dataset, tmp_path):
        cfg = attr.evolve(QUICK, checkpoint_every=1)
        train_clean(toy_dataset, cfg, tiny_params, checkpoint_dir=tmp_path)
        for changed in (dict(lr=0.002), dict(seed=2),
                        dict(schedule='cosine')):
            with raises(ConfigError):
                train_clean(toy_dataset, attr.evolve(cfg, **changed),
                            tiny_params, checkpoint_dir=tmp_path)

    def test_resume_past_end(self, tiny_params, toy_dataset, tmp_path):
        """a 3-epoch checkpoint cannot answer for a 1-epoch run"""
        cfg = attr.evolve(QUICK, epochs=3, checkpoint_every=1)
        train_clean(toy_dataset, cfg, tiny_params, checkpoint_dir=tmp_path)
        with raises(ConfigError):
            train_clean(toy_dataset, attr.evolve(cfg, epochs=1), tiny_params,
                        checkpoint_dir=tmp_path)

    def test_resume_finished(self, tiny_params, toy_dataset, tmp_path):
        """rerunning a completed run returns it without further epochs"""
        cfg = attr.evolve(QUICK, checkpoint_every=1)
        first = train_clean(toy_dataset, cfg, tiny_params,
                            checkpoint_dir=tmp_path)
        again = train_clean(toy_dataset, cfg, tiny_params,
                            checkpoint_dir=tmp_path)
        assert again.digest == first.digest
        assert len(again.history) == cfg.epochs

    def test_diverged(self, tiny_params, toy_dataset):
        broken = [Sample(0, np.full((16, 16, 3), np.nan),
                         toy_dataset[0].annotations)]
        with raises(TrainingError) as info:
            train_clean(broken, QUICK, tiny_params)
        assert info.value.epoch == 0

    def test_empty(self, tiny_params):
        with raises(ConfigError):
            train_clean([], QUICK, tiny_params)

    def test_backdoor(self, tiny_params, toy_poisoned):
        clean, poisoned = split_poisoned(toy_poisoned[0])
        model = train_backdoor(clean, poisoned, QUICK, tiny_params)
        assert model.regime == 'backdoor'
        with raises(ConfigError):
            train_backdoor(clean, [], QUICK, tiny_params)

    def test_save_load(self, tiny_params, toy_dataset, tmp_path):
        model = train_clean(toy_dataset, QUICK, tiny_params)
        model.save(tmp_path / 'model.npz')
        again = TrainedModel.load(tmp_path / 'model.npz', tiny_params.config)
        assert again.digest == model.digest
        assert again.history == approx(model.history)
        assert (again.regime, again.config_digest) == \
            ('clean', model.config_digest)
        assert len(again.smoothed_history(5)) == 1


class TestMad:
    def test_warm_start(self, tiny_params, toy_poisoned):
        clean, poisoned = split_poisoned(toy_poisoned[0])
        bod = train_backdoor(clean, poisoned, QUICK, tiny_params)
        rd = train_mad(bod, clean, poisoned, BUDGET,
                       TrainConfig(epochs=1, batch_size=4, lr=0.001))
        assert rd.regime == 'mad'
        assert rd.digest != bod.digest
        assert len(rd.history) == 1

    def test_clean_baseline_needs_sources(self, toy_poisoned):
        clean, poisoned = split_poisoned(toy_poisoned[0])
        stripped = [Sample(s.image_id, s.image, s.annotations, s.provenance)
                    for s in poisoned]
        with raises(ConfigError):
            MadRegime(clean, stripped, QUICK,
                      AttackBudget(baseline='clean'))

    def test_zero_budget_is_backdoor_training(self, tiny_params,
                                              toy_poisoned):
        """with epsilon 0 every crafted copy duplicates its source and is
        dropped, so robust training continues backdoor training exactly"""
        clean, poisoned = split_poisoned(toy_poisoned[0])
        bod = train_backdoor(clean, poisoned, QUICK, tiny_params)
        rd = train_mad(bod, clean, poisoned,
                       AttackBudget(epsilon=0., step_size=0.), QUICK)
        continued = train_backdoor(clean, poisoned, QUICK, bod.params)
        assert rd.digest == continued.digest
        assert rd.history == continued.history

    def test_alternation(self, tiny_params, toy_poisoned, monkeypatch):
        """noise is crafted against frozen parameters, the parameters
        then step with the noise fixed, batch by batch"""
        clean, poisoned = split_poisoned(toy_poisoned[0])
        calls = []

        def recording(params, *args, **kwargs):
            before = params.digest
            result = craft_batch(params, *args, **kwargs)
            calls.append((before, params.digest, result.delta,
                          result.delta.copy()))
            return result

        monkeypatch.setattr('rbdet.madtrain.regime.craft_batch', recording)
        cfg = TrainConfig(epochs=1, batch_size=2, lr=0.01, momentum=0.,
                          schedule='constant', seed=1)
        state = TrainState.start(tiny_params)
        after = MadRegime(clean, poisoned, cfg, BUDGET).step(state)
        assert len(calls) == 3
        assert calls[0][0] == tiny_params.digest
        for before, during, delta, kept in calls:
            assert during == before
            np.testing.assert_array_equal(delta, kept)
        digests = [before for before, *_ in calls] + [after.params.digest]
        assert len(set(digests)) == len(digests)
        assert state.params.digest == tiny_params.digest

    def test_ablations_differ(self, tiny_params, toy_poisoned):
        clean, poisoned = split_poisoned(toy_poisoned[0])
        bod = train_backdoor(clean, poisoned, QUICK, tiny_params)
        digests = {
            kind: train_mad(bod, clean, poisoned, AttackBudget(
                epsilon=0.1, steps=2, step_size=0.04, objective=kind,
                random_start=True, seed=5), QUICK).digest
            for kind in ('full', 'no_lv', 'no_ly')}
        assert len(set(digests.values())) == 3
        assert bod.digest not in digests.values()


def poisoned_stack(samples):
    return (np.stack([s.image for s in samples]),
            np.stack([s.trigger_mask() for s in samples]),
            [s.provenance.clean_annotations for s in samples])


class TestCraft:
    def test_confined(self, tiny_params, toy_poisoned):
        """delta lives on the trigger, within epsilon, inside [0, 1]"""
        _, poisoned = split_poisoned(toy_poisoned[0])
        images, masks, anns = poisoned_stack(poisoned)
        result = craft_batch(tiny_params, images, masks, anns, BUDGET)
        assert result.delta.shape == images.shape
        assert result.trace.shape == (len(poisoned), BUDGET.steps + 1)
        assert np.abs(result.delta).max() <= BUDGET.epsilon + 1e-12
        assert not result.delta[~masks].any()
        noised = images + result.delta
        assert noised.min() >= 0 and noised.max() <= 1
        assert result.delta[masks].any()

    def test_random_start(self, tiny_params, toy_poisoned):
        _, poisoned = split_poisoned(toy_poisoned[0])
        images, masks, anns = poisoned_stack(poisoned)
        budget = AttackBudget(epsilon=0.1, steps=1, step_size=0.01,
                              random_start=True, seed=3)
        first = craft_batch(tiny_params, images, masks, anns, budget)
        again = craft_batch(tiny_params, images, masks, anns, budget)
        np.testing.assert_array_equal(first.delta, again.delta)
        assert not first.delta[~masks].any()

    def test_degenerate(self, tiny_config, toy_poisoned):
        """all-zero weights see nothing of the image: no gradient, no noise"""
        params = DetectorParams.initialize(tiny_config, scheme='zero')
        _, poisoned = split_poisoned(toy_poisoned[0])
        images, masks, anns = poisoned_stack(poisoned)
        result = craft_batch(params, images, masks, anns, BUDGET)
        assert result.degenerate.all()
        assert not result.delta.any()

    def test_empty_region(self, tiny_params, toy_poisoned):
        _, poisoned = split_poisoned(toy_poisoned[0])
        images, masks, anns = poisoned_stack(poisoned)
        with raises(ConfigError):
            craft_batch(tiny_params, images, np.zeros_like(masks), anns,
                        BUDGET)

    def test_single_image(self, tiny_params, toy_poisoned):
        _, poisoned = split_poisoned(toy_poisoned[0])
        s = poisoned[0]
        budget = AttackBudget(epsilon=0.1, steps=2, step_size=0.05,
                              baseline='clean')
        result = craft_physical_noise(
            tiny_params, s.image, s.clean_image,
            s.provenance.clean_annotations, s.provenance.placements, budget)
        assert result.delta.shape == s.image.shape
        assert result.trace.shape == (3,)
        assert not result.delta[~s.trigger_mask()].any()

    def test_objective_parts(self, tiny_params, toy_poisoned):
        """the full objective is L_v plus -L_y"""
        _, poisoned = split_poisoned(toy_poisoned[0])
        images, _, anns = poisoned_stack(poisoned)
        taps = forward(tiny_params, images)[1]
        parts = {kind: objective(tiny_params, Tensor(images), taps, anns,
                                 AttackBudget(objective=kind)).data
                 for kind in ('full', 'no_lv', 'no_ly')}
        np.testing.assert_allclose(parts['full'],
                                   parts['no_lv'] + parts['no_ly'])
        assert (parts['no_lv'] < 0).all()

    def test_feature_loss_flat_at_baseline(self, tiny_params, rng):
        """BCE of sigmoid(z) against sigmoid(z0) is stationary at z = z0"""
        images = rng.uniform(size=(2, 16, 16, 3))
        baseline = forward(tiny_params, images)[1]
        taps = {k: Tensor(v.data, requires_grad=True)
                for k, v in baseline.items()}
        feature_loss(taps, baseline, (1., 2., 3.)).sum().backward()
        for t in taps.values():
            np.testing.assert_allclose(t.grad, 0., atol=1e-12)
        with raises(ConfigError):
            feature_loss(taps, baseline, (1., 2.))

    def test_ascent_mostly_climbs(self, tiny_params, rng):
        """small sign steps raise J all the way along for at least nine
        in ten images"""
        images = rng.uniform(size=(40, 16, 16, 3))
        masks = np.zeros((40, 16, 16), dtype=bool)
        masks[:, 5:11, 5:11] = True
        anns = [[Annotation(0, (0.5, 0.5, 0.5, 0.5), 0)]] * 40
        budget = AttackBudget(epsilon=0.1, steps=4, step_size=0.005)
        trace = craft_batch(tiny_params, images, masks, anns, budget).trace
        climbing = (np.diff(trace, axis=1) >= -1e-12).all(axis=1)
        assert climbing.mean() >= 0.9


class TestDiagnostics:
    def test_same_model(self, tiny_params, toy_poisoned):
        clean, poisoned = split_poisoned(toy_poisoned[0])
        report = loss_change_report(tiny_params, tiny_params,
                                    {'clean': clean, 'poisoned': poisoned})
        assert list(report.columns) == ['dataset', 'image_id', 'L_before',
                                        'L_after', 'delta']
        assert len(report) == len(clean) + len(poisoned)
        assert list(report['dataset'].unique()) == ['clean', 'poisoned']
        np.testing.assert_allclose(report['delta'], 0.)

    def test_losses_against_own_labels(self, tiny_params, toy_poisoned):
        _, poisoned = split_poisoned(toy_poisoned[0])
        losses = per_sample_losses(tiny_params, poisoned)
        assert losses.shape == (len(poisoned),)
        assert per_sample_losses(tiny_params, []).shape == (0,)

    def test_architecture_mismatch(self, tiny_params):
        other = DetectorParams.initialize(DetectorConfig())
        with raises(ConfigError):
            loss_change_report(tiny_params, other, {})

    def test_empty(self, tiny_params):
        assert loss_change_report(tiny_params, tiny_params, {}).empty


@mark.slow
class TestOverfit:
    def test_eight_images(self):
        """300 full-batch epochs drive L_y on eight scenes below 0.05"""
        train, _ = generate_synthetic(SceneSpec(objects=(1, 1)), 8, 1,
                                      seed=0)
        cfg = TrainConfig(epochs=300, batch_size=8, lr=0.01, momentum=0.9,
                          schedule='constant', seed=0)
        model = train_clean(train, cfg, detector_config=DetectorConfig())
        assert per_sample_losses(model, train).mean() < 0.05
