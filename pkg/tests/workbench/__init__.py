TINY_RUN = {
    'run.name': 'tiny',
    'synth.image_side': 16,
    'synth.n_train': 8,
    'synth.n_val': 4,
    'synth.objects': [1, 1],
    'synth.size': [0.4, 0.6],
    'detector.grid_side': 2,
    'detector.channels': [3, 4, 4],
    'detector.pool_after': [1, 2, 3],
    'detector.taps': [1, 2, 3],
    'poison.poi': 0.5,
    'poison.all_objects': True,
    'train.epochs': 1,
    'train.batch_size': 4,
    'mad.epochs': 1,
    'attack.steps': 2,
    'eval.noise.kind': 'gaussian',
    'eval.noise.levels': [0.01],
}
