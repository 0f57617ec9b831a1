# flake8: noqa F401
from .errors import (RBDetError, ConfigError, TrainingError, ParseError,
                     GenerationError, MetricUndefined)
from .gradcore import Tensor
from .detector import DetectorConfig, DetectorParams, Annotation, Detection
from .sample import Sample, Provenance, TriggerPlacement
from .poisoncraft import (TriggerSpec, PoisonConfig, poison_dataset,
                          build_eval_splits)
from .physnoise import NoiseSpec, noise_dataset
from .madtrain import (TrainConfig, AttackBudget, TrainedModel, train_clean,
                       train_backdoor, train_mad)
from .evalbench import MetricsReport, evaluate_full
