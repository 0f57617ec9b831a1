# flake8: noqa F401
from .trigger import (TriggerSpec, TRANSFORMS, default_trigger, load_trigger,
                      transform_trigger, apply_trigger, apply_trigger_fixed,
                      apply_trigger_variable)
from .poison import (PoisonConfig, PoisonReport, poison_dataset,
                     poison_sample, select_images, split_poisoned,
                     build_eval_splits)
