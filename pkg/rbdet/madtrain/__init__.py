# flake8: noqa F401
from .config import TrainConfig, AttackBudget, TrainedModel, REGIMES
from .craft import (CraftResult, craft_batch, craft_physical_noise,
                    feature_loss, objective)
from .regime import (Regime, CleanRegime, BackdoorRegime, MadRegime,
                     TrainState, joint_loss, stratified_batches,
                     train_clean, train_backdoor, train_mad)
from .diagnostics import loss_change_report, per_sample_losses
