from .ablation import run_ablation, write_ablation_csv
from .grpo_core import (
    ObjectiveConfig,
    adversarial_factor,
    advantages,
    group_loss_terms,
    kl_estimate,
    objective,
)
from .grpo_trainer import GRPOTrainer, train_grpo
from .sft_trainer import SFTTrainer, train_sft
from .train_config import TrainConfig, final_recipe

__all__ = [
    "ObjectiveConfig",
    "advantages",
    "kl_estimate",
    "adversarial_factor",
    "objective",
    "group_loss_terms",
    "TrainConfig",
    "final_recipe",
    "GRPOTrainer",
    "SFTTrainer",
    "train_grpo",
    "train_sft",
    "run_ablation",
    "write_ablation_csv",
]
