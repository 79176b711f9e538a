import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from guirl.trainers.grpo_trainer import GRPOTrainer
from guirl.trainers.sft_trainer import SFTTrainer
from guirl.trainers.train_config import TrainConfig
from guirl.types import AblationRow, MetricsRecord, Task
from guirl.utils.config_utils import coerce_values
from guirl.utils.data_utils import config_digest, write_csv

logger = logging.getLogger(__name__)

ABLATION_CSV_HEADER = (
    "variant",
    "config_digest",
    "final_eval_acc",
    "reward_first",
    "reward_last",
    "error",
)

Variant = Tuple[str, Dict[str, str]]


def resolve_variants(base: TrainConfig, variants: Sequence[Variant]) -> List[Tuple[str, Dict]]:
    """Typed overrides per variant; unknown keys or unparsable values fail the whole grid."""
    return [(name, coerce_values(TrainConfig, raw, f"variant {name}")) for name, raw in variants]


def run_variant(
    name: str,
    config: TrainConfig,
    train_tasks: Sequence[Task],
    eval_tasks: Sequence[Task],
) -> AblationRow:
    trainer_cls = SFTTrainer if config.mode == "sft" else GRPOTrainer
    trainer = trainer_cls(config, train_tasks, eval_tasks)
    _, metrics = trainer.train()
    rewards = [m.mean_total_reward for m in metrics if isinstance(m, MetricsRecord)]
    return AblationRow(
        variant=name,
        config_digest=config.digest(),
        final_eval_acc=trainer.evaluate() if eval_tasks else None,
        reward_first=rewards[0] if rewards else None,
        reward_last=rewards[-1] if rewards else None,
    )


def run_ablation(
    variants: Sequence[Variant],
    base: TrainConfig,
    train_tasks: Sequence[Task],
    eval_tasks: Sequence[Task] = (),
) -> List[AblationRow]:
    """
    Train every variant of the grid from the shared base config and seed.

    A failing variant yields a row carrying its error; the grid continues.
    """
    rows = []
    for name, overrides in resolve_variants(base, variants):
        digest = config_digest(overrides)
        try:
            config = base.replace(**overrides)
            digest = config.digest()
            logger.info(f"Running variant {name} ({digest})")
            rows.append(run_variant(name, config, train_tasks, eval_tasks))
        except (ValueError, ArithmeticError, RuntimeError) as e:
            logger.warning(f"Variant {name} failed: {e}")
            rows.append(
                AblationRow(variant=name, config_digest=digest, error=f"{type(e).__name__}: {e}")
            )
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], path: str | Path, base: TrainConfig) -> None:
    write_csv(
        path,
        ABLATION_CSV_HEADER,
        (
            (r.variant, r.config_digest, r.final_eval_acc, r.reward_first, r.reward_last, r.error)
            for r in rows
        ),
        "ablation",
        base.digest(),
    )
