import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Literal, Optional

from guirl.policy.network import PolicyDims
from guirl.trainers.grpo_core import ObjectiveConfig
from guirl.types import AccuracyRewardKind, PredictionMode
from guirl.utils.data_utils import config_digest


def default_num_threads() -> int:
    value = os.environ.get("GUIRL_NUM_THREADS")
    if value is None:
        return 1
    try:
        threads = int(value)
    except ValueError as e:
        raise ValueError(f"GUIRL_NUM_THREADS must be an integer, got {value!r}") from e
    if threads < 1:
        raise ValueError(f"GUIRL_NUM_THREADS must be >= 1, got {threads}")
    return threads


@dataclass
class TrainConfig:
    r"""
    Configuration for [`GRPOTrainer`] and [`SFTTrainer`].

    Every field doubles as a config-file key and a `--flag` of `guirl train`.
    """

    # Parameters that control the run
    run_name: str = field(default="guirl", metadata={"help": "Name of the run."})
    mode: Literal["grpo", "sft"] = field(
        default="grpo", metadata={"help": "Training objective: grpo or sft."}
    )
    seed: int = field(
        default=0,
        metadata={"help": "Master seed for initialization, task sampling and rollouts."},
    )

    # Parameters that control the GRPO objective
    group_size: int = field(
        default=6,
        metadata={"help": "Number of responses sampled per task (N). Must be at least 2."},
    )
    batch_size: int = field(default=4, metadata={"help": "Tasks per training step."})
    beta: float = field(
        default=1e-4,
        metadata={"help": "KL coefficient. The legacy GRPO default is 0.04."},
    )
    adversarial: bool = field(
        default=True,
        metadata={"help": "Scale the KL penalty of each response by reward / max_reward."},
    )
    max_reward: float = field(
        default=2.0, metadata={"help": "Maximum total reward (format + accuracy)."}
    )
    std_epsilon: float = field(
        default=1e-8,
        metadata={"help": "Groups with reward std below this get all-zero advantages."},
    )
    clip_epsilon: float = field(
        default=0.0,
        metadata={
            "help": "Ratio clipping range; only active with num_iterations > 1. 0 disables clipping."
        },
    )
    num_iterations: int = field(
        default=1,
        metadata={
            "help": "Optimizer updates per sampled batch. Values above 1 require clip_epsilon > 0."
        },
    )

    # Parameters that control the reward
    format_variant: Literal["strict", "soft"] = field(
        default="soft", metadata={"help": "Format reward: strict or soft."}
    )
    accuracy: str = field(
        default="in-bbox",
        metadata={"help": "Accuracy reward: iou, iou@<tau>, in-bbox or distance@<k>."},
    )
    prediction_mode: Optional[str] = field(
        default=None,
        metadata={"help": "point or bbox. Defaults to the mode the accuracy reward expects."},
    )
    soft_normalizer: float = field(
        default=2.0,
        metadata={"help": "Divisor of the soft format credits; 1.5 reproduces the legacy divisor."},
    )

    # Parameters that control the optimizer
    base_lr: float = field(default=1e-5, metadata={"help": "Initial AdamW learning rate."})
    weight_decay: float = field(
        default=0.0, metadata={"help": "Decoupled weight decay coefficient."}
    )
    total_steps: int = field(
        default=500,
        metadata={"help": "Training steps; the learning rate decays linearly to 0 at this step."},
    )

    # Parameters that control the policy and features
    hidden: int = field(default=32, metadata={"help": "Hidden width H of the policy network."})
    grid: int = field(default=16, metadata={"help": "Answer grid side G (G*G cells)."})
    styles: int = field(default=3, metadata={"help": "Number of answer rendering styles S."})
    head_scale: float = field(
        default=0.01, metadata={"help": "Std of the initial output-head weights."}
    )
    k_max: int = field(default=5, metadata={"help": "Maximum elements per scene."})
    encoder_layout: int = field(
        default=2,
        metadata={"help": "Feature layout: 2 adds the target row/column occupancy flags, 1 omits them."},
    )
    bbox_half_extent: float = field(
        default=1.0, metadata={"help": "Half size, in grid cells, of rendered bbox answers."}
    )
    include_resolution_train: bool = field(
        default=False, metadata={"help": "Feed the canvas resolution during training."}
    )
    include_resolution_eval: bool = field(
        default=True, metadata={"help": "Feed the canvas resolution during evaluation."}
    )

    # Parameters that control logging and evaluation
    eval_steps: int = field(
        default=50, metadata={"help": "Evaluate every this many steps (0 disables)."}
    )
    logging_steps: int = field(default=10, metadata={"help": "Log every this many steps."})
    log_completions: bool = field(
        default=False, metadata={"help": "Print sample completions with their rewards."}
    )
    num_completions_to_print: int = field(
        default=1, metadata={"help": "Completions shown per logging step."}
    )
    log_coefficients: bool = field(
        default=False,
        metadata={"help": "Record (reward, advantage, kl_coef) of every response."},
    )
    max_workers: int = field(
        default_factory=default_num_threads,
        metadata={"help": "Rollout threads; GUIRL_NUM_THREADS overrides the default of 1."},
    )

    def __post_init__(self):
        if self.mode not in ("grpo", "sft"):
            raise ValueError(f"mode must be grpo or sft, got {self.mode!r}")
        if self.group_size < 2:
            raise ValueError(
                "GRPO requires at least 2 responses per task to calculate the advantages. "
                f"You provided group_size={self.group_size}."
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.num_iterations < 1:
            raise ValueError(f"num_iterations must be >= 1, got {self.num_iterations}")
        if self.num_iterations > 1 and self.clip_epsilon <= 0:
            raise ValueError("num_iterations > 1 requires clip_epsilon > 0")
        if self.format_variant not in ("strict", "soft"):
            raise ValueError(f"format_variant must be strict or soft, got {self.format_variant!r}")
        if self.prediction_mode not in (None, "point", "bbox"):
            raise ValueError(f"prediction_mode must be point or bbox, got {self.prediction_mode!r}")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ValueError("base_lr and weight_decay must be non-negative")
        if self.soft_normalizer <= 0:
            raise ValueError(f"soft_normalizer must be positive, got {self.soft_normalizer}")
        if self.encoder_layout not in (1, 2):
            raise ValueError(f"encoder_layout must be 1 or 2, got {self.encoder_layout}")
        for name in ("hidden", "grid", "styles", "k_max", "max_workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.eval_steps < 0 or self.logging_steps < 0:
            raise ValueError("eval_steps and logging_steps must be non-negative")
        # validates the string early
        self.accuracy_kind()
        ObjectiveConfig(
            beta=self.beta,
            adversarial=self.adversarial,
            max_reward=self.max_reward,
            std_epsilon=self.std_epsilon,
            clip_epsilon=self.clip_epsilon,
        )

    def accuracy_kind(self) -> AccuracyRewardKind:
        return AccuracyRewardKind.parse(self.accuracy)

    @property
    def resolved_prediction_mode(self) -> PredictionMode:
        if self.prediction_mode is not None:
            return self.prediction_mode  # type: ignore[return-value]
        return self.accuracy_kind().prediction_mode

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            beta=self.beta,
            adversarial=self.adversarial,
            max_reward=self.max_reward,
            std_epsilon=self.std_epsilon,
            clip_epsilon=self.clip_epsilon,
        )

    def policy_dims(self, feature_dim: int) -> PolicyDims:
        return PolicyDims(
            feature_dim=feature_dim, hidden=self.hidden, grid=self.grid, styles=self.styles
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def digest(self, exclude: tuple = ("run_name", "max_workers", "log_completions")) -> str:
        """Digest of every setting that can change the training outcome."""
        values = {k: v for k, v in self.to_dict().items() if k not in exclude}
        if self.beta == 0:
            # the adversarial factor only scales the KL term
            values.pop("adversarial", None)
        return config_digest(values)

    def replace(self, **overrides) -> "TrainConfig":
        return replace(self, **overrides)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


def final_recipe(**overrides) -> TrainConfig:
    """Soft format, point prediction, In-Bbox, adversarial KL with beta 1e-4, 1300 steps."""
    base = dict(
        mode="grpo",
        group_size=6,
        batch_size=4,
        beta=1e-4,
        adversarial=True,
        format_variant="soft",
        accuracy="in-bbox",
        prediction_mode="point",
        base_lr=1e-5,
        total_steps=1300,
        include_resolution_train=False,
        include_resolution_eval=True,
    )
    base.update(overrides)
    return TrainConfig(**base)
