__version__ = "0.1.0"

from .types import *  # noqa: F403
from .utils.logging_utils import (  # noqa: F401
    print_ablation_table,
    print_eval_report,
    print_prompt_completions_sample,
    setup_logging,
)

from .envs.synth_env import SynthGroundingEnv
from .errors import DataError, InvariantError, SceneGenerationError
from .evaluator import evaluate_policy, score_prediction_file
from .parsers.grounding_parser import GroundingParser
from .parsers.parser import Parser
from .rubrics.grounding_rubric import GroundingRubric
from .rubrics.rubric import Rubric
from .trainers import (
    GRPOTrainer,
    SFTTrainer,
    TrainConfig,
    final_recipe,
    run_ablation,
    train_grpo,
    train_sft,
)

# Setup default logging configuration
setup_logging()

__all__ = [
    "Parser",
    "GroundingParser",
    "Rubric",
    "GroundingRubric",
    "SynthGroundingEnv",
    "TrainConfig",
    "GRPOTrainer",
    "SFTTrainer",
    "final_recipe",
    "train_grpo",
    "train_sft",
    "run_ablation",
    "evaluate_policy",
    "score_prediction_file",
    "DataError",
    "InvariantError",
    "SceneGenerationError",
    "setup_logging",
    "print_prompt_completions_sample",
    "print_eval_report",
    "print_ablation_table",
]
