from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from guirl.errors import InvariantError
from guirl.policy.network import PolicyParams, backward, forward
from guirl.policy.render import cell_of_point
from guirl.policy.sampling import logprob
from guirl.trainers.trainer import Trainer
from guirl.trainers.train_config import TrainConfig
from guirl.types import PredictionMode, SFTMetricsRecord, StructuredResponse, Task
from guirl.utils.rng_utils import batch_indices


def gold_response(task: Task, grid: int, mode: PredictionMode = "point") -> StructuredResponse:
    """All tags on, bracketed style, the grid cell holding the gt center."""
    center = task.gt.center
    return StructuredResponse(
        tag_included=(True, True, True, True),
        style=0,
        cell=cell_of_point(center.x, center.y, grid, task.canvas),
        prediction_mode=mode,
    )


class SFTTrainer(Trainer):
    """Maximum likelihood on gold responses with the same optimizer and schedule as GRPO."""

    CSV_HEADER = ("step", "sft_loss", "gold_logprob", "eval_acc", "lr")
    METRICS_NAME = "metrics"

    def __init__(self, config: TrainConfig, *args, **kwargs):
        super().__init__(config, *args, **kwargs)
        mode = self.env.prediction_mode
        self.gold = [gold_response(t, config.grid, mode) for t in self.train_tasks]

    def csv_row(self, record: SFTMetricsRecord) -> Sequence[Any]:
        return (
            record.step,
            record.sft_loss,
            record.gold_logprob,
            record.eval_accuracy,
            record.effective_lr,
        )

    def gold_logprob(self, index: int, params: Optional[PolicyParams] = None) -> float:
        dist = forward(params if params is not None else self.params, self.train_features[index])
        return float(logprob(dist, self.gold[index]).sum())

    def training_step(self, step: int) -> SFTMetricsRecord:
        step_number = step + 1
        indices = batch_indices(self.config.seed, step, self.config.batch_size, len(self.train_tasks))
        total = PolicyParams.zeros(self.params.dims)
        gold_logps = []
        for idx in indices:
            features = self.train_features[idx]
            current = logprob(forward(self.params, features), self.gold[idx])
            gold_logps.append(float(current.sum()))
            # (adv_coef=1, kl_coef=0) turns the policy-gradient loss into -log pi(gold)
            grads = backward(self.params, features, [self.gold[idx]], [(1.0, 0.0)], current[None, :])
            total = total.zip_map(grads, np.add)
        self.apply_gradient(total.map(lambda g: g / len(indices)))

        mean_logp = float(np.mean(gold_logps))
        if not np.isfinite(mean_logp):
            raise InvariantError(f"step {step_number}: non-finite gold log-probability")
        record = SFTMetricsRecord(
            step=step_number,
            sft_loss=-mean_logp,
            gold_logprob=mean_logp,
            effective_lr=self.optimizer.effective_lr,
        )
        if self.should_evaluate(step_number):
            record.eval_accuracy = self.evaluate()
        return record


def train_sft(
    config: TrainConfig,
    train_tasks: Sequence[Task],
    init_params: Optional[PolicyParams] = None,
    eval_tasks: Sequence[Task] = (),
) -> Tuple[PolicyParams, List[SFTMetricsRecord]]:
    trainer = SFTTrainer(config, train_tasks, eval_tasks, init_params)
    return trainer.train()
