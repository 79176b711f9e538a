from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from guirl.envs.synth_env import Rollout
from guirl.errors import InvariantError
from guirl.policy.network import PolicyParams, backward, forward
from guirl.policy.sampling import logprob
from guirl.trainers.grpo_core import GroupLossTerms, group_loss_terms
from guirl.trainers.train_config import TrainConfig
from guirl.trainers.trainer import Trainer
from guirl.types import GroupSample, MetricsRecord, Task
from guirl.utils.logging_utils import print_prompt_completions_sample
from guirl.utils.rng_utils import batch_indices, rollout_rngs

# drift allowed in the normalized advantages of a group
ADVANTAGE_TOLERANCE = 1e-9


class GRPOTrainer(Trainer):
    """
    Group relative policy optimization against a frozen reference policy.

    Each step draws `batch_size` tasks with replacement, samples `group_size`
    responses per task, scores them with the rubric and takes one AdamW step on
    the mean over the batch of the per-group losses.
    """

    CSV_HEADER = (
        "step",
        "mean_total_reward",
        "mean_format_reward",
        "mean_accuracy_reward",
        "mean_kl",
        "eval_acc",
        "lr",
    )
    METRICS_NAME = "metrics"

    def __init__(self, config: TrainConfig, *args, **kwargs):
        super().__init__(config, *args, **kwargs)
        self.objective = config.objective_config()
        self.coefficient_log: List[Dict[str, Any]] = []

    def csv_row(self, record: MetricsRecord) -> Sequence[Any]:
        return (
            record.step,
            record.mean_total_reward,
            record.mean_format_reward,
            record.mean_accuracy_reward,
            record.mean_kl_estimate,
            record.eval_accuracy,
            record.effective_lr,
        )

    def rollouts(self, step: int) -> List[Tuple[Task, np.ndarray, List[Rollout]]]:
        """Sample and score the groups of one step, in batch-slot order."""
        n = self.config.group_size
        indices = batch_indices(self.config.seed, step, self.config.batch_size, len(self.train_tasks))
        jobs = []
        slots = []
        for slot, idx in enumerate(indices):
            task, features = self.train_tasks[idx], self.train_features[idx]
            dist = forward(self.params, features)
            for rng in rollout_rngs(self.config.seed, step, slot, n):
                jobs.append((dist, task, rng))
            slots.append((task, features))
        results = self.env.generate(jobs)
        return [
            (task, features, results[slot * n : (slot + 1) * n])
            for slot, (task, features) in enumerate(slots)
        ]

    def _group(
        self,
        params: PolicyParams,
        features: np.ndarray,
        rollouts: List[Rollout],
        logp_old: Optional[List[List[float]]] = None,
    ) -> Tuple[GroupSample, np.ndarray]:
        ref_dist = forward(self.reference, features)
        ref_logp = np.stack([logprob(ref_dist, r.response) for r in rollouts])
        if logp_old is None:
            current = [r.logp.tolist() for r in rollouts]
        else:
            dist = forward(params, features)
            current = [logprob(dist, r.response).tolist() for r in rollouts]
        group = GroupSample(
            responses=[r.response for r in rollouts],
            rewards=[r.reward.total for r in rollouts],
            logp_current=current,
            logp_reference=ref_logp.tolist(),
            logp_old=logp_old,
        )
        return group, ref_logp

    def _check_advantages(self, terms: GroupLossTerms, rewards: List[float], where: str) -> None:
        if np.std(rewards) < self.objective.std_epsilon:
            if np.any(terms.advantages != 0):
                raise InvariantError(f"{where}: zero-variance group with non-zero advantages")
            return
        mean, std = float(terms.advantages.mean()), float(terms.advantages.std())
        if abs(mean) > ADVANTAGE_TOLERANCE or abs(std - 1.0) > ADVANTAGE_TOLERANCE:
            raise InvariantError(f"{where}: advantages have mean {mean} and std {std}")

    def _batch_gradient(
        self,
        groups: List[Tuple[Task, np.ndarray, List[Rollout]]],
        step_number: int,
        clip: bool,
    ) -> Tuple[PolicyParams, List[GroupLossTerms]]:
        total = PolicyParams.zeros(self.params.dims)
        all_terms = []
        for task, features, rollouts in groups:
            where = f"step {step_number}, task {task.id}"
            try:
                logp_old = [r.logp.tolist() for r in rollouts] if clip else None
                group, ref_logp = self._group(self.params, features, rollouts, logp_old)
                terms = group_loss_terms(group, self.objective)
            except ValueError as e:
                raise InvariantError(f"{where}: {e}") from e
            self._check_advantages(terms, group.rewards, where)
            grads = backward(
                self.params, features, group.responses, terms.coefficients, ref_logp
            )
            total = total.zip_map(grads, np.add)
            all_terms.append(terms)
        return total.map(lambda g: g / len(groups)), all_terms

    def training_step(self, step: int) -> MetricsRecord:
        step_number = step + 1
        groups = self.rollouts(step)
        for task, _, rollouts in groups:
            for r in rollouts:
                if not 0.0 <= r.reward.total <= self.config.max_reward:
                    raise InvariantError(
                        f"step {step_number}, task {task.id}: reward {r.reward.total} out of range"
                    )

        grads, terms = self._batch_gradient(groups, step_number, clip=False)
        self.apply_gradient(grads)
        for _ in range(self.config.num_iterations - 1):
            grads, _ = self._batch_gradient(groups, step_number, clip=True)
            self.apply_gradient(grads)

        if self.config.log_coefficients:
            self._log_coefficients(step_number, groups, terms)
        if self.config.log_completions and step_number % max(1, self.config.logging_steps) == 0:
            self._print_samples(step_number, groups)

        rewards = [r.reward for _, _, rollouts in groups for r in rollouts]
        record = MetricsRecord(
            step=step_number,
            mean_total_reward=float(np.mean([r.total for r in rewards])),
            mean_format_reward=float(np.mean([r.format_score for r in rewards])),
            mean_accuracy_reward=float(np.mean([r.accuracy_score for r in rewards])),
            mean_kl_estimate=float(np.mean(np.concatenate([t.kl for t in terms]))),
            mean_advantage_abs=float(np.mean(np.abs(np.concatenate([t.advantages for t in terms])))),
            effective_lr=self.optimizer.effective_lr,
        )
        if self.should_evaluate(step_number):
            record.eval_accuracy = self.evaluate()
        return record

    def _log_coefficients(self, step_number, groups, terms: List[GroupLossTerms]) -> None:
        for (task, _, rollouts), t in zip(groups, terms):
            for i, r in enumerate(rollouts):
                self.coefficient_log.append(
                    {
                        "step": step_number,
                        "task_id": task.id,
                        "index": i,
                        "reward": r.reward.total,
                        "advantage": float(t.advantages[i]),
                        "adv_coef": float(t.adv_coefs[i]),
                        "kl_coef": float(t.kl_coefs[i]),
                    }
                )

    def _print_samples(self, step_number, groups) -> None:
        task, _, rollouts = groups[0]
        prompt = self.env.format_prompt(task, self.config.include_resolution_train)
        print_prompt_completions_sample(
            [prompt] * len(rollouts),
            [r.completion for r in rollouts],
            [r.reward for r in rollouts],
            step_number,
            num_samples=self.config.num_completions_to_print,
        )


def train_grpo(
    config: TrainConfig,
    train_tasks: Sequence[Task],
    eval_tasks: Sequence[Task] = (),
    init_params: Optional[PolicyParams] = None,
) -> Tuple[PolicyParams, List[MetricsRecord]]:
    trainer = GRPOTrainer(config, train_tasks, eval_tasks, init_params)
    return trainer.train()
