import logging
import time
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

from pydantic import BaseModel

from guirl.envs.synth_env import EncoderConfig, SynthGroundingEnv
from guirl.errors import DataError, InvariantError
from guirl.evaluator import evaluate_policy
from guirl.policy.checkpoint import TrainerCheckpoint, save_checkpoint
from guirl.policy.network import PolicyParams, init_params
from guirl.policy.optimizer import OptimizerState, optimizer_step
from guirl.rubrics.grounding_rubric import GroundingRubric
from guirl.trainers.train_config import TrainConfig
from guirl.types import Task
from guirl.utils.data_utils import write_csv, write_jsonl
from guirl.utils.rng_utils import INIT_STREAM, derive_rng


def build_env(config: TrainConfig) -> SynthGroundingEnv:
    rubric = GroundingRubric(
        format_variant=config.format_variant,
        accuracy=config.accuracy_kind(),
        prediction_mode=config.resolved_prediction_mode,
        soft_normalizer=config.soft_normalizer,
    )
    return SynthGroundingEnv(
        rubric=rubric,
        encoder_config=EncoderConfig(
            k_max=config.k_max,
            include_resolution=config.include_resolution_train,
            grid=config.grid,
            layout_version=config.encoder_layout,
        ),
        grid=config.grid,
        bbox_half_extent=config.bbox_half_extent,
        max_workers=config.max_workers,
    )


class Trainer:
    """
    Shared state of the GRPO and SFT trainers: policy, frozen reference,
    AdamW state, evaluation and output files.
    """

    CSV_HEADER: Tuple[str, ...] = ()
    METRICS_NAME = "metrics"

    def __init__(
        self,
        config: TrainConfig,
        train_tasks: Sequence[Task],
        eval_tasks: Sequence[Task] = (),
        init: Optional[PolicyParams] = None,
        env: Optional[SynthGroundingEnv] = None,
    ):
        self.logger = logging.getLogger(f"guirl.trainers.{self.__class__.__name__}")
        if not train_tasks:
            raise DataError("training needs at least one task")
        self.config = config
        self.env = env if env is not None else build_env(config)
        self.train_tasks = list(train_tasks)
        self.eval_tasks = list(eval_tasks)
        dims = config.policy_dims(self.env.feature_dim)
        if init is None:
            init = init_params(dims, derive_rng(config.seed, INIT_STREAM), config.head_scale)
        elif init.dims != dims:
            raise DataError(f"initial params have dims {init.dims}, config expects {dims}")
        self.params = init.copy()
        self.reference = init.frozen()
        self._reference_checksum = self.reference.checksum()
        self.optimizer = OptimizerState(
            base_lr=config.base_lr,
            total_steps=config.total_steps * config.num_iterations,
            weight_decay=config.weight_decay,
        )
        self.step = 0
        self.metrics: List[BaseModel] = []
        self.train_features = [self.env.features(t) for t in self.train_tasks]

    # ---- hooks -------------------------------------------------------------

    def training_step(self, step: int) -> BaseModel:
        raise NotImplementedError

    def csv_row(self, record: Any) -> Sequence[Any]:
        raise NotImplementedError

    # ---- shared loop -------------------------------------------------------

    def apply_gradient(self, grads: PolicyParams) -> None:
        self.params = optimizer_step(self.params, grads, self.optimizer)
        if not self.params.is_finite():
            raise InvariantError(f"step {self.step + 1}: non-finite parameters after update")

    def check_reference(self, step: int) -> None:
        if self.reference.checksum() != self._reference_checksum:
            raise InvariantError(f"step {step}: reference parameters changed")

    def should_evaluate(self, step: int) -> bool:
        every = self.config.eval_steps
        if not self.eval_tasks or every <= 0:
            return False
        return step % every == 0 or step == self.config.total_steps

    def evaluate(self, params: Optional[PolicyParams] = None) -> float:
        report = evaluate_policy(
            params if params is not None else self.params,
            self.eval_tasks,
            include_resolution=self.config.include_resolution_eval,
            mode=self.env.prediction_mode,
            k_max=self.config.k_max,
            bbox_half_extent=self.config.bbox_half_extent,
        )
        return report.overall

    def train(self, until_step: Optional[int] = None) -> Tuple[PolicyParams, List[BaseModel]]:
        """Run training steps up to `until_step` (default: total_steps)."""
        last = self.config.total_steps if until_step is None else until_step
        if not 0 <= last <= self.config.total_steps:
            raise ValueError(f"until_step must lie in [0, {self.config.total_steps}], got {last}")
        while self.step < last:
            start = time.perf_counter()
            record = self.training_step(self.step)
            self.step += 1
            record.wall_ms = (time.perf_counter() - start) * 1000.0
            self.check_reference(self.step)
            self.metrics.append(record)
            if self.config.logging_steps and (
                self.step % self.config.logging_steps == 0 or self.step == last
            ):
                self.logger.info(
                    f"step {self.step}/{self.config.total_steps}: "
                    + " ".join(
                        f"{k}={v:.4g}"
                        for k, v in record.model_dump(exclude={"step", "wall_ms"}).items()
                        if v is not None
                    )
                )
        return self.params, self.metrics

    # ---- persistence -------------------------------------------------------

    def checkpoint(self) -> TrainerCheckpoint:
        return TrainerCheckpoint(
            params=self.params,
            reference=self.reference,
            optimizer=self.optimizer,
            step=self.step,
            seed=self.config.seed,
            config=self.config.to_dict(),
        )

    def save_checkpoint(self, path: str | Path) -> None:
        save_checkpoint(self.checkpoint(), path)

    def restore(self, checkpoint: TrainerCheckpoint) -> None:
        """Continue from a checkpoint written by a run with the same config."""
        if checkpoint.params.dims != self.params.dims:
            raise DataError(
                f"checkpoint dims {checkpoint.params.dims} do not match {self.params.dims}"
            )
        if checkpoint.seed != self.config.seed:
            raise DataError(f"checkpoint seed {checkpoint.seed} != config seed {self.config.seed}")
        self.params = checkpoint.params.copy()
        self.reference = checkpoint.reference.frozen()
        self._reference_checksum = self.reference.checksum()
        self.optimizer = checkpoint.optimizer
        self.step = checkpoint.step

    def save_metrics(self, out_dir: str | Path) -> Tuple[Path, Path]:
        out_dir = Path(out_dir)
        digest = self.config.digest()
        jsonl = out_dir / f"{self.METRICS_NAME}.jsonl"
        csv = out_dir / f"{self.METRICS_NAME}.csv"
        write_jsonl(
            jsonl,
            (r.model_dump(exclude={"wall_ms"}) for r in self.metrics),
            self.METRICS_NAME,
            digest,
        )
        write_csv(
            csv,
            self.CSV_HEADER,
            (self.csv_row(r) for r in self.metrics),
            f"{self.METRICS_NAME}-csv",
            digest,
        )
        return jsonl, csv
