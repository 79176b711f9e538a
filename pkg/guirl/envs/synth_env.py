import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from guirl.errors import DataError, SceneGenerationError
from guirl.policy.render import axis_flags, render
from guirl.policy.sampling import DistributionParams, sample
from guirl.rubrics.grounding_rubric import GroundingRubric
from guirl.types import (
    ELEMENT_COLORS,
    ELEMENT_KINDS,
    ELEMENT_LABELS,
    BBox,
    Element,
    PredictionMode,
    PromptVariant,
    RewardBreakdown,
    Scene,
    StructuredResponse,
    Task,
    boxes_overlap,
)
from guirl.utils.data_utils import config_digest, read_jsonl, write_jsonl


INSTRUCTION_TEMPLATE = "the {color} {kind} labeled '{label}'"
RESOLUTION_TEMPLATE = "The screenshot resolution is {width}×{height}. "
PROMPT_TEMPLATES: Dict[str, str] = {
    "strict_bbox": (
        "Please provide the bounding box coordinates [x1, y1, x2, y2] of a specific "
        "element based on this sentence: {description}. First, think through the "
        "reasoning process within <think> </think> tags. Then, output the bounding box "
        "coordinates in JSON format within <answer> </answer> tags."
    ),
    "soft_bbox": (
        "Please provide the bounding box coordinates [x1, y1, x2, y2] of a specific "
        "element based on this sentence: {description}. First, think about the "
        "reasoning process in the mind within <think> </think> tags. Then, output the "
        "bounding box coordinates within <answer> </answer> tags."
    ),
    "soft_point": (
        "Please provide the point coordinates [x, y] of a specific "
        "element based on this sentence: {description}. First, think about the "
        "reasoning process in the mind within <think> </think> tags. Then, output the "
        "point coordinates within <answer> </answer> tags."
    ),
    "sft": (
        "Please provide the bounding box coordinates of the region described by this "
        "sentence: {description}."
    ),
}

# canvas width upper bounds of the size buckets
SIZE_BUCKETS: Tuple[Tuple[str, int], ...] = (("small", 800), ("medium", 1400))

ELEMENT_BLOCK = 4 + len(ELEMENT_KINDS) + len(ELEMENT_COLORS) + 1
DESCRIPTOR_BLOCK = len(ELEMENT_KINDS) + len(ELEMENT_COLORS) + len(ELEMENT_LABELS)
RESOLUTION_BLOCK = 2


class SceneConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_max: int = Field(default=5, ge=1)
    canvas_min: Tuple[int, int] = (320, 240)
    canvas_max: Tuple[int, int] = (1920, 1080)
    min_box: int = Field(default=24, ge=1)
    # every side spans at least one grid cell at G=16, so some cell center lies inside
    min_box_fraction: float = Field(default=1 / 16, ge=0.0, le=1.0)
    max_box_fraction: float = Field(default=0.25, gt=0.0, le=1.0)
    max_attempts: int = Field(default=200, ge=1)

    @model_validator(mode="after")
    def _check_feasible(self) -> "SceneConfig":
        (wmin, hmin), (wmax, hmax) = self.canvas_min, self.canvas_max
        if not (0 < wmin <= wmax and 0 < hmin <= hmax):
            raise ValueError(f"canvas range {self.canvas_min}..{self.canvas_max} is empty")
        if self.min_box_fraction > self.max_box_fraction:
            raise ValueError(
                f"min_box_fraction {self.min_box_fraction} exceeds max_box_fraction {self.max_box_fraction}"
            )
        if self.min_box > min(wmin, hmin):
            raise ValueError(
                f"min_box {self.min_box} does not fit on the smallest canvas {self.canvas_min}"
            )
        return self


class EncoderConfig(BaseModel):
    """
    Feature layout:
      k_max blocks of [x1/w, y1/h, x2/w, y2/h, kind one-hot, color one-hot, match],
      target descriptor one-hots (kind, color, label),
      (layout 2) target occupancy: G row flags, then G column flags,
      [w/1000, h/1000] or zeros when include_resolution is off.

    Elements matching the instruction occupy the first blocks; the rest follow
    in scene order. A row flag is 1 when the rendered center of that grid row
    lies inside the target box (edges included), so a cell whose row and column
    flags are both set is a hit. Layout 1 omits the occupancy block.
    """

    model_config = ConfigDict(frozen=True)

    k_max: int = Field(default=5, ge=1)
    include_resolution: bool = False
    grid: int = Field(default=16, ge=1)
    layout_version: Literal[1, 2] = 2

    @property
    def occupancy_dim(self) -> int:
        return 2 * self.grid if self.layout_version >= 2 else 0

    @property
    def feature_dim(self) -> int:
        return ELEMENT_BLOCK * self.k_max + DESCRIPTOR_BLOCK + self.occupancy_dim + RESOLUTION_BLOCK

    @property
    def occupancy_slots(self) -> slice:
        start = ELEMENT_BLOCK * self.k_max + DESCRIPTOR_BLOCK
        return slice(start, start + self.occupancy_dim)

    @property
    def resolution_slots(self) -> slice:
        return slice(self.feature_dim - RESOLUTION_BLOCK, self.feature_dim)

    @classmethod
    def for_feature_dim(
        cls, feature_dim: int, k_max: int, grid: int, include_resolution: bool = False
    ) -> "EncoderConfig":
        """The layout producing `feature_dim` features, newest version first."""
        for version in (2, 1):
            config = cls(
                k_max=k_max, grid=grid, include_resolution=include_resolution, layout_version=version
            )
            if config.feature_dim == feature_dim:
                return config
        raise ValueError(
            f"no encoder layout with k_max={k_max} and grid={grid} produces {feature_dim} features"
        )


def size_bucket(canvas_width: int) -> str:
    for name, upper in SIZE_BUCKETS:
        if canvas_width < upper:
            return name
    return "large"


def _sample_box(
    rng: np.random.Generator, width: int, height: int, config: SceneConfig
) -> BBox:
    min_w = max(config.min_box, math.ceil(width * config.min_box_fraction))
    min_h = max(config.min_box, math.ceil(height * config.min_box_fraction))
    max_w = max(min_w, int(width * config.max_box_fraction))
    max_h = max(min_h, int(height * config.max_box_fraction))
    bw = int(rng.integers(min_w, min(max_w, width) + 1))
    bh = int(rng.integers(min_h, min(max_h, height) + 1))
    x1 = int(rng.integers(0, width - bw + 1))
    y1 = int(rng.integers(0, height - bh + 1))
    return BBox(x1=x1, y1=y1, x2=x1 + bw, y2=y1 + bh)


def generate_scene(rng: np.random.Generator, config: SceneConfig = SceneConfig()) -> Scene:
    """Rejection-sample up to k_max non-overlapping elements on integer coordinates."""
    (wmin, hmin), (wmax, hmax) = config.canvas_min, config.canvas_max
    width = int(rng.integers(wmin, wmax + 1))
    height = int(rng.integers(hmin, hmax + 1))
    count = int(rng.integers(1, config.k_max + 1))
    boxes: List[BBox] = []
    for i in range(count):
        for _ in range(config.max_attempts):
            box = _sample_box(rng, width, height, config)
            if not any(boxes_overlap(box, other) for other in boxes):
                boxes.append(box)
                break
        else:
            raise SceneGenerationError(
                f"could not place element {i + 1}/{count} on a {width}x{height} canvas "
                f"after {config.max_attempts} attempts"
            )
    elements = [
        Element(
            bbox=box,
            kind=ELEMENT_KINDS[int(rng.integers(len(ELEMENT_KINDS)))],
            color=ELEMENT_COLORS[int(rng.integers(len(ELEMENT_COLORS)))],
            label=ELEMENT_LABELS[int(rng.integers(len(ELEMENT_LABELS)))],
        )
        for box in boxes
    ]
    return Scene(canvas_width=width, canvas_height=height, elements=elements)


def describe(element: Element) -> str:
    return INSTRUCTION_TEMPLATE.format(
        color=element.color, kind=element.kind, label=element.label
    )


def unique_indices(scene: Scene) -> List[int]:
    descriptors = [el.descriptor for el in scene.elements]
    return [i for i, d in enumerate(descriptors) if descriptors.count(d) == 1]


def make_task(scene: Scene, rng: np.random.Generator, task_id: str = "task-0") -> Task:
    """Pick a uniformly random uniquely describable element as the target."""
    candidates = unique_indices(scene)
    if not candidates:
        raise SceneGenerationError("no element of the scene has a unique descriptor")
    index = candidates[int(rng.integers(len(candidates)))]
    target = scene.elements[index]
    return Task(
        id=task_id,
        scene=scene,
        instruction=describe(target),
        target_index=index,
        gt=target.bbox,
        subset={"size_bucket": size_bucket(scene.canvas_width), "kind": target.kind},
    )


def generate_tasks(
    seed: int, count: int, config: SceneConfig = SceneConfig(), max_regenerations: int = 100
) -> List[Task]:
    """`count` tasks with ids `task-<seed>-<i>`, fully determined by (seed, config)."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    rng = np.random.default_rng(seed)
    tasks = []
    for i in range(count):
        for _ in range(max_regenerations):
            scene = generate_scene(rng, config)
            if unique_indices(scene):
                tasks.append(make_task(scene, rng, f"task-{seed}-{i}"))
                break
        else:
            raise SceneGenerationError(
                f"task {i}: no scene with a uniquely describable element "
                f"after {max_regenerations} scenes"
            )
    return tasks


def _one_hot(values: Sequence[str], value: str) -> np.ndarray:
    out = np.zeros(len(values))
    if value in values:
        out[values.index(value)] = 1.0
    return out


def encode(task: Task, config: EncoderConfig = EncoderConfig()) -> np.ndarray:
    scene = task.scene
    if len(scene.elements) > config.k_max:
        raise ValueError(
            f"task {task.id}: {len(scene.elements)} elements exceed k_max={config.k_max}"
        )
    width, height = task.canvas
    target = task.target.descriptor
    matches = [el.descriptor == target for el in scene.elements]
    order = [i for i, m in enumerate(matches) if m] + [
        i for i, m in enumerate(matches) if not m
    ]
    features = np.zeros(config.feature_dim)
    for slot, i in enumerate(order):
        el = scene.elements[i]
        b = el.bbox
        features[slot * ELEMENT_BLOCK : (slot + 1) * ELEMENT_BLOCK] = np.concatenate(
            [
                [b.x1 / width, b.y1 / height, b.x2 / width, b.y2 / height],
                _one_hot(ELEMENT_KINDS, el.kind),
                _one_hot(ELEMENT_COLORS, el.color),
                [1.0 if matches[i] else 0.0],
            ]
        )
    start = config.k_max * ELEMENT_BLOCK
    kind, color, label = target
    features[start : start + DESCRIPTOR_BLOCK] = np.concatenate(
        [
            _one_hot(ELEMENT_KINDS, kind),
            _one_hot(ELEMENT_COLORS, color),
            _one_hot(ELEMENT_LABELS, label),
        ]
    )
    if config.occupancy_dim:
        rows, cols = axis_flags(task.gt, config.grid, task.canvas)
        features[config.occupancy_slots] = np.array(rows + cols, dtype=np.float64)
    if config.include_resolution:
        features[config.resolution_slots] = [width / 1000.0, height / 1000.0]
    return features


def render_prompt(
    task: Task, variant: PromptVariant = "soft_point", include_resolution: bool = False
) -> str:
    if variant not in PROMPT_TEMPLATES:
        raise ValueError(f"Unknown prompt variant: {variant}")
    prompt = PROMPT_TEMPLATES[variant].format(description=task.instruction)
    if include_resolution:
        width, height = task.canvas
        prompt = RESOLUTION_TEMPLATE.format(width=width, height=height) + prompt
    return prompt


def task_to_record(task: Task) -> Dict:
    return {
        "id": task.id,
        "canvas": [task.scene.canvas_width, task.scene.canvas_height],
        "elements": [
            {
                "bbox": [int(v) if float(v).is_integer() else v for v in el.bbox.as_list()],
                "kind": el.kind,
                "color": el.color,
                "label": el.label,
            }
            for el in task.scene.elements
        ],
        "instruction": task.instruction,
        "target_index": task.target_index,
        "gt_bbox": [int(v) if float(v).is_integer() else v for v in task.gt.as_list()],
        "subset": dict(task.subset),
    }


def task_from_record(record: Dict, where: str) -> Task:
    try:
        width, height = record["canvas"]
        elements = [
            Element(
                bbox=BBox.from_list(el["bbox"]),
                kind=el["kind"],
                color=el["color"],
                label=el["label"],
            )
            for el in record["elements"]
        ]
        scene = Scene(canvas_width=width, canvas_height=height, elements=elements)
        return Task(
            id=str(record.get("id", where)),
            scene=scene,
            instruction=record["instruction"],
            target_index=record["target_index"],
            gt=BBox.from_list(record["gt_bbox"]),
            subset=record.get("subset", {}),
        )
    except KeyError as e:
        raise DataError(f"{where}: missing field {e}") from e
    except (ValidationError, ValueError, TypeError) as e:
        raise DataError(f"{where}: invalid task record: {e}") from e


def save_dataset(tasks: Sequence[Task], path: str | Path) -> int:
    records = [task_to_record(t) for t in tasks]
    digest = config_digest([r["id"] for r in records])
    return write_jsonl(path, records, "dataset", digest)


def load_dataset(path: str | Path) -> List[Task]:
    tasks = []
    seen = set()
    for lineno, record in read_jsonl(path):
        task = task_from_record(record, f"{path}:{lineno}")
        if task.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate task id {task.id}")
        seen.add(task.id)
        tasks.append(task)
    return tasks


@dataclass
class Rollout:
    response: StructuredResponse
    logp: np.ndarray
    completion: str
    reward: RewardBreakdown


class SynthGroundingEnv:
    """
    Synthetic grounding environment: tasks, features, prompts and scored rollouts.
    """

    def __init__(
        self,
        rubric: GroundingRubric | None = None,
        encoder_config: EncoderConfig = EncoderConfig(),
        grid: int = 16,
        bbox_half_extent: float = 1.0,
        prompt_variant: PromptVariant | None = None,
        max_workers: int = 1,
        **kwargs,
    ):
        self.rubric = rubric if rubric is not None else GroundingRubric()
        self.parser = self.rubric.parser
        # occupancy flags follow the grid the policy answers on
        self.encoder_config = encoder_config.model_copy(update={"grid": grid})
        self.grid = grid
        self.bbox_half_extent = bbox_half_extent
        self.prediction_mode: PredictionMode = self.rubric.prediction_mode
        if prompt_variant is None:
            prompt_variant = "soft_point" if self.prediction_mode == "point" else "soft_bbox"
        self.prompt_variant = prompt_variant
        self.max_workers = max(1, max_workers)
        self.logger = logging.getLogger(f"guirl.envs.{self.__class__.__name__}")
        for key, value in kwargs.items():
            setattr(self, key, value)

    @property
    def feature_dim(self) -> int:
        return self.encoder_config.feature_dim

    def features(self, task: Task, include_resolution: bool | None = None) -> np.ndarray:
        config = self.encoder_config
        if include_resolution is not None and include_resolution != config.include_resolution:
            config = config.model_copy(update={"include_resolution": include_resolution})
        return encode(task, config)

    def format_prompt(self, task: Task, include_resolution: bool = False) -> str:
        return render_prompt(task, self.prompt_variant, include_resolution)

    def complete(self, response: StructuredResponse, task: Task) -> str:
        return render(
            response, task, self.grid, self.prediction_mode, self.bbox_half_extent
        )

    def rollout(
        self, dist: DistributionParams, task: Task, rng: np.random.Generator
    ) -> Rollout:
        """Sample one response, render it and score it against the task."""
        response, logp = sample(dist, rng, self.prediction_mode)
        completion = self.complete(response, task)
        return Rollout(
            response=response,
            logp=logp,
            completion=completion,
            reward=self.rubric.score(completion, task.gt),
        )

    def generate(
        self,
        jobs: Sequence[Tuple[DistributionParams, Task, np.random.Generator]],
    ) -> List[Rollout]:
        """
        Run rollouts, concurrently when `max_workers > 1`.

        Results come back in job order, so the outcome does not depend on the
        number of workers.
        """
        if self.max_workers == 1 or len(jobs) <= 1:
            return [self.rollout(*job) for job in jobs]
        self.logger.debug(f"Running {len(jobs)} rollouts on {self.max_workers} threads")
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            return list(executor.map(lambda job: self.rollout(*job), jobs))
