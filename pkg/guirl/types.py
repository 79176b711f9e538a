import math
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Literal,
    Optional,
    Tuple,
)

from pydantic import BaseModel, ConfigDict, Field, model_validator

# typing aliases
PredictionMode = Literal["point", "bbox"]
FormatVariant = Literal["strict", "soft"]
PromptVariant = Literal["strict_bbox", "soft_bbox", "soft_point", "sft"]
RewardFunc = Callable[..., float]

ElementKind = Literal["button", "icon", "text", "field"]
ElementColor = Literal[
    "red", "green", "blue", "yellow", "black", "white", "gray", "orange"
]

ELEMENT_KINDS: Tuple[str, ...] = ("button", "icon", "text", "field")
ELEMENT_COLORS: Tuple[str, ...] = (
    "red",
    "green",
    "blue",
    "yellow",
    "black",
    "white",
    "gray",
    "orange",
)
ELEMENT_LABELS: Tuple[str, ...] = (
    "Submit",
    "Cancel",
    "Search",
    "Home",
    "Settings",
    "Login",
    "Help",
    "Next",
    "Back",
    "Save",
    "Open",
    "Close",
)

# fixed byte sequences, case-sensitive
THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"
TAGS: Tuple[str, str, str, str] = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


class BBox(BaseModel):
    """Axis-aligned box in continuous canvas pixels."""

    model_config = ConfigDict(frozen=True)

    x1: float
    y1: float
    x2: float
    y2: float

    @model_validator(mode="after")
    def _check_ordering(self) -> "BBox":
        if not _finite(self.x1, self.y1, self.x2, self.y2):
            raise ValueError(f"BBox coordinates must be finite, got {self.as_list()}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"BBox requires x1 < x2 and y1 < y2, got {self.as_list()}"
            )
        return self

    @classmethod
    def from_list(cls, values: List[float]) -> "BBox":
        if len(values) != 4:
            raise ValueError(f"BBox needs 4 values, got {len(values)}")
        x1, y1, x2, y2 = values
        return cls(x1=x1, y1=y1, x2=x2, y2=y2)

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> "Point":
        return Point(x=(self.x1 + self.x2) / 2, y=(self.y1 + self.y2) / 2)


class Point(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float

    @model_validator(mode="after")
    def _check_finite(self) -> "Point":
        if not _finite(self.x, self.y):
            raise ValueError(f"Point coordinates must be finite, got ({self.x}, {self.y})")
        return self


class FormatSpec(BaseModel):
    """Number of coordinates a well-formed answer carries (2 = point, 4 = bbox)."""

    model_config = ConfigDict(frozen=True)

    expected_coord_count: Literal[2, 4] = 2

    @classmethod
    def for_mode(cls, mode: PredictionMode) -> "FormatSpec":
        return cls(expected_coord_count=2 if mode == "point" else 4)


class AccuracyRewardKind(BaseModel):
    """
    One of the accuracy reward variants.

    String forms accepted by `parse` (and produced by `str`):
      - "iou"           continuous IoU
      - "iou@<tau>"     thresholded IoU, e.g. "iou@0.5"
      - "in-bbox"       point inside the ground-truth box
      - "distance@<k>"  point within k pixels of the box center, e.g. "distance@80"
    """

    model_config = ConfigDict(frozen=True)

    name: Literal["iou", "iou_threshold", "in_bbox", "distance"]
    threshold: float = 0.5
    k: float = 80.0

    @model_validator(mode="after")
    def _check_params(self) -> "AccuracyRewardKind":
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError(f"IoU threshold must lie in (0, 1], got {self.threshold}")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"distance threshold k must be positive, got {self.k}")
        return self

    @classmethod
    def parse(cls, text: str) -> "AccuracyRewardKind":
        key = text.strip().lower().replace("_", "-")
        if key == "iou":
            return cls(name="iou")
        if key in ("in-bbox", "inbbox"):
            return cls(name="in_bbox")
        if key.startswith("iou@"):
            return cls(name="iou_threshold", threshold=float(key[4:]))
        if key.startswith("distance@"):
            return cls(name="distance", k=float(key[9:]))
        raise ValueError(
            f"Unknown accuracy reward '{text}' "
            "(expected iou, iou@<tau>, in-bbox or distance@<k>)"
        )

    @property
    def prediction_mode(self) -> PredictionMode:
        return "bbox" if self.name in ("iou", "iou_threshold") else "point"

    def __str__(self) -> str:
        if self.name == "iou":
            return "iou"
        if self.name == "iou_threshold":
            return f"iou@{self.threshold:g}"
        if self.name == "in_bbox":
            return "in-bbox"
        return f"distance@{self.k:g}"


class RewardBreakdown(BaseModel):
    """Format score, accuracy score and their sum for one completion."""

    model_config = ConfigDict(frozen=True)

    format_score: float = Field(ge=0.0, le=1.0)
    accuracy_score: float = Field(ge=0.0, le=1.0)
    total: float = Field(ge=0.0, le=2.0)

    @model_validator(mode="after")
    def _check_total(self) -> "RewardBreakdown":
        if self.total != self.format_score + self.accuracy_score:
            raise ValueError(
                f"total {self.total} != format {self.format_score} + accuracy {self.accuracy_score}"
            )
        return self


class StructuredResponse(BaseModel):
    """One sampled response: tag bits, answer style and grid cell."""

    model_config = ConfigDict(frozen=True)

    tag_included: Tuple[bool, bool, bool, bool]
    style: int = Field(ge=0)
    cell: int = Field(ge=0)
    prediction_mode: PredictionMode = "point"


class GroupSample(BaseModel):
    """N responses for one task together with their scores and log-probabilities."""

    responses: List[Any]
    rewards: List[float]
    logp_current: List[List[float]]
    logp_reference: List[List[float]]
    # sampling-time log-probabilities, only set for multi-update clipping
    logp_old: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> "GroupSample":
        n = len(self.responses)
        if n < 2:
            raise ValueError(f"a group needs at least 2 responses, got {n}")
        lists = [self.rewards, self.logp_current, self.logp_reference]
        if self.logp_old is not None:
            lists.append(self.logp_old)
        if any(len(x) != n for x in lists):
            raise ValueError("responses, rewards and log-probabilities differ in length")
        for r in self.rewards:
            if not (math.isfinite(r) and 0.0 <= r <= 2.0):
                raise ValueError(f"reward {r} outside [0, 2]")
        for i in range(n):
            counts = {len(self.logp_current[i]), len(self.logp_reference[i])}
            if self.logp_old is not None:
                counts.add(len(self.logp_old[i]))
            if len(counts) != 1:
                raise ValueError(f"response {i}: decision counts differ between policies")
        for block in lists[1:]:
            for row in block:
                for lp in row:
                    if not (math.isfinite(lp) and lp <= 0.0):
                        raise ValueError(f"log-probability {lp} is not finite and <= 0")
        return self

    @property
    def size(self) -> int:
        return len(self.responses)


class Element(BaseModel):
    model_config = ConfigDict(frozen=True)

    bbox: BBox
    kind: ElementKind
    color: ElementColor
    label: str

    @property
    def descriptor(self) -> Tuple[str, str, str]:
        return (self.kind, self.color, self.label)


class Scene(BaseModel):
    """A synthetic screenshot: canvas size plus non-overlapping elements."""

    model_config = ConfigDict(frozen=True)

    canvas_width: int = Field(gt=0)
    canvas_height: int = Field(gt=0)
    elements: List[Element]

    @model_validator(mode="after")
    def _check_layout(self) -> "Scene":
        if not self.elements:
            raise ValueError("a scene needs at least one element")
        for i, el in enumerate(self.elements):
            b = el.bbox
            if b.x1 < 0 or b.y1 < 0 or b.x2 > self.canvas_width or b.y2 > self.canvas_height:
                raise ValueError(f"element {i} box {b.as_list()} leaves the canvas")
        for i in range(len(self.elements)):
            for j in range(i + 1, len(self.elements)):
                if boxes_overlap(self.elements[i].bbox, self.elements[j].bbox):
                    raise ValueError(f"elements {i} and {j} overlap")
        return self


def boxes_overlap(a: BBox, b: BBox) -> bool:
    """True when the boxes share positive area (touching edges do not count)."""
    return min(a.x2, b.x2) > max(a.x1, b.x1) and min(a.y2, b.y2) > max(a.y1, b.y1)


class Task(BaseModel):
    """A grounding task: scene, instruction and the target's ground-truth box."""

    model_config = ConfigDict(frozen=True)

    id: str
    scene: Scene
    instruction: str
    target_index: int = Field(ge=0)
    gt: BBox
    subset: Dict[str, str] = {}

    @model_validator(mode="after")
    def _check_target(self) -> "Task":
        elements = self.scene.elements
        if self.target_index >= len(elements):
            raise ValueError(
                f"target_index {self.target_index} out of range for {len(elements)} elements"
            )
        target = elements[self.target_index]
        if target.bbox != self.gt:
            raise ValueError("gt box does not match the target element")
        matches = sum(1 for el in elements if el.descriptor == target.descriptor)
        if matches != 1:
            raise ValueError("instruction does not identify a unique element")
        return self

    @property
    def target(self) -> Element:
        return self.scene.elements[self.target_index]

    @property
    def canvas(self) -> Tuple[int, int]:
        return (self.scene.canvas_width, self.scene.canvas_height)


class Annotation(BaseModel):
    """What the evaluator needs to score one item."""

    model_config = ConfigDict(frozen=True)

    id: str
    gt: BBox
    subset: Dict[str, str] = {}
    canvas: Tuple[int, int]
    instruction: str = ""

    @model_validator(mode="after")
    def _check_inside(self) -> "Annotation":
        w, h = self.canvas
        b = self.gt
        if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
            raise ValueError(f"annotation {self.id}: gt {b.as_list()} leaves the canvas")
        return self

    @classmethod
    def from_task(cls, task: Task) -> "Annotation":
        return cls(
            id=task.id,
            gt=task.gt,
            subset=task.subset,
            canvas=task.canvas,
            instruction=task.instruction,
        )

    @property
    def subset_key(self) -> str:
        return subset_key(self.subset)


def subset_key(subset: Dict[str, str]) -> str:
    return f"{subset.get('size_bucket', 'all')}/{subset.get('kind', 'all')}"


class MetricsRecord(BaseModel):
    step: int
    mean_total_reward: float = Field(ge=0.0, le=2.0)
    mean_format_reward: float = Field(ge=0.0, le=1.0)
    mean_accuracy_reward: float = Field(ge=0.0, le=1.0)
    mean_kl_estimate: float = Field(ge=0.0)
    mean_advantage_abs: float = Field(ge=0.0)
    eval_accuracy: Optional[float] = None
    effective_lr: float
    wall_ms: float = 0.0


class SFTMetricsRecord(BaseModel):
    step: int
    sft_loss: float
    gold_logprob: float
    eval_accuracy: Optional[float] = None
    effective_lr: float
    wall_ms: float = 0.0


class EvalReport(BaseModel):
    """Point-in-box accuracy with a per-subset breakdown."""

    overall: float = Field(ge=0.0, le=1.0)
    subsets: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    hits: Dict[str, int] = {}
    config: Dict[str, Any] = {}

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_record(self) -> Dict[str, Any]:
        return {
            "overall": self.overall,
            "subsets": self.subsets,
            "counts": self.counts,
            "hits": self.hits,
            "config": self.config,
        }


class AblationRow(BaseModel):
    variant: str
    config_digest: str
    final_eval_acc: Optional[float] = None
    reward_first: Optional[float] = None
    reward_last: Optional[float] = None
    error: Optional[str] = None


class RolloutScore(BaseModel):
    """Pydantic model for rollout scores."""

    reward: float
    metrics: Dict[str, float] = {}

