import math
from typing import List, Optional, Sequence

from guirl.types import AccuracyRewardKind, BBox, Point, RewardBreakdown


def _check_box(box: BBox) -> None:
    # BBox validates on construction; model_construct() bypasses that
    if not (box.x1 < box.x2 and box.y1 < box.y2):
        raise ValueError(f"invalid box {box.as_list()}: requires x1 < x2 and y1 < y2")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint or edge-touching boxes."""
    _check_box(a)
    _check_box(b)
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def box_from_numbers(numbers: Sequence[float]) -> Optional[BBox]:
    """A valid box from exactly four finite numbers, else None."""
    if len(numbers) != 4:
        return None
    x1, y1, x2, y2 = numbers
    if not all(math.isfinite(v) for v in numbers) or not (x1 < x2 and y1 < y2):
        return None
    return BBox(x1=x1, y1=y1, x2=x2, y2=y2)


def point_from_numbers(numbers: Sequence[float]) -> Optional[Point]:
    if len(numbers) != 2 or not all(math.isfinite(v) for v in numbers):
        return None
    return Point(x=numbers[0], y=numbers[1])


def point_in_box(point: Point, box: BBox) -> bool:
    """Boundary-inclusive containment test."""
    return box.x1 <= point.x <= box.x2 and box.y1 <= point.y <= box.y2


def accuracy_reward(kind: AccuracyRewardKind, parsed: List[float], gt: BBox) -> float:
    """
    Accuracy score of extracted numbers against the ground-truth box.

    Malformed predictions (wrong arity, inverted box) score 0.
    """
    _check_box(gt)
    if kind.name in ("iou", "iou_threshold"):
        pred = box_from_numbers(parsed)
        if pred is None:
            return 0.0
        value = iou(pred, gt)
        if kind.name == "iou":
            return value
        return 1.0 if value > kind.threshold else 0.0

    point = point_from_numbers(parsed)
    if point is None:
        return 0.0
    if kind.name == "in_bbox":
        return 1.0 if point_in_box(point, gt) else 0.0
    center = gt.center
    distance = math.hypot(point.x - center.x, point.y - center.y)
    return 1.0 if distance <= kind.k else 0.0


def total_reward(format_score: float, accuracy_score: float) -> float:
    """r = r^f + r^a, each component in [0, 1]."""
    for name, value in (("format_score", format_score), ("accuracy_score", accuracy_score)):
        if not (math.isfinite(value) and 0.0 <= value <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return format_score + accuracy_score


def reward_breakdown(format_score: float, accuracy_score: float) -> RewardBreakdown:
    return RewardBreakdown(
        format_score=format_score,
        accuracy_score=accuracy_score,
        total=total_reward(format_score, accuracy_score),
    )
