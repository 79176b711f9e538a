"""
Point-in-box accuracy of the policy or of external completion files.

A prediction hits when its point lies inside the ground-truth box, boundary
included. The test is the In-Bbox accuracy reward itself, so training and
evaluation agree on every edge case.
"""

import json
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from guirl.envs.synth_env import EncoderConfig, encode, load_dataset
from guirl.errors import DataError
from guirl.parsers.grounding_parser import extract_numbers_soft
from guirl.policy.network import PolicyParams, forward
from guirl.policy.render import render
from guirl.policy.sampling import greedy
from guirl.rubrics.utils.box_utils import accuracy_reward, box_from_numbers
from guirl.types import (
    AccuracyRewardKind,
    Annotation,
    BBox,
    EvalReport,
    Point,
    PredictionMode,
    Task,
    subset_key,
)
from guirl.utils.data_utils import config_digest, provenance_line, read_jsonl

logger = logging.getLogger(__name__)

IN_BBOX = AccuracyRewardKind(name="in_bbox")


def point_from_prediction(numbers: Sequence[float], mode: PredictionMode) -> Optional[Point]:
    """The predicted point, or None when the numbers do not form a prediction."""
    if mode == "point":
        if len(numbers) != 2:
            return None
        try:
            return Point(x=numbers[0], y=numbers[1])
        except ValidationError:
            return None
    box = box_from_numbers(numbers)
    return box.center if box is not None else None


def is_hit(point: Optional[Point], gt: BBox) -> bool:
    if point is None:
        return False
    return accuracy_reward(IN_BBOX, [point.x, point.y], gt) == 1.0


def completion_hit(completion: str, gt: BBox, mode: PredictionMode) -> bool:
    return is_hit(point_from_prediction(extract_numbers_soft(completion), mode), gt)


def build_report(verdicts: Iterable[Tuple[str, bool]], config: Dict[str, Any]) -> EvalReport:
    counts: Dict[str, int] = OrderedDict()
    hits: Dict[str, int] = OrderedDict()
    for key, hit in verdicts:
        counts[key] = counts.get(key, 0) + 1
        hits[key] = hits.get(key, 0) + int(hit)
    keys = sorted(counts)
    total = sum(counts.values())
    return EvalReport(
        overall=sum(hits.values()) / total if total else 0.0,
        subsets={k: hits[k] / counts[k] for k in keys},
        counts={k: counts[k] for k in keys},
        hits={k: hits[k] for k in keys},
        config=config,
    )


def policy_encoder(params: PolicyParams, k_max: int, include_resolution: bool) -> EncoderConfig:
    """Encoder layout matching the policy's input size and grid."""
    dims = params.dims
    try:
        return EncoderConfig.for_feature_dim(
            dims.feature_dim, k_max, dims.grid, include_resolution=include_resolution
        )
    except ValueError as e:
        raise DataError(f"policy expects {dims.feature_dim} features: {e}") from e


def predict_completion(
    params: PolicyParams,
    task: Task,
    encoder: EncoderConfig,
    mode: PredictionMode,
    bbox_half_extent: float = 1.0,
) -> str:
    """Greedy completion of the policy for one task."""
    features = encode(task, encoder)
    try:
        dist = forward(params, features)
    except ValueError as e:
        raise DataError(f"task {task.id}: {e}") from e
    response = greedy(dist, mode)
    return render(response, task, dist.grid_size, mode, bbox_half_extent)


def evaluate_policy(
    params: PolicyParams,
    tasks: Sequence[Task],
    include_resolution: bool = True,
    mode: PredictionMode = "point",
    k_max: int = 5,
    bbox_half_extent: float = 1.0,
) -> EvalReport:
    """Greedy-decode every task and score the rendered completion."""
    if not tasks:
        raise ValueError("evaluate_policy needs at least one task")
    encoder = policy_encoder(params, k_max, include_resolution)
    verdicts = []
    for task in tasks:
        completion = predict_completion(params, task, encoder, mode, bbox_half_extent)
        verdicts.append((subset_key(task.subset), completion_hit(completion, task.gt, mode)))
    config = {
        "decoding": "greedy",
        "mode": mode,
        "resolution": "on" if include_resolution else "off",
        "layout": encoder.layout_version,
        "params": params.checksum()[:12],
    }
    return build_report(verdicts, config)


def _annotation_from_record(record: Dict[str, Any], where: str) -> Annotation:
    try:
        return Annotation(
            id=str(record["id"]),
            gt=BBox.from_list(record["gt_bbox"]),
            subset=record.get("subset", {}),
            canvas=tuple(record["canvas"]),
            instruction=record.get("instruction", ""),
        )
    except KeyError as e:
        raise DataError(f"{where}: missing field {e}") from e
    except (ValidationError, ValueError, TypeError) as e:
        raise DataError(f"{where}: invalid annotation: {e}") from e


def load_annotations(path: str | Path) -> List[Annotation]:
    """Annotations from a dataset file or from bare `{id, gt_bbox, canvas, subset}` records."""
    records = list(read_jsonl(path))
    if records and all("elements" in r for _, r in records):
        return [Annotation.from_task(t) for t in load_dataset(path)]
    annotations = []
    seen = set()
    for lineno, record in records:
        ann = _annotation_from_record(record, f"{path}:{lineno}")
        if ann.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate annotation id {ann.id}")
        seen.add(ann.id)
        annotations.append(ann)
    return annotations


def load_predictions(path: str | Path, known_ids: Iterable[str]) -> Dict[str, str]:
    known = set(known_ids)
    completions: Dict[str, str] = {}
    first_seen: Dict[str, int] = {}
    for lineno, record in read_jsonl(path):
        where = f"{path}:{lineno}"
        if "id" not in record or "completion" not in record:
            raise DataError(f"{where}: prediction needs 'id' and 'completion'")
        pid, completion = str(record["id"]), record["completion"]
        if not isinstance(completion, str):
            raise DataError(f"{where}: completion must be a string")
        if pid in first_seen:
            raise DataError(
                f"{where}: duplicate prediction id {pid} (first seen on line {first_seen[pid]})"
            )
        if pid not in known:
            raise DataError(f"{where}: prediction id {pid} not found in annotations")
        first_seen[pid] = lineno
        completions[pid] = completion
    return completions


def score_prediction_file(
    predictions_path: str | Path,
    annotations_path: str | Path,
    mode: PredictionMode = "point",
) -> EvalReport:
    """Score raw completions of any model; annotations without a prediction are misses."""
    annotations = load_annotations(annotations_path)
    completions = load_predictions(predictions_path, (a.id for a in annotations))
    verdicts = []
    for ann in annotations:
        completion = completions.get(ann.id)
        hit = completion is not None and completion_hit(completion, ann.gt, mode)
        verdicts.append((ann.subset_key, hit))
    missing = len(annotations) - len(completions)
    if missing:
        logger.info(f"{missing} annotations have no prediction and count as misses")
    config = {"source": "predictions", "mode": mode}
    return build_report(verdicts, config)


def write_report(report: EvalReport, path: str | Path) -> None:
    record = report.to_record()
    record["provenance"] = provenance_line("eval-report", config_digest(report.config))[2:]
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
