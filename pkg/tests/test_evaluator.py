"""Tests for policy evaluation and prediction-file scoring."""

import json

import numpy as np
import pytest

from guirl import DataError
from guirl.envs.synth_env import EncoderConfig, SceneConfig, generate_tasks, save_dataset
from guirl.evaluator import (
    build_report,
    evaluate_policy,
    is_hit,
    point_from_prediction,
    score_prediction_file,
    write_report,
)
from guirl.policy.network import PolicyDims, PolicyParams, init_params
from guirl.policy.render import cell_of_point
from guirl.rubrics.utils.box_utils import accuracy_reward
from guirl.types import AccuracyRewardKind, BBox, Point, subset_key


def write_predictions(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def center_completion(box: BBox) -> str:
    c = box.center
    return f"<think>found it</think><answer>[{c.x}, {c.y}]</answer>"


class TestPointFromPrediction:
    """Mapping extracted numbers to a point."""

    def test_bbox_center(self):
        """Test that a box prediction is scored at its center."""
        assert point_from_prediction([10, 20, 30, 40], "bbox") == Point(x=20, y=30)

    def test_point(self):
        """Test a plain point."""
        assert point_from_prediction([7, 9], "point") == Point(x=7, y=9)

    @pytest.mark.parametrize("mode", ["point", "bbox"])
    def test_wrong_arity(self, mode):
        """Test that three numbers are no prediction."""
        assert point_from_prediction([1, 2, 3], mode) is None

    def test_inverted_box(self):
        """Test that an inverted box is no prediction."""
        assert point_from_prediction([30, 20, 10, 40], "bbox") is None

    @pytest.mark.parametrize("x,y", [(0, 0), (10, 10), (5, 10), (10.5, 5), (-1, 5)])
    def test_hit_rule_matches_reward(self, x, y):
        """Test that the hit rule is the In-Bbox reward."""
        gt = BBox(x1=0, y1=0, x2=10, y2=10)
        reward = accuracy_reward(AccuracyRewardKind.parse("in-bbox"), [x, y], gt)
        assert is_hit(Point(x=x, y=y), gt) == (reward == 1.0)


class TestReport:
    """Report assembly."""

    def test_counts(self):
        """Test subset accuracies and their weighted mean."""
        report = build_report(
            [("small/button", True), ("small/button", False), ("large/icon", True)], {}
        )
        assert report.subsets == {"large/icon": 1.0, "small/button": 0.5}
        assert report.counts == {"large/icon": 1, "small/button": 2}
        assert report.overall == pytest.approx(2 / 3)
        assert report.total == 3

    def test_permutation_invariant(self):
        """Test that verdict order does not matter."""
        verdicts = [("a/x", True), ("b/y", False), ("a/x", False), ("b/y", True), ("a/x", True)]
        assert build_report(verdicts, {}) == build_report(list(reversed(verdicts)), {})

    def test_write_report(self, tmp_path):
        """Test the machine-readable report."""
        path = tmp_path / "report.json"
        write_report(build_report([("a/x", True)], {"mode": "point"}), path)
        record = json.loads(path.read_text())
        assert record["overall"] == 1.0
        assert record["counts"] == {"a/x": 1}
        assert record["provenance"].startswith("guirl ")


class TestScorePredictionFile:
    """Scoring completions of external models."""

    @pytest.fixture
    def annotated(self, tmp_path):
        tasks = generate_tasks(21, 200, SceneConfig(k_max=3))
        path = tmp_path / "annotations.jsonl"
        save_dataset(tasks, path)
        return tasks, path

    def test_centers_hit(self, tmp_path, annotated):
        """Test that predicting every gt center scores 1."""
        tasks, annotations = annotated
        predictions = tmp_path / "pred.jsonl"
        write_predictions(predictions, [{"id": t.id, "completion": center_completion(t.gt)} for t in tasks])
        assert score_prediction_file(predictions, annotations).overall == 1.0

    def test_off_canvas_misses(self, tmp_path, annotated):
        """Test that predictions at (-1, -1) score 0."""
        tasks, annotations = annotated
        predictions = tmp_path / "pred.jsonl"
        write_predictions(
            predictions, [{"id": t.id, "completion": "<answer>[-1, -1]</answer>"} for t in tasks]
        )
        assert score_prediction_file(predictions, annotations).overall == 0.0

    def test_half_hits(self, tmp_path, annotated):
        """Test a fixture built to hit exactly every other item, with a hand recount per subset."""
        tasks, annotations = annotated
        rows, expected = [], {}
        for i, task in enumerate(tasks):
            hit = i % 2 == 0
            completion = center_completion(task.gt) if hit else "<answer>[-1, -1]</answer>"
            rows.append({"id": task.id, "completion": completion})
            key = subset_key(task.subset)
            hits, count = expected.get(key, (0, 0))
            expected[key] = (hits + hit, count + 1)
        predictions = tmp_path / "pred.jsonl"
        write_predictions(predictions, rows)
        report = score_prediction_file(predictions, annotations)
        assert report.overall == 0.5
        assert report.subsets == {k: h / c for k, (h, c) in expected.items()}
        weighted = sum(report.subsets[k] * report.counts[k] for k in report.counts) / report.total
        assert weighted == pytest.approx(report.overall, abs=1e-12)

    def test_missing_predictions_are_misses(self, tmp_path, annotated):
        """Test that annotations without a prediction count as misses."""
        tasks, annotations = annotated
        predictions = tmp_path / "pred.jsonl"
        write_predictions(predictions, [{"id": tasks[0].id, "completion": center_completion(tasks[0].gt)}])
        report = score_prediction_file(predictions, annotations)
        assert report.total == 200
        assert report.overall == pytest.approx(1 / 200)

    def test_duplicate_ids(self, tmp_path, annotated):
        """Test that a repeated id names both lines."""
        tasks, annotations = annotated
        predictions = tmp_path / "pred.jsonl"
        row = {"id": tasks[0].id, "completion": "[1, 2]"}
        write_predictions(predictions, [row, row])
        with pytest.raises(DataError, match=r"pred.jsonl:2: duplicate .* line 1"):
            score_prediction_file(predictions, annotations)

    def test_unknown_id(self, tmp_path, annotated):
        """Test that ids missing from the annotations are rejected."""
        _, annotations = annotated
        predictions = tmp_path / "pred.jsonl"
        write_predictions(predictions, [{"id": "nope", "completion": "[1, 2]"}])
        with pytest.raises(DataError, match="not found"):
            score_prediction_file(predictions, annotations)

    def test_bare_annotations(self, tmp_path):
        """Test annotation files without scenes."""
        annotations = tmp_path / "ann.jsonl"
        write_predictions(
            annotations,
            [{"id": "a", "gt_bbox": [0, 0, 10, 10], "canvas": [100, 100], "subset": {"kind": "icon"}}],
        )
        predictions = tmp_path / "pred.jsonl"
        write_predictions(predictions, [{"id": "a", "completion": "(5, 5)"}])
        report = score_prediction_file(predictions, annotations)
        assert report.subsets == {"all/icon": 1.0}


class TestEvaluatePolicy:
    """Greedy evaluation of the policy network."""

    def oracle_params(self, task, grid: int, feature_dim: int) -> PolicyParams:
        """Zero network whose row and column biases force the cell under the gt center."""
        params = PolicyParams.zeros(PolicyDims(feature_dim=feature_dim, hidden=4, grid=grid))
        c = task.gt.center
        row, col = divmod(cell_of_point(c.x, c.y, grid, task.canvas), grid)
        params.b_grid[row] = 50.0
        params.b_grid[grid + col] = 50.0
        return params

    def test_oracle_hits(self, task_factory):
        """Test that the cell containing the gt center is a hit when its center lies in the box."""
        task = task_factory(box=(100, 60, 220, 180))
        params = self.oracle_params(task, 16, EncoderConfig(k_max=1).feature_dim)
        report = evaluate_policy(params, [task], k_max=1)
        assert report.overall == 1.0

    def test_untagged_completion_counts(self, task_factory):
        """Test that a policy dropping every tag is scored, not rejected."""
        task = task_factory(box=(100, 60, 220, 180))
        params = self.oracle_params(task, 16, EncoderConfig(k_max=1).feature_dim)
        params.b_tag[:] = -50.0
        report = evaluate_policy(params, [task], k_max=1)
        assert report.total == 1

    def test_deterministic(self, small_tasks):
        """Test that two evaluations agree."""
        dims = PolicyDims(feature_dim=EncoderConfig(k_max=3, grid=4).feature_dim, hidden=8, grid=4)
        params = init_params(dims, np.random.default_rng(0), head_scale=1.0)
        a = evaluate_policy(params, small_tasks, k_max=3)
        b = evaluate_policy(params, small_tasks, k_max=3)
        assert a == b
        assert a.total == len(small_tasks)

    def test_resolution_toggle_keeps_counts(self, small_tasks):
        """Test that the resolution toggle changes features, not the item set."""
        dims = PolicyDims(feature_dim=EncoderConfig(k_max=3, grid=4).feature_dim, hidden=8, grid=4)
        params = init_params(dims, np.random.default_rng(1), head_scale=1.0)
        on = evaluate_policy(params, small_tasks, include_resolution=True, k_max=3)
        off = evaluate_policy(params, small_tasks, include_resolution=False, k_max=3)
        assert on.counts == off.counts
        assert on.config["resolution"] == "on" and off.config["resolution"] == "off"

    def test_older_layout_is_recognized(self, small_tasks):
        """Test that a policy trained without occupancy features still evaluates."""
        feature_dim = EncoderConfig(k_max=3, grid=4, layout_version=1).feature_dim
        params = init_params(PolicyDims(feature_dim=feature_dim, hidden=8, grid=4), np.random.default_rng(2))
        report = evaluate_policy(params, small_tasks, k_max=3)
        assert report.config["layout"] == 1
        assert report.total == len(small_tasks)

    def test_dimension_mismatch(self, small_tasks):
        """Test that a policy built for another encoder is rejected."""
        params = PolicyParams.zeros(PolicyDims(feature_dim=10, hidden=4, grid=4))
        with pytest.raises(DataError):
            evaluate_policy(params, small_tasks, k_max=3)
