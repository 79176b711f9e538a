"""Pytest configuration and fixtures for guirl tests."""

import numpy as np
import pytest

from guirl import GroundingParser, GroundingRubric, Parser, Rubric
from guirl.envs.synth_env import SceneConfig, describe, generate_tasks, save_dataset
from guirl.policy.network import PolicyDims, init_params
from guirl.trainers.train_config import TrainConfig
from guirl.types import BBox, Element, Scene, Task

SMALL_SCENES = SceneConfig(k_max=3, canvas_min=(320, 240), canvas_max=(960, 720))


def make_single_task(
    box=(100, 80, 220, 160), canvas=(320, 240), task_id="task-fixed"
) -> Task:
    """One red Submit button on an otherwise empty canvas."""
    element = Element(bbox=BBox.from_list(list(box)), kind="button", color="red", label="Submit")
    scene = Scene(canvas_width=canvas[0], canvas_height=canvas[1], elements=[element])
    return Task(
        id=task_id,
        scene=scene,
        instruction=describe(element),
        target_index=0,
        gt=element.bbox,
        subset={"size_bucket": "small", "kind": "button"},
    )


def small_config(**overrides) -> TrainConfig:
    """A policy and schedule small enough for a unit test."""
    values = dict(
        seed=3,
        group_size=4,
        batch_size=2,
        total_steps=6,
        hidden=8,
        grid=4,
        k_max=3,
        base_lr=1e-2,
        prediction_mode="point",
        eval_steps=3,
        logging_steps=0,
        max_workers=1,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def basic_parser():
    """Return a basic Parser instance."""
    return Parser()


@pytest.fixture
def soft_parser():
    """Return a soft GroundingParser expecting point answers."""
    return GroundingParser(variant="soft")


@pytest.fixture
def strict_parser():
    """Return a strict GroundingParser expecting bbox answers."""
    from guirl.types import FormatSpec

    return GroundingParser(variant="strict", format_spec=FormatSpec(expected_coord_count=4))


@pytest.fixture
def basic_rubric():
    """Return a Rubric without reward functions."""
    return Rubric()


@pytest.fixture
def grounding_rubric():
    """Return the final-recipe rubric: soft format, In-Bbox accuracy."""
    return GroundingRubric()


@pytest.fixture
def single_task():
    return make_single_task()


@pytest.fixture(scope="session")
def small_tasks():
    """Twelve seeded tasks with at most three elements each."""
    return generate_tasks(11, 12, SMALL_SCENES)


@pytest.fixture(scope="session")
def eval_tasks():
    return generate_tasks(12, 8, SMALL_SCENES)


@pytest.fixture
def small_dataset(tmp_path, small_tasks):
    path = tmp_path / "train.jsonl"
    save_dataset(small_tasks, path)
    return path


@pytest.fixture
def tiny_dims():
    return PolicyDims(feature_dim=5, hidden=8, grid=4, styles=3)


@pytest.fixture
def tiny_params(tiny_dims):
    """Random tiny network with heads large enough to give non-uniform decisions."""
    return init_params(tiny_dims, np.random.default_rng(0), head_scale=0.5)


@pytest.fixture
def task_factory():
    return make_single_task


@pytest.fixture
def config_factory():
    return small_config
