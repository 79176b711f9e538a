import math
from typing import List, Tuple

from guirl.types import (
    ANSWER_CLOSE,
    ANSWER_OPEN,
    THINK_CLOSE,
    THINK_OPEN,
    BBox,
    PredictionMode,
    StructuredResponse,
    Task,
)

THINK_PLACEHOLDER = "I should locate the element described by the instruction."

STYLE_BRACKETS = 0
STYLE_TUPLE = 1
STYLE_LABELED = 2


def round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def cell_center(cell: int, grid: int, canvas: Tuple[int, int]) -> Tuple[float, float]:
    """Canvas-pixel center of a row-major grid cell."""
    if not 0 <= cell < grid * grid:
        raise ValueError(f"cell {cell} out of range for a {grid}x{grid} grid")
    width, height = canvas
    row, col = divmod(cell, grid)
    return (col + 0.5) * width / grid, (row + 0.5) * height / grid


def axis_flags(box: BBox, grid: int, canvas: Tuple[int, int]) -> Tuple[List[bool], List[bool]]:
    """
    Per row and per column: does the rendered cell center fall inside `box`?

    Cell (r, c) renders inside the box, edges included, exactly when both flags are set.
    """
    width, height = canvas
    rows = [box.y1 <= round_half_away((r + 0.5) * height / grid) <= box.y2 for r in range(grid)]
    cols = [box.x1 <= round_half_away((c + 0.5) * width / grid) <= box.x2 for c in range(grid)]
    return rows, cols


def cell_of_point(x: float, y: float, grid: int, canvas: Tuple[int, int]) -> int:
    """Row-major index of the grid cell containing (x, y), edges clamped inward."""
    width, height = canvas
    col = min(max(int(x * grid // width), 0), grid - 1)
    row = min(max(int(y * grid // height), 0), grid - 1)
    return row * grid + col


def answer_values(
    response: StructuredResponse,
    grid: int,
    canvas: Tuple[int, int],
    bbox_half_extent: float = 1.0,
) -> List[int]:
    """Integer coordinates the response answers with: [x, y] or [x1, y1, x2, y2]."""
    cx, cy = cell_center(response.cell, grid, canvas)
    if response.prediction_mode == "point":
        return [round_half_away(cx), round_half_away(cy)]
    width, height = canvas
    hx = bbox_half_extent * width / grid
    hy = bbox_half_extent * height / grid
    return [
        round_half_away(max(0.0, cx - hx)),
        round_half_away(max(0.0, cy - hy)),
        round_half_away(min(float(width), cx + hx)),
        round_half_away(min(float(height), cy + hy)),
    ]


def format_answer(values: List[int], style: int) -> str:
    if style == STYLE_BRACKETS:
        return "[" + ", ".join(str(v) for v in values) + "]"
    if style == STYLE_TUPLE:
        return "(" + ", ".join(str(v) for v in values) + ")"
    if len(values) == 2:
        names = ("x", "y")
    else:
        # digit-free labels keep soft extraction to the coordinates alone
        names = ("left", "top", "right", "bottom")
    return " ".join(f"{name}={v}" for name, v in zip(names, values))


def render(
    response: StructuredResponse,
    task: Task,
    grid: int,
    prediction_mode: PredictionMode | None = None,
    bbox_half_extent: float = 1.0,
) -> str:
    """
    Completion text of a structured response.

    Tags whose bit is set appear in canonical order around the placeholder
    reasoning and the rendered answer; the content itself is always written.
    """
    if prediction_mode is not None and prediction_mode != response.prediction_mode:
        response = response.model_copy(update={"prediction_mode": prediction_mode})
    think_open, think_close, answer_open, answer_close = response.tag_included
    values = answer_values(response, grid, task.canvas, bbox_half_extent)
    parts = [
        THINK_OPEN if think_open else "",
        THINK_PLACEHOLDER,
        THINK_CLOSE if think_close else "",
        " " if not (think_close and answer_open) else "",
        ANSWER_OPEN if answer_open else "",
        format_answer(values, response.style),
        ANSWER_CLOSE if answer_close else "",
    ]
    return "".join(parts)
