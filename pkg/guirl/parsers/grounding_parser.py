import math
import re
from typing import Callable, List, Optional

from guirl.parsers.parser import Parser
from guirl.types import (
    ANSWER_CLOSE,
    ANSWER_OPEN,
    THINK_CLOSE,
    THINK_OPEN,
    BBox,
    FormatSpec,
    FormatVariant,
)

STRICT_FORMAT_PATTERN = re.compile(
    r"<think>.*?</think>\s*<answer>.*?</answer>", re.DOTALL
)
ANSWER_PATTERN = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
STRICT_BBOX_PATTERN = re.compile(r"\[(\d+),\s*(\d+),\s*(\d+),\s*(\d+)\]")
STRICT_POINT_PATTERN = re.compile(r"\[(\d+),\s*(\d+)\]")
NUMBER_PATTERN = re.compile(r"[-+]?\d+(?:\.\d+)?")

# partial credits of the soft format reward in sixths (0.5, 1/3, 1/3); they sum to 2.0
THINK_TAG_SIXTHS = 3
ANSWER_TAG_SIXTHS = 2
COORD_COUNT_SIXTHS = 2
SOFT_MAX_CREDIT = 2.0


def strict_format_reward(text: str) -> float:
    """1.0 iff `<think>...</think>` is followed (whitespace only) by `<answer>...</answer>`."""
    return 1.0 if STRICT_FORMAT_PATTERN.search(text) else 0.0


def extract_answer_block(text: str) -> Optional[str]:
    """Content of the first complete `<answer>...</answer>` block, if any."""
    match = ANSWER_PATTERN.search(text)
    return match.group(1) if match else None


def _finite_floats(tokens) -> List[float]:
    # a literal too long for a double reads as no answer at all
    values = [float(tok) for tok in tokens]
    if not all(math.isfinite(v) for v in values):
        return []
    return values


def extract_numbers_soft(text: str) -> List[float]:
    """
    All signed decimal literals in reading order.

    Scans the first answer block when one exists, otherwise the whole text.
    """
    block = extract_answer_block(text)
    scope = block if block is not None else text
    return _finite_floats(NUMBER_PATTERN.findall(scope))


def extract_numbers_strict(text: str, coord_count: int = 4) -> List[float]:
    """
    Integers of the first bracketed tuple of `coord_count` values inside the answer block.

    Returns an empty list when there is no answer block, no matching tuple, or
    a value beyond the float range.
    """
    block = extract_answer_block(text)
    if block is None:
        return []
    pattern = STRICT_BBOX_PATTERN if coord_count == 4 else STRICT_POINT_PATTERN
    match = pattern.search(block)
    if match is None:
        return []
    return _finite_floats(match.groups())


def extract_answer_strict(text: str) -> Optional[BBox]:
    """The bracketed 4-tuple of the first answer block as a box, or None."""
    numbers = extract_numbers_strict(text, coord_count=4)
    if not numbers:
        return None
    x1, y1, x2, y2 = numbers
    if not (x1 < x2 and y1 < y2):
        return None
    return BBox(x1=x1, y1=y1, x2=x2, y2=y2)


def soft_format_reward(
    text: str,
    spec: FormatSpec = FormatSpec(),
    normalizer: float = SOFT_MAX_CREDIT,
) -> float:
    """
    Partial credit for each tag plus a coordinate-count credit, scaled to [0, 1].

    The count credit needs a complete answer block holding exactly
    `spec.expected_coord_count` numbers. `normalizer=1.5` reproduces the legacy
    divisor; the result is then clamped to 1.0.
    """
    sixths = 0
    if THINK_OPEN in text:
        sixths += THINK_TAG_SIXTHS
    if THINK_CLOSE in text:
        sixths += THINK_TAG_SIXTHS
    if ANSWER_OPEN in text:
        sixths += ANSWER_TAG_SIXTHS
    if ANSWER_CLOSE in text:
        sixths += ANSWER_TAG_SIXTHS
    block = extract_answer_block(text)
    if block is not None and len(NUMBER_PATTERN.findall(block)) == spec.expected_coord_count:
        sixths += COORD_COUNT_SIXTHS
    # integer numerator keeps k/12 values exact (a full score is exactly 1.0)
    return min(1.0, sixths / (6 * normalizer))


class GroundingParser(Parser):
    """
    Parser for `<think>...</think><answer>...</answer>` grounding completions.

    `variant` selects the strict (exact pattern, bracketed integers) or the soft
    (partial credit, any numeric literal) reading of a completion.
    """

    def __init__(
        self,
        variant: FormatVariant = "soft",
        format_spec: FormatSpec = FormatSpec(),
        soft_normalizer: float = SOFT_MAX_CREDIT,
        **kwargs,
    ):
        super().__init__(**kwargs)
        if variant not in ("strict", "soft"):
            raise ValueError(f"Unknown format variant: {variant}")
        if soft_normalizer <= 0:
            raise ValueError(f"soft_normalizer must be positive, got {soft_normalizer}")
        self.variant = variant
        self.format_spec = format_spec
        self.soft_normalizer = soft_normalizer

    def parse(self, text: str) -> List[float]:
        """Numbers of the predicted answer under this parser's variant."""
        if self.variant == "strict":
            return extract_numbers_strict(text, self.format_spec.expected_coord_count)
        return extract_numbers_soft(text)

    def parse_answer(self, completion: str) -> Optional[str]:
        return extract_answer_block(completion)

    def get_format_reward_func(self) -> Callable:
        """
        Return the format reward function matching this parser's variant.
        """
        if self.variant == "strict":

            def strict_format_reward_func(completion: str, **kwargs) -> float:
                return strict_format_reward(completion)

            return strict_format_reward_func

        spec = self.format_spec
        normalizer = self.soft_normalizer

        def soft_format_reward_func(completion: str, **kwargs) -> float:
            return soft_format_reward(completion, spec, normalizer)

        return soft_format_reward_func
