from guirl.parsers.grounding_parser import SOFT_MAX_CREDIT, GroundingParser
from guirl.rubrics.rubric import Rubric
from guirl.rubrics.utils.box_utils import accuracy_reward, reward_breakdown
from guirl.types import (
    AccuracyRewardKind,
    BBox,
    FormatSpec,
    FormatVariant,
    PredictionMode,
    RewardBreakdown,
)


class GroundingRubric(Rubric):
    """
    Format reward plus accuracy reward for grounding completions.

    The format variant picks both the format reward (strict pattern or soft
    partial credit) and the number extraction the accuracy reward sees.
    """

    def __init__(
        self,
        format_variant: FormatVariant = "soft",
        accuracy: AccuracyRewardKind = AccuracyRewardKind(name="in_bbox"),
        prediction_mode: PredictionMode | None = None,
        soft_normalizer: float = SOFT_MAX_CREDIT,
    ):
        mode = prediction_mode or accuracy.prediction_mode
        parser = GroundingParser(
            variant=format_variant,
            format_spec=FormatSpec.for_mode(mode),
            soft_normalizer=soft_normalizer,
        )
        super().__init__(parser=parser)
        self.accuracy = accuracy
        self.prediction_mode = mode
        self.add_reward_func(self.parser.get_format_reward_func())
        self.add_reward_func(self.accuracy_reward_func)

    def accuracy_reward_func(self, completion: str, answer: BBox, **kwargs) -> float:
        """Accuracy of the extracted answer against the ground-truth box."""
        return accuracy_reward(self.accuracy, self.parser.parse(completion), answer)

    def score(self, completion: str, gt: BBox) -> RewardBreakdown:
        scored = self.score_rollout(completion, gt)
        format_name, accuracy_name = self.get_reward_func_names()[:2]
        return reward_breakdown(scored.metrics[format_name], scored.metrics[accuracy_name])
