import inspect
import logging
from typing import Any, List

from guirl.parsers.parser import Parser
from guirl.types import RewardFunc, RolloutScore


class Rubric:
    """
    Rubric class for reward functions.

    Each reward function takes:
    - completion: str
    - answer: Any (metadata for scoring, e.g. the ground-truth box)
    - parser (optional): the rubric's Parser
    - **kwargs: additional kwargs

    Returns:
    - float
    """

    def __init__(
        self,
        funcs: List[RewardFunc] | None = None,
        weights: List[float] | None = None,
        parser: Parser | None = None,
        **kwargs,
    ):
        self.logger = logging.getLogger(f"guirl.rubrics.{self.__class__.__name__}")
        self.parser = parser if parser is not None else Parser()
        for key, value in kwargs.items():
            setattr(self, key, value)
        self.reward_funcs: List[RewardFunc] = list(funcs or [])
        self.reward_weights: List[float] = list(weights or [])
        if not self.reward_weights:
            self.reward_weights = [1.0] * len(self.reward_funcs)
        if len(self.reward_weights) != len(self.reward_funcs):
            raise ValueError("funcs and weights must have the same length")

    def get_reward_func_names(self) -> List[str]:
        return [func.__name__ for func in self.reward_funcs]

    def get_reward_funcs(self) -> List[RewardFunc]:
        return self.reward_funcs

    def get_reward_weights(self) -> List[float]:
        return self.reward_weights

    def add_reward_func(self, func: RewardFunc, weight: float = 1.0):
        self.reward_funcs.append(func)
        self.reward_weights.append(weight)

    def call_reward_func(
        self,
        func: RewardFunc,
        completion: str,
        answer: Any,
        **kwargs,
    ) -> float:
        """
        Invoke `func` with only the arguments it declares.

        Example:
        ```
        def func(completion, answer, **kwargs):
            ...
        ```
        """
        sig = inspect.signature(func)
        merged = dict(parser=self.parser, completion=completion, answer=answer, **kwargs)
        if not any(p.kind == p.VAR_KEYWORD for p in sig.parameters.values()):
            merged = {k: v for k, v in merged.items() if k in sig.parameters}
        try:
            return float(func(**merged))
        except Exception as e:
            self.logger.error(f"Error calling reward function {func.__name__}: {e}")
            return 0.0

    def score_rollout(self, completion: str, answer: Any, **kwargs) -> RolloutScore:
        """
        Evaluate all reward functions for a single completion.
        """
        scores = [
            self.call_reward_func(func, completion, answer, **kwargs)
            for func in self.get_reward_funcs()
        ]
        return RolloutScore(
            metrics={
                func.__name__: score
                for func, score in zip(self.get_reward_funcs(), scores)
            },
            reward=sum(
                score * weight
                for score, weight in zip(scores, self.get_reward_weights())
            ),
        )

