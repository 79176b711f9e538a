import logging
from typing import Any, Callable, Optional


class Parser:
    """
    Parser class for parsing model completions.

    Default behavior:
    - `parse` returns text as-is
    - `parse_answer` returns the parsed text
    - `get_format_reward_func` rewards every completion with 1.0
    """

    def __init__(self, extract_fn: Callable[[str], Any] = lambda x: x, **kwargs):
        self.logger = logging.getLogger(f"guirl.parsers.{self.__class__.__name__}")
        self.extract_fn = extract_fn
        for key, value in kwargs.items():
            setattr(self, key, value)

    def parse(self, text: str) -> Any:
        return self.extract_fn(text)

    def parse_answer(self, completion: str) -> Optional[str]:
        return self.parse(completion)

    def get_format_reward_func(self) -> Callable:
        """
        Reward function that checks if the final answer is formatted correctly.
        """

        def format_reward_func(completion: str, **kwargs) -> float:
            return 1.0

        return format_reward_func
