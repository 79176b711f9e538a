from .grounding_rubric import GroundingRubric
from .rubric import Rubric

__all__ = ["Rubric", "GroundingRubric"]
