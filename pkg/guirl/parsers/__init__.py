from .grounding_parser import GroundingParser
from .parser import Parser

__all__ = ["Parser", "GroundingParser"]
