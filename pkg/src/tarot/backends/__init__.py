from tarot.backends.base import (
    Backends,
    ConceptSegmenter,
    FeatureExtractor,
    Reasoner,
)
from tarot.backends.types import (
    Criterion,
    MaskCandidate,
    ParsedExpression,
    ReasoningPromptOptions,
)

__all__ = [
    "Backends",
    "ConceptSegmenter",
    "Criterion",
    "FeatureExtractor",
    "MaskCandidate",
    "ParsedExpression",
    "Reasoner",
    "ReasoningPromptOptions",
]
