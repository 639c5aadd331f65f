"""Abstract interfaces for the three model roles.

The pipeline orchestrates exactly these three surfaces; scripted, remote,
and any future in-process backends all implement them.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence

from tarot.backends.types import (
    Criterion,
    MaskCandidate,
    ParsedExpression,
    ReasoningPromptOptions,
)
from tarot.fmap import FeatureMap
from tarot.geometry import BBox, BinaryMask, PixelPoint
from tarot.images import ImageRef


class Reasoner(ABC):
    """Multimodal reasoner: parses queries, grounds boxes, scores masks."""

    @abstractmethod
    def parse_expression(self, image: ImageRef, query: str,
                         options: ReasoningPromptOptions) -> ParsedExpression:
        """Break a referring expression into target/refer structure."""

    @abstractmethod
    def augment_target(self, target: str) -> List[str]:
        """Return text prompts for the target; element 0 is the target itself."""

    @abstractmethod
    def criterion_map(self, target: str, refer: str, refer_box: BBox) -> Criterion:
        """Describe how the target relates to a located refer object."""

    @abstractmethod
    def rephrase(self, query: str, target: str, refer: str,
                 criterion: Criterion) -> tuple:
        """Return (short, long) rephrasings of the query."""

    @abstractmethod
    def ground_bbox(self, image: ImageRef, expression: str) -> BBox:
        """Localize the expression as one box inside the image."""

    @abstractmethod
    def score_mask(self, image: ImageRef, mask: BinaryMask, query: str,
                   options: ReasoningPromptOptions) -> float:
        """Judge mask vs query; higher is better, range [0, 1]."""

    @abstractmethod
    def prefer_mask(self, image: ImageRef, masks: Sequence[BinaryMask], query: str,
                    options: ReasoningPromptOptions) -> int:
        """Pick the best of several masks; returns an index into masks."""

    @abstractmethod
    def affiliation(self, image: ImageRef, candidate: BinaryMask,
                    core: BinaryMask) -> bool:
        """Does the candidate region belong to the same object as the core?"""


class ConceptSegmenter(ABC):
    """Concept-prompted segmenter: text, box, or point prompts to masks."""

    @abstractmethod
    def segment_text(self, image: ImageRef, phrase: str) -> List[MaskCandidate]:
        """All instances matching a noun phrase; may be empty."""

    @abstractmethod
    def segment_box(self, image: ImageRef, box: BBox) -> MaskCandidate:
        """Best mask for a box prompt."""

    @abstractmethod
    def segment_points(self, image: ImageRef, positives: Sequence[PixelPoint],
                       negatives: Sequence[PixelPoint] = (),
                       prior: Optional[BinaryMask] = None) -> MaskCandidate:
        """Best mask for point prompts; needs at least one positive."""


class FeatureExtractor(ABC):
    """Dense self-supervised features for one image."""

    @abstractmethod
    def extract(self, image: ImageRef) -> FeatureMap:
        """Patch-level feature map whose image_w/image_h match the input."""


@dataclass
class Backends:
    reasoner: Reasoner
    segmenter: ConceptSegmenter
    features: FeatureExtractor
