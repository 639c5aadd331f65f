"""Typed records exchanged with the model backends."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from tarot.errors import InvariantViolation
from tarot.geometry import BBox, BinaryMask, mask_bbox

_OPTION_NAMES = (
    "explicit_implicit",
    "single_multi",
    "refer_analysis",
    "adjectives",
    "object_reasoning",
    "confusion_awareness",
)


@dataclass(frozen=True)
class ReasoningPromptOptions:
    """Six independent switches steering the reasoner's parsing prompt.

    Fixed order: explicit/implicit identification, single/multi-object
    determination, refer-object analysis, adjective identification,
    object-level reasoning, segmentor confusion awareness.
    """

    explicit_implicit: bool = True
    single_multi: bool = True
    refer_analysis: bool = True
    adjectives: bool = True
    object_reasoning: bool = True
    confusion_awareness: bool = True

    def bits(self) -> str:
        return "".join("1" if getattr(self, n) else "0" for n in _OPTION_NAMES)

    @classmethod
    def from_bits(cls, bits: str) -> "ReasoningPromptOptions":
        if len(bits) != 6 or any(c not in "01" for c in bits):
            raise InvariantViolation(f"option vector must be six 0/1 chars, got {bits!r}")
        return cls(**{n: bits[i] == "1" for i, n in enumerate(_OPTION_NAMES)})

    @classmethod
    def all_on(cls) -> "ReasoningPromptOptions":
        return cls()

    @classmethod
    def all_off(cls) -> "ReasoningPromptOptions":
        return cls(**{n: False for n in _OPTION_NAMES})


@dataclass(frozen=True)
class ParsedExpression:
    target_name: str
    refer_names: Tuple[str, ...] = ()
    is_explicit: bool = True
    is_multi_object: bool = False
    adjectives: Tuple[str, ...] = ()
    confusion_notes: str = ""

    def __post_init__(self):
        if not self.target_name.strip():
            raise InvariantViolation("parsed expression needs a non-empty target name")
        object.__setattr__(self, "refer_names", tuple(self.refer_names))
        object.__setattr__(self, "adjectives", tuple(self.adjectives))
        if self.target_name in self.refer_names:
            raise InvariantViolation(
                f"target {self.target_name!r} cannot also be a refer object"
            )


@dataclass(frozen=True)
class Criterion:
    """How the target relates to one refer object, in reasoner words."""

    relation_text: str
    refer_name: str
    refer_box: Optional[BBox] = None


@dataclass(frozen=True)
class MaskCandidate:
    mask: BinaryMask
    box: BBox
    score: float = 1.0

    def __post_init__(self):
        tight = mask_bbox(self.mask)
        if tight is None:
            raise InvariantViolation("mask candidate must have a non-empty mask")
        if tight != self.box:
            raise InvariantViolation(
                f"candidate box {self.box} is not the tight box {tight}"
            )
        if not (0.0 <= self.score <= 1.0):
            raise InvariantViolation(f"candidate score {self.score} outside [0, 1]")

    @classmethod
    def from_mask(cls, mask: BinaryMask, score: float = 1.0) -> "MaskCandidate":
        box = mask_bbox(mask)
        if box is None:
            raise InvariantViolation("mask candidate must have a non-empty mask")
        return cls(mask=mask, box=box, score=score)


@dataclass(frozen=True)
class PromptBundle:
    """Everything the interpret phase derived from one query."""

    texts: Tuple[str, ...]
    boxes: Tuple[BBox, ...]
    box_sources: Tuple[str, ...] = ()
    criterion: Optional[Criterion] = None
    short_text: str = ""
    long_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "texts", tuple(self.texts))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "box_sources", tuple(self.box_sources))
        if not self.texts:
            raise InvariantViolation("prompt bundle needs at least one text prompt")
