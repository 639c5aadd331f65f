"""End-to-end segmentation entry point: interpret, then refine."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from tarot import __version__
from tarot.backends.base import Backends
from tarot.config import PipelineConfig
from tarot.geometry import BinaryMask
from tarot.images import ImageRef
from tarot.interpret import InterpretResult, run_interpret
from tarot.refine import run_refine
from tarot.trace import TraceRecorder


@dataclass
class PipelineOutput:
    mask: BinaryMask
    interp: InterpretResult


def emit_header(recorder: TraceRecorder, cfg: PipelineConfig, image: ImageRef,
                query: str) -> None:
    recorder.emit("meta", "header", version=__version__,
                  config=cfg.as_dict(), config_digest=cfg.digest(),
                  image=image.digest, query=query)


def segment_image(image: ImageRef, query: str, backends: Backends,
                  cfg: PipelineConfig,
                  recorder: Optional[TraceRecorder] = None) -> PipelineOutput:
    """Run the full two-phase procedure for one image and query."""
    own_recorder = recorder is None
    if own_recorder:
        recorder = TraceRecorder()
    try:
        emit_header(recorder, cfg, image, query)
        interp = run_interpret(image, query, backends, cfg, recorder)
        mask = run_refine(image, query, interp, backends, cfg, recorder)
        return PipelineOutput(mask=mask, interp=interp)
    finally:
        if own_recorder:
            recorder.close()
