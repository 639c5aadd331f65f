"""Benchmark harness: run the pipeline over a manifest and score it.

The manifest is JSON lines, one sample per line with keys image, query,
gt_mask, split, and scenario (paths relative to the manifest file). Each
sample produces a predicted mask PNG and a trace file; the report carries
per-sample IoU plus the two aggregate scores (mean per-sample IoU and
cumulative intersection over cumulative union). A sample that fails keeps
the run alive: it scores zero with an empty prediction and the error is
recorded in the report.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from tarot.backends.base import Backends
from tarot.backends.remote import connect
from tarot.backends.scripted import load_scenario
from tarot.calls import gather_ordered
from tarot.config import PipelineConfig
from tarot.errors import InputError, TarotError
from tarot.geometry import BinaryMask, intersect, union
from tarot.images import load_image
from tarot.maskio import load_mask_png, save_mask_png
from tarot.pipeline import segment_image
from tarot.trace import TraceRecorder

_REQUIRED_KEYS = ("image", "query", "gt_mask", "split", "scenario")


@dataclass
class ManifestSample:
    index: int
    image: str
    query: str
    gt_mask: str
    split: str
    scenario: str


def load_manifest(path) -> List[ManifestSample]:
    """Parse and validate the manifest; any bad line aborts the run."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    samples = []
    problems = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"{path}:{lineno}: not valid JSON ({exc})")
            continue
        missing = [k for k in _REQUIRED_KEYS if k not in doc]
        if missing:
            problems.append(f"{path}:{lineno}: missing keys {missing}")
            continue
        if not isinstance(doc["query"], str) or not doc["query"].strip():
            problems.append(f"{path}:{lineno}: query must be a non-empty string")
            continue
        samples.append(ManifestSample(
            index=len(samples),
            image=str(doc["image"]),
            query=doc["query"],
            gt_mask=str(doc["gt_mask"]),
            split=str(doc["split"]),
            scenario=str(doc["scenario"]),
        ))
    if problems:
        raise InputError("manifest rejected:\n" + "\n".join(problems))
    if not samples:
        raise InputError(f"manifest {path} holds no samples")
    return samples


def _sample_backends(sample: ManifestSample, base: Path, cfg: PipelineConfig,
                     shared: Optional[Backends]) -> Backends:
    if shared is not None:
        return shared
    root = Path(cfg.scenario) if cfg.scenario else base
    return load_scenario(root / sample.scenario).backends


def _run_one(sample: ManifestSample, base: Path, cfg: PipelineConfig,
             shared: Optional[Backends], mask_path: Path,
             trace_path: Path) -> dict:
    started = time.monotonic()
    gt = load_mask_png(base / sample.gt_mask)
    result = {
        "index": sample.index,
        "scenario": sample.scenario,
        "query": sample.query,
        "split": sample.split,
        "mask": mask_path.name,
        "trace": trace_path.name,
        "error": None,
    }
    pred = BinaryMask.zeros(gt.width, gt.height)
    backend_calls = {"interpret": 0, "refine": 0}
    try:
        backends = _sample_backends(sample, base, cfg, shared)
        image = load_image(base / sample.image)
        with TraceRecorder(trace_path) as recorder:
            output = segment_image(image, sample.query, backends, cfg, recorder)
            for event in recorder.events:
                if event["event"] == "backend_call":
                    phase = event["phase"]
                    backend_calls[phase] = backend_calls.get(phase, 0) + 1
        pred = output.mask
    except TarotError as exc:
        result["error"] = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # noqa: BLE001 - one bad sample must not kill the run
        result["error"] = f"unexpected {type(exc).__name__}: {exc}"
    save_mask_png(pred, mask_path)
    inter = intersect(pred, gt).area
    uni = union(pred, gt).area
    result["iou"] = round(inter / uni, 6) if uni else 0.0
    result["inter"] = inter
    result["union"] = uni
    result["wall_ms"] = round((time.monotonic() - started) * 1000.0, 3)
    result["backend_calls"] = backend_calls
    return result


def _format_table(rows: List[dict], giou_v: float, ciou_v: float) -> str:
    header = f"{'idx':>4}  {'scenario':<12} {'iou':>8}  error"
    width = max(len(header), 46)
    lines = [header, "-" * width]
    for row in rows:
        err = (row["error"] or "")[:48]
        lines.append(f"{row['index']:>4}  {row['scenario']:<12} "
                     f"{row['iou']:>8.4f}  {err}")
    lines.append("-" * width)
    lines.append(f"gIoU {giou_v:.6f}   cIoU {ciou_v:.6f}   samples {len(rows)}")
    return "\n".join(lines) + "\n"


def run_benchmark(manifest_path, cfg: PipelineConfig, out_dir,
                  transport=None) -> dict:
    """Run every manifest sample and write masks, traces, and the report.

    Samples run on a worker pool but results are keyed and reported by
    manifest index, so the report and all files are order-independent.
    """
    samples = load_manifest(manifest_path)
    base = Path(manifest_path).parent
    out = Path(out_dir)
    masks_dir = out / "masks"
    traces_dir = out / "traces"
    masks_dir.mkdir(parents=True, exist_ok=True)
    traces_dir.mkdir(parents=True, exist_ok=True)

    shared = None
    if cfg.backend_mode == "remote":
        shared = connect(cfg.gateway, timeout_s=cfg.timeout_s, retries=cfg.retries,
                         inflight_cap=cfg.inflight_cap, strict=cfg.strict,
                         transport=transport)

    started = time.monotonic()
    tasks = []
    for sample in samples:
        mask_path = masks_dir / f"sample_{sample.index:04d}.png"
        trace_path = traces_dir / f"sample_{sample.index:04d}.jsonl"
        tasks.append(lambda s=sample, m=mask_path, t=trace_path:
                     _run_one(s, base, cfg, shared, m, t))
    rows = gather_ordered(tasks, workers=cfg.workers)
    total_s = time.monotonic() - started

    inter_sum = sum(r["inter"] for r in rows)
    union_sum = sum(r["union"] for r in rows)
    giou_v = float(np.mean([r["iou"] for r in rows]))
    ciou_v = inter_sum / union_sum if union_sum else 0.0
    calls = {"interpret": sum(r["backend_calls"].get("interpret", 0) for r in rows),
             "refine": sum(r["backend_calls"].get("refine", 0) for r in rows)}
    report = {
        "samples": rows,
        "giou": round(giou_v, 6),
        "ciou": round(ciou_v, 6),
        "inter_sum": inter_sum,
        "union_sum": union_sum,
        "runtime": {
            "total_s": round(total_s, 3),
            "backend_calls": calls,
        },
        "config_digest": cfg.digest(),
        "config": cfg.as_dict(),
    }
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.txt").write_text(
        _format_table(rows, report["giou"], report["ciou"]), encoding="utf-8"
    )
    return report
