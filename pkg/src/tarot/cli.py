"""Command line interface.

Subcommands: segment one image, eval a manifest, gen a scenario suite,
trace to inspect or compare trace files. Exit codes: 0 success, 1 bad
input or configuration, 2 backend or transport failure, 3 broken internal
invariant.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from tarot import __version__
from tarot.backends.remote import connect
from tarot.backends.scripted import load_scenario
from tarot.config import PipelineConfig, resolve_config, resolve_out_dir
from tarot.errors import (
    BackendError,
    ConfigError,
    InputError,
    InvariantViolation,
    PipelineError,
    TarotError,
)
from tarot.harness import run_benchmark
from tarot.images import load_image
from tarot.maskio import save_mask_png
from tarot.pipeline import segment_image
from tarot.scenarios import generate_scenarios
from tarot.trace import PHASE_ALIASES, TraceRecorder, compare_traces, load_trace

log = logging.getLogger("tarot")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BACKEND = 2
EXIT_INVARIANT = 3


def _on_off(value: str) -> bool:
    word = value.strip().lower()
    if word in ("on", "true", "yes", "1"):
        return True
    if word in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {value!r}")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--tau", type=float, default=None,
                        help="box-consistency threshold")
    parser.add_argument("--s-neg", dest="s_neg", type=float, default=None,
                        help="negative-point similarity fraction")
    parser.add_argument("--anchors", type=int, default=None,
                        help="anchor count for the similarity field")
    for flag in ("rpo", "text-aug", "bbox-aug", "ips", "opm"):
        dest = flag.replace("-", "_")
        parser.add_argument(f"--{flag}", dest=dest, type=_on_off, default=None,
                            metavar="on|off")
    parser.add_argument("--backend-mode", dest="backend_mode",
                        choices=("scripted", "remote"), default=None)
    parser.add_argument("--scenario", default=None,
                        help="scenario directory (scripted mode)")
    parser.add_argument("--gateway", default=None,
                        help="gateway base URL (remote mode)")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--strict", type=_on_off, default=None, metavar="on|off",
                        help="reject repairable backend answers instead of clamping")


def _flags_dict(args: argparse.Namespace) -> dict:
    keys = ("config", "tau", "s_neg", "anchors", "rpo", "text_aug", "bbox_aug",
            "ips", "opm", "backend_mode", "scenario", "gateway", "workers",
            "strict")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _build_backends(cfg: PipelineConfig):
    if cfg.backend_mode == "remote":
        return connect(cfg.gateway, timeout_s=cfg.timeout_s, retries=cfg.retries,
                       inflight_cap=cfg.inflight_cap, strict=cfg.strict), None
    if not cfg.scenario:
        raise ConfigError("scripted mode needs --scenario pointing at a scenario")
    scenario = load_scenario(cfg.scenario)
    return scenario.backends, scenario


def _default_out(cfg: PipelineConfig) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path(f"tarot-out-{stamp}-{cfg.digest()}")


def _cmd_segment(args: argparse.Namespace) -> int:
    cfg = resolve_config(flags=_flags_dict(args))
    backends, scenario = _build_backends(cfg)
    if args.image:
        image = load_image(args.image)
    elif scenario is not None:
        image = scenario.image
    else:
        raise InputError("remote mode needs --image")
    query = args.query
    if query is None and scenario is not None:
        query = scenario.query
    if not query:
        raise InputError("no query given (pass --query)")

    out = Path(resolve_out_dir(args.out) or _default_out(cfg))
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    with TraceRecorder(trace_path) as recorder:
        result = segment_image(image, query, backends, cfg, recorder)
    mask_path = out / "mask.png"
    save_mask_png(result.mask, mask_path)
    print(f"mask: {mask_path}")
    print(f"trace: {trace_path}")
    print(f"area: {result.mask.area} of {image.width * image.height}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(flags=_flags_dict(args))
    out = Path(resolve_out_dir(args.out) or _default_out(cfg))
    report = run_benchmark(args.manifest, cfg, out)
    failed = sum(1 for r in report["samples"] if r["error"])
    print(f"out: {out}")
    print(f"samples: {len(report['samples'])} ({failed} failed)")
    print(f"gIoU: {report['giou']:.6f}  cIoU: {report['ciou']:.6f}")
    return EXIT_OK


def _parse_fault_mix(text):
    if not text:
        return None
    mix = {}
    for part in text.split(","):
        if "=" not in part:
            raise InputError(f"fault mix entries look like kind=count, got {part!r}")
        kind, _, raw = part.partition("=")
        try:
            mix[kind.strip()] = int(raw)
        except ValueError as exc:
            raise InputError(f"bad fault count in {part!r}") from exc
    return mix


def _cmd_gen(args: argparse.Namespace) -> int:
    summaries = generate_scenarios(args.out, seed=args.seed, count=args.count,
                                   fault_mix=_parse_fault_mix(args.faults))
    by_fault = {}
    for s in summaries:
        by_fault[s["fault"]] = by_fault.get(s["fault"], 0) + 1
    print(f"wrote {len(summaries)} scenarios to {args.out}")
    print("faults: " + ", ".join(f"{k}={v}" for k, v in sorted(by_fault.items())))
    return EXIT_OK


def _cmd_trace(args: argparse.Namespace) -> int:
    if args.assert_deterministic:
        if len(args.files) != 2:
            raise InputError("--assert-deterministic needs exactly two trace files")
        left = load_trace(args.files[0])
        right = load_trace(args.files[1])
        divergence = compare_traces(left, right)
        if divergence is None:
            print(f"traces match ({len(left)} events)")
            return EXIT_OK
        print(f"traces diverge at event {divergence['index']}:")
        print(f"  left:  {json.dumps(divergence['left'], sort_keys=True)}")
        print(f"  right: {json.dumps(divergence['right'], sort_keys=True)}")
        return EXIT_INPUT

    if len(args.files) != 1:
        raise InputError("trace inspection takes exactly one file")
    events = load_trace(args.files[0])
    phase = PHASE_ALIASES.get(args.phase, args.phase) if args.phase else None
    shown = 0
    for event in events:
        if phase and event.get("phase") != phase:
            continue
        if args.event and event.get("event") != args.event:
            continue
        print(json.dumps(event, sort_keys=True))
        shown += 1
    print(f"# {shown} of {len(events)} events", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tarot",
        description="training-free referring-expression segmentation engine",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_segment = sub.add_parser("segment", help="segment one image")
    p_segment.add_argument("--image", help="image file (defaults to the scenario's)")
    p_segment.add_argument("--query", help="referring expression")
    p_segment.add_argument("--out", help="output directory")
    _add_config_flags(p_segment)
    p_segment.set_defaults(func=_cmd_segment)

    p_eval = sub.add_parser("eval", help="run a benchmark manifest")
    p_eval.add_argument("manifest", help="JSON-lines manifest file")
    p_eval.add_argument("--out", help="output directory")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_gen = sub.add_parser("gen", help="generate a scripted scenario suite")
    p_gen.add_argument("--out", required=True, help="suite directory to create")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--count", type=int, default=20)
    p_gen.add_argument("--faults", default=None,
                       help="fault mix, e.g. none=6,under=7,over=7")
    p_gen.set_defaults(func=_cmd_gen)

    p_trace = sub.add_parser("trace", help="inspect or compare trace files")
    p_trace.add_argument("files", nargs="+", help="trace file(s)")
    p_trace.add_argument("--phase", default=None,
                         help="filter by phase (interpret/refine, aliases eri/msr)")
    p_trace.add_argument("--event", default=None, help="filter by event name")
    p_trace.add_argument("--assert-deterministic", action="store_true",
                         dest="assert_deterministic",
                         help="compare two traces, exit 1 on semantic divergence")
    p_trace.set_defaults(func=_cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, InputError, PipelineError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except BackendError as exc:
        log.error("backend failure: %s", exc)
        return EXIT_BACKEND
    except InvariantViolation as exc:
        log.error("invariant violated: %s", exc)
        return EXIT_INVARIANT
    except TarotError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
