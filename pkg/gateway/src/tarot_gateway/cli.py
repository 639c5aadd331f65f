"""Command line entry points: serve the gateway or run the self-test."""
from __future__ import annotations

import argparse
import logging
import sys

from tarot.errors import ConfigError, InputError

from tarot_gateway import __version__
from tarot_gateway.config import GatewayConfig, config_from_flags
from tarot_gateway.errors import ApiError
from tarot_gateway.templates import ConfigurationError


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--host", default=None, help="bind address")
    parser.add_argument("--port", type=int, default=None, help="bind port")
    parser.add_argument("--reasoner", default=None,
                        help="reasoner model path, 'echo', or 'none'")
    parser.add_argument("--segmenter", default=None,
                        help="segmenter model path, 'echo', or 'none'")
    parser.add_argument("--features", default=None,
                        help="feature extractor model path, 'echo', or 'none'")
    parser.add_argument("--scenarios", default=None,
                        help="scenario dir or suite root for echo roles")
    parser.add_argument("--templates", default=None,
                        help="prompt template dir (defaults to packaged set)")
    parser.add_argument("--max-inflight", type=int, default=None,
                        dest="max_inflight",
                        help="cap on concurrently handled requests")


def _config(args: argparse.Namespace) -> GatewayConfig:
    flags = {name: getattr(args, name) for name in
             ("host", "port", "reasoner", "segmenter", "features",
              "scenarios", "templates", "max_inflight")}
    return config_from_flags(flags)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from tarot_gateway.app import create_app

    cfg = _config(args)
    app = create_app(cfg)
    uvicorn.run(app, host=cfg.host, port=cfg.port,
                limit_concurrency=cfg.max_inflight, log_level="info")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    from tarot_gateway.selftest import main_report

    return main_report(_config(args))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tarot-gateway",
        description="HTTP gateway for the segmentation engine's model roles",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP server")
    _add_config_flags(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    p_self = sub.add_parser("selftest",
                            help="exercise every endpoint and report")
    _add_config_flags(p_self)
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ApiError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
