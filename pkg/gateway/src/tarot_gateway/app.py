"""HTTP application: wire-protocol endpoints in front of the model roles.

Every request body is checked against the shared machine-readable wire
schema before any handler runs, and JSON responses are re-checked on the
way out, so both sides of the protocol validate against the same bytes.
Echo roles answer from scripted scenarios; roles configured with a model
path answer 503 until a runtime is attached.
"""
from __future__ import annotations

import json
import logging
import threading
from typing import Optional

import jsonschema
from starlette.applications import Starlette
from starlette.concurrency import run_in_threadpool
from starlette.requests import Request
from starlette.responses import Response
from starlette.routing import Route

from tarot.backends.wire import endpoint_names, validate_payload
from tarot.errors import InputError, InvariantViolation

from tarot_gateway.config import GatewayConfig, validate_config
from tarot_gateway.echo import EchoLibrary, dispatch
from tarot_gateway.errors import ApiError, not_loaded, schema_violation
from tarot_gateway.templates import load_templates

log = logging.getLogger("tarot_gateway")


def role_for(endpoint: str) -> str:
    if endpoint.startswith("/reason/"):
        return "reasoner"
    if endpoint.startswith("/segment/"):
        return "segmenter"
    return "features"


def canonical_json(payload, status: int = 200) -> Response:
    """Byte-stable JSON: sorted keys, no whitespace."""
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return Response(body.encode("utf-8"), status_code=status,
                    media_type="application/json")


def error_response(exc: ApiError) -> Response:
    return canonical_json({"code": exc.code, "message": exc.message},
                          status=exc.status)


class GatewayState:
    """Shared pieces behind the route handlers."""

    def __init__(self, config: GatewayConfig):
        validate_config(config)
        self.config = config
        self.templates = load_templates(config.templates)
        self.library: Optional[EchoLibrary] = None
        if config.echo_roles():
            self.library = EchoLibrary.from_path(config.scenarios)
        self.locks = {name: threading.Lock()
                      for name in ("reasoner", "segmenter", "features")}

    def require_echo(self, endpoint: str) -> EchoLibrary:
        role = role_for(endpoint)
        if self.config.role(role) != "echo":
            raise not_loaded(role)
        assert self.library is not None
        return self.library


def _parse_body(endpoint: str, raw: bytes) -> dict:
    try:
        payload = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise schema_violation(f"request body is not JSON: {exc}") from exc
    try:
        validate_payload(endpoint, "request", payload)
    except jsonschema.ValidationError as exc:
        raise schema_violation(exc.message) from exc
    return payload


def _endpoint_route(state: GatewayState, endpoint: str) -> Route:
    async def handle(request: Request) -> Response:
        raw = await request.body()
        try:
            payload = _parse_body(endpoint, raw)
            library = state.require_echo(endpoint)
            lock = state.locks[role_for(endpoint)]

            def run():
                with lock:
                    return dispatch(library, endpoint, payload)

            result = await run_in_threadpool(run)
        except ApiError as exc:
            return error_response(exc)
        except InvariantViolation as exc:
            log.exception("invariant violated on %s", endpoint)
            return canonical_json({"code": "internal", "message": str(exc)},
                                  status=500)
        if isinstance(result, bytes):
            return Response(result, media_type="application/octet-stream")
        validate_payload(endpoint, "response", result)
        return canonical_json(result)

    return Route(endpoint, handle, methods=["POST"], name=endpoint.strip("/"))


def _images_route(state: GatewayState) -> Route:
    async def handle(request: Request) -> Response:
        raw = await request.body()
        try:
            if not raw:
                raise schema_violation("empty image upload")
            if state.library is not None:
                image = await run_in_threadpool(state.library.store_image, raw)
                digest = image.digest
            else:
                from tarot.images import from_bytes
                try:
                    digest = from_bytes(raw).digest
                except InputError as exc:
                    raise ApiError(422, "bad_image", str(exc)) from exc
        except ApiError as exc:
            return error_response(exc)
        result = {"digest": digest}
        validate_payload("/images", "response", result)
        return canonical_json(result)

    return Route("/images", handle, methods=["POST"], name="images")


def _healthz_route(state: GatewayState) -> Route:
    async def handle(request: Request) -> Response:
        result = {
            "roles": {name: state.config.role_status(name)
                      for name in ("reasoner", "segmenter", "features")},
            "mode": state.config.mode(),
        }
        validate_payload("/healthz", "response", result)
        return canonical_json(result)

    return Route("/healthz", handle, methods=["GET"], name="healthz")


def create_app(config: GatewayConfig) -> Starlette:
    state = GatewayState(config)
    routes = [_images_route(state), _healthz_route(state)]
    for endpoint in endpoint_names():
        if endpoint in ("/images", "/healthz"):
            continue
        routes.append(_endpoint_route(state, endpoint))
    app = Starlette(routes=routes)
    app.state.gateway = state
    return app
