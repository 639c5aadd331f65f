"""HTTP backends speaking the gateway wire protocol.

Every response is validated against the shared wire schema before it is
turned into pipeline types. Transport failures are retried with bounded
exponential backoff; semantic failures (HTTP error bodies, schema or
invariant violations) never are. Contract violations in otherwise
well-formed responses are clamped to valid values with a warning, or
rejected outright when strict mode is on.
"""
from __future__ import annotations

import base64
import logging
import threading
import time
import httpx
import jsonschema

from tarot import fmap as fmap_io
from tarot.backends.base import Backends, ConceptSegmenter, FeatureExtractor, Reasoner
from tarot.backends.types import (
    Criterion,
    MaskCandidate,
    ParsedExpression,
)
from tarot.backends.wire import (
    box_from_wire,
    box_to_wire,
    mask_from_wire,
    mask_to_wire,
    options_to_wire,
    points_to_wire,
    validate_payload,
)
from tarot.errors import BackendSemanticError, BackendTransportError, GeometryError
from tarot.geometry import mask_bbox
from tarot.images import ImageRef

logger = logging.getLogger(__name__)

INLINE_IMAGE_MAX = 65536  # images at or below this many bytes travel as base64


class RemoteClient:
    """Shared HTTP plumbing for the three remote roles."""

    def __init__(self, base_url: str, timeout_s: float = 120.0, retries: int = 2,
                 backoff_s: float = 0.5, inflight_cap: int = 4, strict: bool = False,
                 inline_max: int = INLINE_IMAGE_MAX, transport=None):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s
        self.strict = strict
        self.inline_max = inline_max
        self._http = httpx.Client(base_url=self.base_url, timeout=timeout_s,
                                  transport=transport)
        self._sem = threading.BoundedSemaphore(inflight_cap)
        self._uploaded = set()
        self._upload_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def _request(self, method: str, path: str, json_payload=None, content=None,
                 headers=None) -> httpx.Response:
        attempt = 0
        while True:
            try:
                with self._sem:
                    response = self._http.request(method, path, json=json_payload,
                                                  content=content, headers=headers)
                break
            except httpx.TransportError as exc:
                if attempt >= self.retries:
                    raise BackendTransportError(
                        f"{method} {path} failed after {attempt + 1} attempts: {exc}"
                    ) from exc
                time.sleep(self.backoff_s * (2 ** attempt))
                attempt += 1
        if response.status_code >= 400:
            raise self._error_from_response(method, path, response)
        return response

    @staticmethod
    def _error_from_response(method, path, response) -> BackendSemanticError:
        code = "unknown"
        message = response.text[:500]
        try:
            body = response.json()
            code = str(body.get("code", code))
            message = str(body.get("message", message))
        except ValueError:
            pass
        err = BackendSemanticError(
            f"{method} {path} -> HTTP {response.status_code} [{code}] {message}"
        )
        err.status_code = response.status_code
        err.code = code
        return err

    def image_payload(self, image: ImageRef) -> dict:
        if len(image.data) <= self.inline_max:
            return {"b64": base64.b64encode(image.data).decode("ascii")}
        with self._upload_lock:
            needs_upload = image.digest not in self._uploaded
        if needs_upload:
            response = self._request(
                "POST", "/images", content=image.data,
                headers={"content-type": "application/octet-stream"},
            )
            body = self._validated(response, "/images")
            if body["digest"] != image.digest:
                raise BackendSemanticError(
                    f"gateway stored image as {body['digest']}, expected {image.digest}"
                )
            with self._upload_lock:
                self._uploaded.add(image.digest)
        return {"digest": image.digest}

    def _validated(self, response: httpx.Response, endpoint: str) -> dict:
        try:
            body = response.json()
        except ValueError as exc:
            raise BackendSemanticError(f"{endpoint}: response is not JSON: {exc}") from exc
        try:
            validate_payload(endpoint, "response", body)
        except jsonschema.ValidationError as exc:
            raise BackendSemanticError(
                f"{endpoint}: response violates wire schema: {exc.message}"
            ) from exc
        return body

    def call(self, endpoint: str, payload: dict) -> dict:
        response = self._request("POST", endpoint, json_payload=payload)
        return self._validated(response, endpoint)

    def call_binary(self, endpoint: str, payload: dict) -> bytes:
        response = self._request("POST", endpoint, json_payload=payload)
        ctype = response.headers.get("content-type", "")
        if "application/octet-stream" not in ctype:
            raise BackendSemanticError(
                f"{endpoint}: expected binary body, got content-type {ctype!r}"
            )
        return response.content

    def healthz(self) -> dict:
        response = self._request("GET", "/healthz")
        return self._validated(response, "/healthz")

    # clamp-or-reject helpers -------------------------------------------------

    def fixup(self, op: str, problem: str):
        """Strict mode raises; otherwise the caller clamps after a warning."""
        if self.strict:
            raise BackendSemanticError(f"{op}: {problem}")
        logger.warning("%s: %s (clamped)", op, problem)

    def candidate_from_wire(self, op: str, payload: dict, image: ImageRef) -> MaskCandidate:
        mask = mask_from_wire(payload["mask"])
        if (mask.width, mask.height) != (image.width, image.height):
            raise BackendSemanticError(
                f"{op}: mask is {mask.width}x{mask.height}, image is "
                f"{image.width}x{image.height}"
            )
        if mask.is_empty():
            raise BackendSemanticError(f"{op}: candidate mask is empty")
        tight = mask_bbox(mask)
        try:
            box = box_from_wire(payload["box"])
        except GeometryError:
            self.fixup(op, f"degenerate candidate box {payload['box']}")
            box = tight
        if box != tight:
            self.fixup(op, f"candidate box {box.as_list()} is not tight {tight.as_list()}")
            box = tight
        score = float(payload["score"])
        if not (0.0 <= score <= 1.0):
            self.fixup(op, f"score {score} outside [0, 1]")
            score = min(1.0, max(0.0, score))
        return MaskCandidate(mask=mask, box=box, score=score)


class RemoteReasoner(Reasoner):
    def __init__(self, client: RemoteClient):
        self._client = client

    def parse_expression(self, image, query, options):
        body = self._client.call("/reason/parse", {
            "image": self._client.image_payload(image),
            "query": query,
            "options": options_to_wire(options),
        })
        refers = [r for r in body["refers"]]
        if body["target"] in refers:
            self._client.fixup("parse_expression",
                               f"target {body['target']!r} repeated in refers")
            refers = [r for r in refers if r != body["target"]]
        return ParsedExpression(
            target_name=body["target"],
            refer_names=tuple(refers),
            is_explicit=body["is_explicit"],
            is_multi_object=body["is_multi_object"],
            adjectives=tuple(body.get("adjectives", ())),
            confusion_notes=body.get("confusion_notes", ""),
        )

    def augment_target(self, target):
        body = self._client.call("/reason/augment", {"target": target})
        texts = list(body["texts"])
        if not texts or texts[0] != target:
            self._client.fixup("augment_target",
                               f"first augmentation must be {target!r}")
            texts = [target, *[t for t in texts if t != target]]
        return texts

    def criterion_map(self, target, refer, refer_box):
        body = self._client.call("/reason/criterion", {
            "target": target, "refer": refer, "refer_box": box_to_wire(refer_box),
        })
        return Criterion(relation_text=body["relation_text"], refer_name=refer,
                         refer_box=refer_box)

    def rephrase(self, query, target, refer, criterion):
        body = self._client.call("/reason/rephrase", {
            "query": query, "target": target, "refer": refer,
            "relation": criterion.relation_text,
        })
        return body["short"], body["long"]

    def ground_bbox(self, image, expression):
        body = self._client.call("/reason/ground", {
            "image": self._client.image_payload(image),
            "expression": expression,
        })
        try:
            box = box_from_wire(body["box"])
        except GeometryError as exc:
            raise BackendSemanticError(f"ground_bbox: {exc}") from exc
        clipped = box.clip(image.width, image.height)
        if clipped != box:
            self._client.fixup("ground_bbox", f"box {box.as_list()} exceeds image bounds")
            box = clipped
        return box

    def score_mask(self, image, mask, query, options):
        body = self._client.call("/reason/score", {
            "image": self._client.image_payload(image),
            "mask": mask_to_wire(mask),
            "query": query,
            "options": options_to_wire(options),
        })
        score = float(body["score"])
        if not (0.0 <= score <= 1.0):
            self._client.fixup("score_mask", f"score {score} outside [0, 1]")
            score = min(1.0, max(0.0, score))
        return score

    def prefer_mask(self, image, masks, query, options):
        body = self._client.call("/reason/prefer", {
            "image": self._client.image_payload(image),
            "masks": [mask_to_wire(m) for m in masks],
            "query": query,
            "options": options_to_wire(options),
        })
        index = int(body["index"])
        if not (0 <= index < len(masks)):
            self._client.fixup("prefer_mask",
                               f"index {index} outside 0..{len(masks) - 1}")
            index = min(max(index, 0), len(masks) - 1)
        return index

    def affiliation(self, image, candidate, core):
        body = self._client.call("/reason/affiliate", {
            "image": self._client.image_payload(image),
            "candidate": mask_to_wire(candidate),
            "core": mask_to_wire(core),
        })
        return bool(body["same_object"])


class RemoteSegmenter(ConceptSegmenter):
    def __init__(self, client: RemoteClient):
        self._client = client

    def segment_text(self, image, phrase):
        body = self._client.call("/segment/text", {
            "image": self._client.image_payload(image),
            "phrase": phrase,
        })
        return [self._client.candidate_from_wire("segment_text", c, image)
                for c in body["candidates"]]

    def segment_box(self, image, box):
        body = self._client.call("/segment/box", {
            "image": self._client.image_payload(image),
            "box": box_to_wire(box),
        })
        return self._client.candidate_from_wire("segment_box", body, image)

    def segment_points(self, image, positives, negatives=(), prior=None):
        payload = {
            "image": self._client.image_payload(image),
            "positives": points_to_wire(positives),
            "negatives": points_to_wire(negatives),
            "prior": mask_to_wire(prior) if prior is not None else None,
        }
        body = self._client.call("/segment/points", payload)
        return self._client.candidate_from_wire("segment_points", body, image)


class RemoteFeatureExtractor(FeatureExtractor):
    def __init__(self, client: RemoteClient):
        self._client = client

    def extract(self, image):
        data = self._client.call_binary("/features", {
            "image": self._client.image_payload(image),
        })
        feature_map = fmap_io.loads(data)
        if (feature_map.image_w, feature_map.image_h) != (image.width, image.height):
            raise BackendSemanticError(
                f"extract: feature map is for {feature_map.image_w}x"
                f"{feature_map.image_h}, image is {image.width}x{image.height}"
            )
        return feature_map


def connect(gateway_url: str, timeout_s: float = 120.0, retries: int = 2,
            inflight_cap: int = 4, strict: bool = False, transport=None) -> Backends:
    client = RemoteClient(gateway_url, timeout_s=timeout_s, retries=retries,
                          inflight_cap=inflight_cap, strict=strict,
                          transport=transport)
    return Backends(
        reasoner=RemoteReasoner(client),
        segmenter=RemoteSegmenter(client),
        features=RemoteFeatureExtractor(client),
    )
