"""Conformance self-test: drive every endpoint and check the invariants.

The report lists one check per endpoint. A check passes when the response
validates against the shared wire schema and satisfies the protocol
invariants the client relies on: digests round-trip, candidate boxes are
tight around their masks, scores and indices stay in range, and feature
bytes match the scenario exactly. Checks that need a scenario shape the
library does not contain (a query with a reference object) are reported
as skipped, not failed.
"""
from __future__ import annotations

from typing import Callable, List, Optional

from starlette.testclient import TestClient

from tarot import fmap
from tarot.backends.wire import mask_from_wire, mask_to_wire, validate_payload
from tarot.errors import ConfigError
from tarot.geometry import mask_bbox, region_center

from tarot_gateway.app import create_app
from tarot_gateway.config import GatewayConfig

ALL_ON = [True] * 6


def _tight(mask_text: str, box: list, image_w: int, image_h: int) -> Optional[str]:
    """Return a complaint when a wire candidate breaks an invariant."""
    mask = mask_from_wire(mask_text)
    if (mask.width, mask.height) != (image_w, image_h):
        return (f"mask is {mask.width}x{mask.height}, "
                f"image is {image_w}x{image_h}")
    if mask.is_empty():
        return "mask is empty"
    tight = mask_bbox(mask)
    if tight.as_list() != box:
        return f"box {box} is not tight (expected {tight.as_list()})"
    return None


class _Runner:
    def __init__(self, client: TestClient):
        self.client = client
        self.checks: List[dict] = []

    def check(self, endpoint: str, fn: Callable[[], Optional[str]]):
        """Run one check; fn returns None (pass) or a skip reason string."""
        try:
            skip = fn()
        except Exception as exc:
            self.checks.append({"endpoint": endpoint, "status": "failed",
                                "detail": f"{type(exc).__name__}: {exc}"})
            return
        if skip is None:
            self.checks.append({"endpoint": endpoint, "status": "ok",
                                "detail": ""})
        else:
            self.checks.append({"endpoint": endpoint, "status": "skipped",
                                "detail": skip})

    def post_json(self, endpoint: str, payload: dict) -> dict:
        validate_payload(endpoint, "request", payload)
        resp = self.client.post(endpoint, json=payload)
        if resp.status_code != 200:
            raise AssertionError(
                f"{endpoint} returned {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        validate_payload(endpoint, "response", body)
        return body


def conformance_selftest(config: GatewayConfig) -> dict:
    """Exercise every endpoint of an app built from config; return a report."""
    app = create_app(config)
    library = app.state.gateway.library
    if library is None:
        raise ConfigError("conformance self-test needs at least one echo role")
    scen = library.scenarios[0]
    w, h = scen.image.width, scen.image.height
    client = TestClient(app)
    run = _Runner(client)

    def healthz():
        resp = client.get("/healthz")
        assert resp.status_code == 200, resp.text
        body = resp.json()
        validate_payload("/healthz", "response", body)
        assert set(body["roles"]) == {"reasoner", "segmenter", "features"}
        return None

    run.check("/healthz", healthz)

    def images():
        resp = client.post("/images", content=scen.image.data)
        assert resp.status_code == 200, resp.text
        body = resp.json()
        validate_payload("/images", "response", body)
        assert body["digest"] == scen.image.digest, "digest mismatch"
        return None

    run.check("/images", images)

    image_ref = {"digest": scen.image.digest}
    parsed: dict = {}

    def parse():
        body = run.post_json("/reason/parse", {
            "image": image_ref, "query": scen.query, "options": ALL_ON})
        assert body["target"].strip(), "empty target"
        parsed.update(body)
        return None

    run.check("/reason/parse", parse)

    def augment():
        body = run.post_json("/reason/augment", {"target": parsed["target"]})
        assert len(body["texts"]) >= 1
        return None

    run.check("/reason/augment", augment)

    grounded: dict = {}

    def ground():
        body = run.post_json("/reason/ground", {
            "image": image_ref, "expression": scen.query})
        x0, y0, x1, y1 = body["box"]
        assert 0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h, \
            f"box {body['box']} out of bounds for {w}x{h}"
        grounded["box"] = body["box"]
        return None

    run.check("/reason/ground", ground)

    candidates: list = []

    def segment_text():
        body = run.post_json("/segment/text", {
            "image": image_ref, "phrase": parsed["target"]})
        assert body["candidates"], "no candidates"
        for cand in body["candidates"]:
            complaint = _tight(cand["mask"], cand["box"], w, h)
            assert complaint is None, complaint
        candidates.extend(body["candidates"])
        return None

    run.check("/segment/text", segment_text)

    def segment_box():
        body = run.post_json("/segment/box", {
            "image": image_ref, "box": grounded["box"]})
        complaint = _tight(body["mask"], body["box"], w, h)
        assert complaint is None, complaint
        return None

    run.check("/segment/box", segment_box)

    def segment_points():
        center = region_center(scen.gt)
        body = run.post_json("/segment/points", {
            "image": image_ref,
            "positives": [[center.x, center.y]],
        })
        complaint = _tight(body["mask"], body["box"], w, h)
        assert complaint is None, complaint
        mask = mask_from_wire(body["mask"])
        assert mask.array[center.y, center.x], "mask misses the positive point"
        return None

    run.check("/segment/points", segment_points)

    gt_wire = mask_to_wire(scen.gt)

    def score():
        body = run.post_json("/reason/score", {
            "image": image_ref, "mask": gt_wire,
            "query": scen.query, "options": ALL_ON})
        assert 0.0 <= body["score"] <= 1.0
        return None

    run.check("/reason/score", score)

    def prefer():
        masks = [gt_wire, gt_wire]
        body = run.post_json("/reason/prefer", {
            "image": image_ref, "masks": masks,
            "query": scen.query, "options": ALL_ON})
        assert 0 <= body["index"] < len(masks), f"index {body['index']}"
        return None

    run.check("/reason/prefer", prefer)

    def affiliate():
        body = run.post_json("/reason/affiliate", {
            "image": image_ref, "candidate": gt_wire, "core": gt_wire})
        assert body["same_object"] is True, "identical masks must affiliate"
        return None

    run.check("/reason/affiliate", affiliate)

    # criterion and rephrase need a scenario whose query names a second
    # object; scan the library for one
    relational = None
    for cand_scen in library.scenarios:
        body = client.post("/reason/parse", json={
            "image": {"digest": cand_scen.image.digest},
            "query": cand_scen.query, "options": ALL_ON})
        if body.status_code == 200 and body.json()["refers"]:
            relational = (cand_scen, body.json())
            break

    criterion_out: dict = {}

    def criterion():
        if relational is None:
            return "no scenario with a reference object"
        cand_scen, cand_parsed = relational
        refer = cand_parsed["refers"][0]
        seg = run.post_json("/segment/text", {
            "image": {"digest": cand_scen.image.digest}, "phrase": refer})
        body = run.post_json("/reason/criterion", {
            "target": cand_parsed["target"], "refer": refer,
            "refer_box": seg["candidates"][0]["box"]})
        assert body["relation_text"].strip(), "empty relation"
        criterion_out.update(body)
        return None

    run.check("/reason/criterion", criterion)

    def rephrase():
        if relational is None:
            return "no scenario with a reference object"
        cand_scen, cand_parsed = relational
        body = run.post_json("/reason/rephrase", {
            "query": cand_scen.query, "target": cand_parsed["target"],
            "refer": cand_parsed["refers"][0],
            "relation": criterion_out["relation_text"]})
        assert body["short"].strip() and body["long"].strip()
        return None

    run.check("/reason/rephrase", rephrase)

    def features():
        payload = {"image": image_ref}
        validate_payload("/features", "request", payload)
        resp = client.post("/features", json=payload)
        assert resp.status_code == 200, resp.text[:200]
        ctype = resp.headers.get("content-type", "")
        assert "application/octet-stream" in ctype, ctype
        grid = fmap.loads(resp.content)
        assert grid.grid_h > 0 and grid.grid_w > 0
        stored = (scen.root / scen.doc["features"]["path"]).read_bytes()
        assert resp.content == stored, "feature bytes differ from scenario"
        return None

    run.check("/features", features)

    passed = all(c["status"] != "failed" for c in run.checks)
    return {"passed": passed, "checks": run.checks}


def format_report(report: dict) -> str:
    lines = []
    for check in report["checks"]:
        line = f"{check['status']:>7}  {check['endpoint']}"
        if check["detail"]:
            line += f"  ({check['detail']})"
        lines.append(line)
    lines.append("selftest: " + ("PASS" if report["passed"] else "FAIL"))
    return "\n".join(lines)


def main_report(config: GatewayConfig) -> int:
    report = conformance_selftest(config)
    print(format_report(report))
    return 0 if report["passed"] else 1
