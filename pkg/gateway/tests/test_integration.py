"""End-to-end parity: the engine driven over HTTP must match scripted runs.

A real uvicorn server hosts the echo gateway on an ephemeral port; the
segmentation engine then runs the same generated suite twice, once with
in-process scripted backends and once through its remote client, and the
reports must agree exactly.
"""
import threading
import time

import pytest
import uvicorn

from tarot.config import PipelineConfig
from tarot.harness import run_benchmark

from tarot_gateway.selftest import conformance_selftest


@pytest.fixture(scope="module")
def server_url(app):
    config = uvicorn.Config(app, host="127.0.0.1", port=0,
                            log_level="warning", limit_concurrency=16)
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def test_healthz_over_tcp(server_url):
    import httpx

    body = httpx.get(f"{server_url}/healthz", timeout=10).json()
    assert body["mode"] == "echo"


def test_remote_run_matches_scripted_run(server_url, suite_dir, config,
                                         tmp_path, capsys):
    manifest = suite_dir / "manifest.jsonl"

    scripted = run_benchmark(manifest, PipelineConfig(), tmp_path / "scripted")
    remote = run_benchmark(
        manifest,
        PipelineConfig(backend_mode="remote", gateway=server_url),
        tmp_path / "remote")

    assert len(scripted["samples"]) == len(remote["samples"])
    for left, right in zip(scripted["samples"], remote["samples"]):
        assert left["error"] is None and right["error"] is None
        for key in ("scenario", "iou", "inter", "union", "backend_calls"):
            assert left[key] == right[key], (key, left, right)
    assert remote["giou"] == scripted["giou"]
    assert remote["ciou"] == scripted["ciou"]

    for name in sorted(p.name for p in (tmp_path / "scripted" / "masks").iterdir()):
        left = (tmp_path / "scripted" / "masks" / name).read_bytes()
        right = (tmp_path / "remote" / "masks" / name).read_bytes()
        assert left == right, f"mask {name} differs between scripted and remote"

    report = conformance_selftest(config)
    assert report["passed"] is True

    with capsys.disabled():
        print("\ncriterion 8 (gateway conformance): PASS "
              f"(selftest ok, remote gIoU {remote['giou']:.6f} == "
              f"scripted {scripted['giou']:.6f}, masks byte-equal)")
