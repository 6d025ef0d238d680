from __future__ import annotations

import io
import json
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from insertkit.backends import mock_profile
from insertkit.imaging import BinaryMask, load_image_png, load_mask_png
from insertkit.service import ServiceConfig, create_app
from insertkit.synth import make_sample, write_suite

DEADLINE = 15.0


@pytest.fixture
def service(tmp_path):
    config = ServiceConfig(
        artifact_root=tmp_path / "jobs",
        profiles={
            "mock-oracle": mock_profile("mock-oracle"),
            "mock-heuristic": mock_profile("mock-heuristic", segmenter="heuristic"),
        },
        eval_root=tmp_path / "eval",
    )
    app = create_app(config)
    with TestClient(app) as client:
        yield client, config


def submit(client, sample, mode="auto", profile="mock-oracle", box=None, seed=0):
    files = [("background", ("bg.png", sample.background.to_png_bytes(), "image/png"))]
    for i, ref in enumerate(sample.references):
        files.append(("references", (f"ref{i}.png", ref.to_png_bytes(), "image/png")))
    data = {
        "box": box or ",".join(map(str, sample.box.as_list())),
        "mode": mode,
        "profile": profile,
        "seed": str(seed),
    }
    return client.post("/jobs", files=files, data=data)


def wait_for(client, job_id, states, deadline=DEADLINE):
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        doc = client.get(f"/jobs/{job_id}").json()
        if doc["state"] in states:
            return doc
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} never reached {states}; last: {doc['state']}")


def test_healthz(service):
    client, _ = service
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


# -- POST /jobs ---------------------------------------------------------------


def test_submit_review_job_created(service):
    client, _ = service
    resp = submit(client, make_sample(1), mode="review")
    assert resp.status_code == 201
    body = resp.json()
    assert body["state"] == "created"
    doc = wait_for(client, body["id"], {"stage1_done"})
    assert "i_os" in doc["artifacts"]


def test_submit_auto_job_runs_to_done(service):
    client, _ = service
    resp = submit(client, make_sample(2))
    assert resp.status_code == 201
    doc = wait_for(client, resp.json()["id"], {"done"})
    assert {"m_bbx", "i_mbg", "i_os", "m_raw", "m_osf", "i_mbg2", "i_ins"} <= set(doc["artifacts"])


def test_submit_invalid_box_names_field(service):
    client, _ = service
    sample = make_sample(3)
    resp = submit(client, sample, box="60,60,16,16")
    assert resp.status_code == 400
    assert resp.json()["error"]["field"] == "box"
    resp = submit(client, sample, box="1,2,3")
    assert resp.status_code == 400
    assert resp.json()["error"]["field"] == "box"


def test_submit_unknown_profile_404(service):
    client, _ = service
    resp = submit(client, make_sample(4), profile="gpu-west")
    assert resp.status_code == 404


def test_submit_undecodable_image_400(service):
    client, _ = service
    sample = make_sample(5)
    files = [
        ("background", ("bg.png", b"not a png", "image/png")),
        ("references", ("r.png", sample.references[0].to_png_bytes(), "image/png")),
    ]
    resp = client.post(
        "/jobs", files=files, data={"box": "1,1,4,4", "mode": "auto", "profile": "mock-oracle"}
    )
    assert resp.status_code == 400
    assert resp.json()["error"]["field"] == "background"


# -- GET /jobs/{id} and artifacts ------------------------------------------------


def test_get_job_unknown_404(service):
    client, _ = service
    assert client.get("/jobs/nope").status_code == 404
    assert client.get("/jobs/nope/artifacts/i_bg").status_code == 404


def test_get_artifact_bytes_and_etag(service):
    client, _ = service
    resp = submit(client, make_sample(6))
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"done"})

    first = client.get(f"/jobs/{job_id}/artifacts/i_mbg")
    assert first.status_code == 200
    assert first.headers["content-type"] == "image/png"
    # erasure contract visible through the API: box interior black
    img = load_image_png(first.content)
    doc = client.get(f"/jobs/{job_id}").json()
    x, y, w, h = doc["box"]
    assert np.all(img.pixels[y : y + h, x : x + w] == 0)

    second = client.get(f"/jobs/{job_id}/artifacts/i_mbg")
    assert second.headers["etag"] == first.headers["etag"]
    assert second.content == first.content


def test_get_uncommitted_artifact_404(service):
    client, _ = service
    resp = submit(client, make_sample(7), mode="review")
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"stage1_done"})
    assert client.get(f"/jobs/{job_id}/artifacts/i_ins").status_code == 404
    assert client.get(f"/jobs/{job_id}/artifacts/m_osf").status_code == 404


def test_failed_job_reports_error_document(service):
    client, _ = service
    sample = make_sample(8)
    # heuristic cannot find a gray-on-gray object
    from insertkit.synth import make_no_contrast_sample

    nc = make_no_contrast_sample()
    resp = submit(client, nc, profile="mock-heuristic")
    job_id = resp.json()["id"]
    doc = wait_for(client, job_id, {"failed"})
    assert doc["error"]["stage"] == "segmentation"
    assert doc["error"]["code"] == "segmentation_empty"


# -- review actions -----------------------------------------------------------------


def act(client, job_id, action, mask_bytes=None, new_seed=None):
    data = {"action": action}
    if new_seed is not None:
        data["new_seed"] = str(new_seed)
    files = {"mask": ("mask.png", mask_bytes, "image/png")} if mask_bytes else None
    return client.post(f"/jobs/{job_id}/actions", data=data, files=files)


def test_review_flow_approve_and_mask_edit(service):
    client, _ = service
    sample = make_sample(9)
    resp = submit(client, sample, mode="review")
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"stage1_done"})

    resp = act(client, job_id, "approve_stage1")
    assert resp.status_code == 200
    doc = wait_for(client, job_id, {"mask_ready"})

    # edit: remove one pixel from the mask
    mask = load_mask_png(client.get(f"/jobs/{job_id}/artifacts/m_osf").content)
    bits = np.array(mask.bits)
    ys, xs = np.nonzero(bits)
    bits[ys[0], xs[0]] = 0
    edited_png = BinaryMask(bits=bits).to_png_bytes()
    resp = act(client, job_id, "approve_mask", mask_bytes=edited_png)
    assert resp.status_code == 200
    doc = wait_for(client, job_id, {"done"})
    assert "m_osf_edited" in doc["artifacts"]
    stored = client.get(f"/jobs/{job_id}/artifacts/m_osf_edited").content
    assert stored == edited_png  # upload stored byte-for-byte
    # i_mbg2 recomputed for the edited mask
    i_mbg2 = load_image_png(client.get(f"/jobs/{job_id}/artifacts/i_mbg2").content)
    zeroed = (i_mbg2.pixels == 0).all(axis=2)
    assert int(zeroed.sum()) == int(bits.sum())


def test_action_on_wrong_state_409(service):
    client, _ = service
    resp = submit(client, make_sample(10))
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"done"})
    resp = act(client, job_id, "approve_stage1")
    assert resp.status_code == 409


def test_retry_segmentation_reruns(service):
    client, _ = service
    resp = submit(client, make_sample(11), mode="review")
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"stage1_done"})
    act(client, job_id, "approve_stage1")
    wait_for(client, job_id, {"mask_ready"})
    resp = act(client, job_id, "retry_segmentation")
    assert resp.status_code == 200
    assert resp.json()["state"] == "segmenting"
    wait_for(client, job_id, {"mask_ready"})


def test_retry_stage1_with_new_seed(service):
    client, _ = service
    resp = submit(client, make_sample(12), mode="review", seed=0)
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"stage1_done"})
    first = client.get(f"/jobs/{job_id}/artifacts/i_os").content
    resp = act(client, job_id, "retry_stage1", new_seed=5)
    assert resp.status_code == 200
    wait_for(client, job_id, {"stage1_done"})
    assert client.get(f"/jobs/{job_id}/artifacts/i_os").content != first


def test_unknown_action_400(service):
    client, _ = service
    resp = submit(client, make_sample(13), mode="review")
    job_id = resp.json()["id"]
    resp = act(client, job_id, "dance")
    assert resp.status_code == 400
    assert resp.json()["error"]["field"] == "action"


def test_bad_mask_upload_400(service):
    client, _ = service
    resp = submit(client, make_sample(14), mode="review")
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"stage1_done"})
    act(client, job_id, "approve_stage1")
    wait_for(client, job_id, {"mask_ready"})
    resp = act(client, job_id, "approve_mask", mask_bytes=b"junk")
    assert resp.status_code == 400
    assert resp.json()["error"]["field"] == "mask"
    # wrong dimensions are rejected too
    resp = act(client, job_id, "approve_mask", mask_bytes=BinaryMask.zeros(4, 4).to_png_bytes())
    assert resp.status_code == 400


def test_concurrent_actions_exactly_one_wins(service):
    client, _ = service
    resp = submit(client, make_sample(15), mode="review")
    job_id = resp.json()["id"]
    wait_for(client, job_id, {"stage1_done"})
    act(client, job_id, "approve_stage1")
    wait_for(client, job_id, {"mask_ready"})

    codes = []

    def fire():
        codes.append(act(client, job_id, "approve_mask").status_code)

    threads = [threading.Thread(target=fire) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(codes) == [200, 409]


# -- persistence across restart -------------------------------------------------------


def test_state_survives_restart(tmp_path):
    config = ServiceConfig(artifact_root=tmp_path / "jobs")
    sample = make_sample(16)
    with TestClient(create_app(config)) as client:
        job_id = submit(client, sample).json()["id"]
        wait_for(client, job_id, {"done"})
    # a fresh app over the same root sees the committed job
    with TestClient(create_app(ServiceConfig(artifact_root=tmp_path / "jobs"))) as client:
        doc = client.get(f"/jobs/{job_id}").json()
        assert doc["state"] == "done"
        assert client.get(f"/jobs/{job_id}/artifacts/i_ins").status_code == 200


# -- eval batches ------------------------------------------------------------------------


def test_eval_batch_flow(service, tmp_path):
    client, config = service
    manifest = write_suite(tmp_path / "suite", 2, seed0=60)
    resp = client.post(
        "/eval/batches",
        json={"manifest": str(manifest), "profiles": ["mock-oracle"], "parallel": 2},
    )
    assert resp.status_code == 202
    batch_id = resp.json()["id"]
    end = time.monotonic() + DEADLINE
    while time.monotonic() < end:
        doc = client.get(f"/eval/batches/{batch_id}").json()
        if doc["state"] != "running":
            break
        time.sleep(0.05)
    assert doc["state"] == "done"
    assert doc["failed"] == 0
    assert doc["total"] == 2
    from pathlib import Path

    assert Path(doc["csv"]).exists()


def test_eval_batch_validation(service, tmp_path):
    client, _ = service
    resp = client.post("/eval/batches", json={"profiles": ["mock-oracle"]})
    assert resp.status_code == 400
    manifest = write_suite(tmp_path / "suite2", 1, seed0=70)
    resp = client.post("/eval/batches", json={"manifest": str(manifest), "profiles": ["nope"]})
    assert resp.status_code == 404
    resp = client.post("/eval/batches", json={"manifest": str(manifest), "profiles": []})
    assert resp.status_code == 400
    assert client.get("/eval/batches/missing").status_code == 404
