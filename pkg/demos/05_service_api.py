"""Driving the pipeline over HTTP, the way the studio UI does.

Starts the service in-process, submits a review-mode job as multipart
form data, polls for state, walks the two review gates (with a one-pixel
mask edit), and fetches the final composite. This is exactly the surface
a browser client consumes.
"""

import threading
import time
from pathlib import Path

import numpy as np
import uvicorn

from insertkit.backends import mock_profile
from insertkit.imaging import load_image_png, load_mask_png, BinaryMask
from insertkit.service import ServiceConfig, create_app
from insertkit.synth import make_sample

import requests

OUT = Path(__file__).parent / "output" / "05"
PORT = 8791
BASE = f"http://127.0.0.1:{PORT}"

config = ServiceConfig(artifact_root=OUT / "jobs", profiles={"mock-oracle": mock_profile()})
server = uvicorn.Server(uvicorn.Config(create_app(config), host="127.0.0.1", port=PORT, log_level="error"))
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.05)
print(f"service up: {requests.get(f'{BASE}/healthz').json()}")


def poll(job_id, want, deadline=10.0):
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        doc = requests.get(f"{BASE}/jobs/{job_id}").json()
        if doc["state"] == want:
            return doc
        time.sleep(0.05)
    raise RuntimeError(f"timed out waiting for {want}, last state {doc['state']}")


sample = make_sample(seed=77, size=96, ref_size=32)
files = [("background", ("bg.png", sample.background.to_png_bytes(), "image/png"))]
files += [("references", ("ref.png", r.to_png_bytes(), "image/png")) for r in sample.references]
resp = requests.post(
    f"{BASE}/jobs",
    files=files,
    data={
        "box": ",".join(map(str, sample.box.as_list())),
        "mode": "review",
        "profile": "mock-oracle",
        "seed": "0",
    },
)
job_id = resp.json()["id"]
print(f"submitted job {job_id} -> {resp.json()['state']}")

doc = poll(job_id, "stage1_done")
print(f"stage-1 draft ready; artifacts: {doc['artifacts']}")

requests.post(f"{BASE}/jobs/{job_id}/actions", data={"action": "approve_stage1"})
doc = poll(job_id, "mask_ready")
print("mask ready for review")

mask = load_mask_png(requests.get(f"{BASE}/jobs/{job_id}/artifacts/m_osf").content)
bits = np.array(mask.bits)
ys, xs = np.nonzero(bits)
bits[ys[0], xs[0]] = 0  # one remove-brush stroke
edited_png = BinaryMask(bits=bits).to_png_bytes()
requests.post(
    f"{BASE}/jobs/{job_id}/actions",
    data={"action": "approve_mask"},
    files={"mask": ("edited.png", edited_png, "image/png")},
)
doc = poll(job_id, "done")
print(f"final state: {doc['state']}")

stored = requests.get(f"{BASE}/jobs/{job_id}/artifacts/m_osf_edited").content
print("uploaded mask stored byte-for-byte:", stored == edited_png)

final = requests.get(f"{BASE}/jobs/{job_id}/artifacts/i_ins")
(OUT / "final.png").parent.mkdir(parents=True, exist_ok=True)
(OUT / "final.png").write_bytes(final.content)
bg = load_image_png(requests.get(f"{BASE}/jobs/{job_id}/artifacts/i_bg").content)
ins = load_image_png(final.content)
outside = bits == 0
print("background untouched outside mask:", bool((ins.pixels[outside] == bg.pixels[outside]).all()))
print(f"composite written to {OUT / 'final.png'}")

server.should_exit = True
thread.join(timeout=5)
print("service stopped")
