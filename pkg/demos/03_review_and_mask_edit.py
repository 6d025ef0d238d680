"""Human-in-the-loop review: gates, seed retry, and mask editing.

Review mode holds the pipeline at two points: after the stage-1 draft
(judge pose/viewpoint; retry with a new seed if unconvincing) and after
silhouette extraction (correct the mask before detail filling). This
script plays the human.
"""

from pathlib import Path

import numpy as np

from insertkit.backends import mock_profile
from insertkit.imaging import BinaryMask
from insertkit.pipeline import Pipeline
from insertkit.synth import make_sample

OUT = Path(__file__).parent / "output" / "03"

sample = make_sample(seed=23, size=80, ref_size=28)
pipeline = Pipeline(OUT / "jobs")
job = pipeline.create_job(
    sample.background, list(sample.references), sample.box,
    mock_profile(), mode="review", seed=0,
)

job = pipeline.run_stage1(job.id)
print(f"stage 1 draft ready for review: {job.state.value}")
first_draft = pipeline.store.get_bytes(job.id, "i_os")

# The human dislikes the draft and retries with a different seed.
job = pipeline.retry_stage1(job.id, new_seed=42)
print(f"retried with seed 42; draft changed: {pipeline.store.get_bytes(job.id, 'i_os') != first_draft}")

# Now they approve and let segmentation run.
pipeline.approve_stage1(job.id)
job = pipeline.run_segmentation(job.id)
m_osf = pipeline.store.get_mask(job.id, "m_osf")
print(f"mask ready: {m_osf.popcount} px")

# The human trims one corner of the silhouette with the remove brush.
bits = np.array(m_osf.bits)
ys, xs = np.nonzero(bits)
corner = (ys[0], xs[0])
bits[corner] = 0
edited = BinaryMask(bits=bits)
job = pipeline.accept_mask(job.id, edited=edited)
print(f"edited mask accepted: {edited.popcount} px (removed 1)")
print("stored verbatim:", pipeline.store.get_mask(job.id, "m_osf_edited") == edited)

job = pipeline.run_stage2(job.id)
print(f"final state: {job.state.value}")

# The trimmed pixel now shows the original background, untouched.
bg = pipeline.store.get_image(job.id, "i_bg")
i_ins = pipeline.store.get_image(job.id, "i_ins")
y, x = corner
print("trimmed pixel equals background:", bool((i_ins.pixels[y, x] == bg.pixels[y, x]).all()))
outside = edited.bits == 0
print("all pixels outside the edited mask equal background:",
      bool((i_ins.pixels[outside] == bg.pixels[outside]).all()))
