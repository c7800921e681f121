"""Explore one generated apartment and look at the resulting region map.

Run:  python demos/explore_one_floorplan.py [out_dir]

The agent starts somewhere free, follows frontiers until the map is complete
(or the step budget runs out), and writes the ground-truth layout next to the
predicted region map as PPM images.
"""

import sys
from collections import Counter
from pathlib import Path

from isrm.experiments import bench_floorplan
from isrm.render import floorplan_image, ppm_bytes, render_map
from isrm.simulator import EpisodeConfig, run_episode

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

fp = bench_floorplan(seed=3)
print(f"floorplan: {len(fp.rooms)} rooms, {len(fp.doors)} doors, {fp.width} x {fp.height} cells")

# a 70% accurate classifier: three in ten ray labels come back as some other room type
cfg = EpisodeConfig(max_steps=1500, confusion_diag=0.7, seed=3)
res = run_episode(fp, cfg)

reasons = Counter(rec.refresh_reason for rec in res.log if rec.refresh_reason)
print(f"steps {len(res.log)}, complete {res.complete}, collisions {res.collisions}")
print("goal refreshes:", dict(reasons))
print(f"coverage {res.coverage:.3f}")
m = res.metrics
print(f"maskAcc {m.mask_acc:.3f}  ovrAcc {m.ovr_acc:.3f}  mean IoU {m.mean_iou:.3f}")

(out / "ground_truth.ppm").write_bytes(ppm_bytes(floorplan_image(fp)))
render_map(res.global_map, out / "predicted.ppm")
print(f"images written to {out}/")
