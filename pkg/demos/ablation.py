"""Small version of the mapping ablation: observation mode, fusion rule, pose/depth noise.

Run:  python demos/ablation.py [num_floorplans]

Every variant sees the same floorplans and seeds, so differences come from
the mapping pipeline alone. Five floorplans take roughly a minute.
"""

import sys

from isrm.experiments import ABLATION, run_grid, summarize
from isrm.simulator import EpisodeConfig

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5
runs = run_grid(range(n), ABLATION, EpisodeConfig(max_steps=1500, confusion_diag=0.7))

print(f"{'variant':<20}{'maskAcc':>9}{'ovrAcc':>9}{'mIoU':>8}{'cover':>8}")
for row in summarize(runs):
    print(f"{row['variant']:<20}{row['mask_acc']:>9.4f}{row['ovr_acc']:>9.4f}"
          f"{row['mean_iou']:>8.4f}{row['coverage']:>8.3f}")

# Spatial mode keeps each ray's own label; Repeated smears one label over the whole view
# and so paints across doorways. Noise blurs walls but the planner still finishes.
