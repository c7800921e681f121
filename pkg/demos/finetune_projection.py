"""Finetune the image-side projection with MSCL and with InfoNCE.

Run:  python demos/finetune_projection.py

Features are synthetic stand-ins for a frozen vision-language encoder: each
image feature leans towards a "confuser" label, so the untrained projection
mostly picks the wrong room. Both losses learn a linear correction; batches
with many repeated labels are where MSCL's extra positives pay off.
"""

import numpy as np

from isrm.experiments import finetune_benchmark

for decay, what in ((0.3, "skewed label frequencies"), (0.0, "uniform label frequencies")):
    outs = [finetune_benchmark(seed, decay=decay) for seed in range(3)]
    frozen, mscl, infonce = (np.mean([getattr(o, k) for o in outs]) for k in ("frozen", "mscl", "infonce"))
    print(f"{what:<28} frozen {frozen:.3f}   MSCL {mscl:.3f}   InfoNCE {infonce:.3f}")
