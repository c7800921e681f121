"""How the two fusion rules react to confident but wrong observations of one cell.

Run:  python demos/fusion_streams.py

A cell is seen 50 times. Most observations say label 0; some say label 1
with probability 0.999. The moving average tracks the vote share. The
Bayesian product weighs log-likelihoods, so one confident outlier cancels
one confident inlier.
"""

import numpy as np

from isrm.fusion import fuse_sequence

C, T = 14, 50
wrong = np.full(C, 1e-3 / (C - 1))
wrong[1] = 0.999


def stream(n_wrong, wrong_first):
    s = np.zeros((T, C))
    s[:, 0] = 1.0
    s[:n_wrong] = wrong
    return s if wrong_first else s[::-1]


for n_wrong in (5, 15, 24, 25, 26):
    cols = []
    for wrong_first in (True, False):
        s = stream(n_wrong, wrong_first)
        avg, bayes = fuse_sequence(s, "avg"), fuse_sequence(s, "bayes")
        cols.append(f"avg {avg.argmax()} / bayes {bayes.argmax()}")
    print(f"{n_wrong:>2}/{T} wrong   wrong first: {cols[0]}   right first: {cols[1]}")

# When a clean one-hot observation arrives first it becomes the prior as-is, so every
# other label sits at exactly zero and no later likelihood can revive it. Floor the
# incoming likelihood all you like; the stored zero wins.
