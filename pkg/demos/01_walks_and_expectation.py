"""Return probabilities and the mean self-intersection count.

The lazy walk stays put with probability 1/5 and otherwise moves to one of
the four neighbours.  Its return probabilities p_m(0) decay like
1 / (2 pi m sqrt(det Gamma)), and E B_n = sum over m of (n - m) p_m(0)
grows like n log n / (2 pi sqrt(det Gamma)).
"""
import math

import numpy as np

from siltlab import walk
from siltlab.expectation import expected_silt, expected_silt_asymptotic
from siltlab.silt import silt_exact

lazy = walk.preset("lazy")
print(f"lazy walk: det Gamma = {lazy.det_gamma:.4f}, strongly aperiodic = {lazy.strongly_aperiodic}")

# small m: exact dynamic programming; larger m: quadrature of phi^m
for m in (1, 2, 8, 64, 512, 4096):
    p = walk.return_probability(lazy, m)
    local = 1 / (2 * math.pi * m * math.sqrt(lazy.det_gamma))
    print(f"p_{m}(0) = {p:.6e}   m p_m(0) / local CLT = {p / local:.6f}")

# E B_n against a Monte Carlo average of the brute-force pair count
n = 512
counts = [silt_exact(walk.sample_path(lazy, n, seed=1, stream=s).points) for s in range(400)]
print(f"\nE B_{n} exact      = {float(expected_silt(lazy, n)):.3f}")
print(f"E B_{n} Monte Carlo = {np.mean(counts):.3f} +- {np.std(counts) / math.sqrt(len(counts)):.3f}")
print(f"E B_{n} asymptotic  = {float(expected_silt_asymptotic(lazy, n)):.3f}")
