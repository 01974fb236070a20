"""Upper tails of gamma_n and the law of the iterated logarithm.

With b_n = log n the upper tail P(gamma_n >= lambda n b_n) decays like
exp(-lambda sqrt(det Gamma) kappa^-4 b_n).  Convergence is slow, so the
normalized estimates sit noticeably below the limit at these sizes.
"""
from siltlab import walk
from siltlab.deviations import ScalingSchedule, estimate_upper_tail, lil_envelopes, lil_trace, sample_renormalized
from siltlab.variational import solve_kappa_ode

lazy = walk.preset("lazy")
kappa = solve_kappa_ode().kappa
sched = ScalingSchedule.parse("log")

for block, n in enumerate((256, 1024)):
    g = sample_renormalized(lazy, n, 5000, seed=3, block=block)
    e = estimate_upper_tail(lazy, n, sched, 0.5, seed=3, kappa=kappa, samples=g)
    print(f"n={n:5d}  successes={e.successes:4d}  (1/b_n) log p = {e.normalized:.3f}"
          f"  CI [{e.normalized_ci[0]:.3f}, {e.normalized_ci[1]:.3f}]  limit {e.theory:.3f}")

up, lo = lil_envelopes(lazy, kappa)
t = lil_trace(lazy, 1 << 16, seed=3)
print(f"\nLIL envelopes: upper {up:.3f}, lower {lo:.3f}")
print(f"one path to n = 65536: largest upper ratio {max(t.upper):.3f}, smallest lower ratio {min(t.lower):.3f}")
