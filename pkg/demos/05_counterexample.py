"""A lazy walk with long jumps, and why its deviation event is empty at small n.

The walk stays put with probability 1 - eps and otherwise jumps N sites along
an axis, with eps = 2 / N^2 so that det Gamma = 1.  On the event that it never
moves, B_n = n(n-1)/2, which gives P(gamma_n > n b_n / 2) >= (1 - eps)^n as
soon as that event lies inside the deviation event.  The inclusion needs
E B_n < n(eps n - 1)/2, which only happens once n is in the thousands.
"""
from siltlab import walk
from siltlab.deviations import all_stay_probability, remark_event_check, remark_moment_check

cx = walk.counterexample_walk(10)
print(f"eps = {1 - all_stay_probability(cx, 1):.3f}, det Gamma = {cx.det_gamma:.3f}, strongly aperiodic = {cx.strongly_aperiodic}")
for n in (64, 1024, 11171, 11172):
    r = remark_event_check(cx, n)
    print(f"n={n:6d}  E B_n={r['expected_silt']:12.1f}  threshold={r['threshold']:14.1f}"
          f"  max B_n={r['max_silt']:12.0f}  inclusion={r['inclusion_holds']}")

m = remark_moment_check(cx, 64, trials=2000, seed=0)
print(f"\nn=64 moment check: E exp(gamma/n) ~ {m['lhs_mc']:.1f} >= {m['rhs']:.1f}: {m['all_hold']}")
