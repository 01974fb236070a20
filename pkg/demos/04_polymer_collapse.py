"""Self-attracting polymer: B_n / n and end-to-end distance across zeta.

The measure exp(zeta B_n / n) dP rewards self-intersections.  For small zeta
the path looks diffusive; once zeta is large enough the path folds onto a
few sites, B_n / n grows roughly linearly in n and the mean squared end-to-end
distance drops.
"""
from siltlab import walk
from siltlab.polymer import collapse_sweep

lazy = walk.preset("lazy")
rows = collapse_sweep(lazy, 32, [0.0, 0.5, 1.0, 2.0], sweeps=200, seed=5, chains=32)
print(" zeta   B_n/n          msd      accept")
for r in rows:
    print(f"{r.zeta:5.1f}  {r.mean_B_over_n:7.3f}+-{r.se_B:.3f}  {r.msd:7.2f}  {r.acceptance_rate:.3f}")
