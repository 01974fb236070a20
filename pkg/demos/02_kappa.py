"""The sharp Gagliardo-Nirenberg constant kappa, computed two ways.

Shooting on the radial equation Q'' + Q'/r - Q + Q^3 = 0 gives
kappa = (2 / ||Q||_2^2)^(1/4).  Independently, projected gradient ascent of
theta ||g||_4^2 - ||grad g||_2^2 / 2 over unit L^2 functions on a grid gives
kappa = (2 max F)^(1/4) theta^(-1/2).  The two should agree to about 1e-4.
"""
from siltlab.variational import cross_validate, gaussian_trial, gn_ratio, solve_kappa_grid, solve_kappa_ode

ode = solve_kappa_ode()
print(f"shooting: Q(0) = {ode.params['q0']:.10f}, ||Q||^2 = {ode.params['mass']:.8f}, kappa = {ode.kappa:.10f}")

grid = solve_kappa_grid(h=0.1, L=40.0, n_random=0)
print(f"grid:     kappa = {grid.kappa:.6f} after {grid.iterations} iterations")
print(f"relative difference {cross_validate(grid, ode):.2e}")

# any trial function gives a lower bound; the Gaussian is close but not optimal
g = gaussian_trial(0.05, 20.0)
print(f"Gaussian ratio {gn_ratio(g):.6f} (continuum value (2 pi)^(-1/4) = {(2 * 3.141592653589793) ** -0.25:.6f})")
