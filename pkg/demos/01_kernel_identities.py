"""Kernel constants and spectral identities, end to end.

Walks through the closed-form Riesz kernel norms against brute quadrature,
the approximate-identity behavior of the kernel as its order shrinks, and
the exact skew-adjointness of the spectral gradient/divergence pair.
"""

import numpy as np
from scipy.integrate import quad

from fracmk import (
    GridSpec,
    ScalarField,
    VectorField,
    adjointness_residual,
    bump,
    gamma_coeff,
    interval,
    kernel_norm_ball,
    kernel_norm_tail,
    riesz_convolve,
    sphere_area,
)

print("== closed-form kernel norms vs adaptive quadrature ==")
for d, alpha, R in [(1, 0.5, 1.0), (2, 0.3, 1.5)]:
    closed = kernel_norm_ball(d, alpha, R)
    oracle = quad(lambda r: sphere_area(d) * gamma_coeff(d, alpha) * r ** (alpha - 1), 0, R)[0]
    print(f"  ball  d={d} alpha={alpha} R={R}: closed {closed:.10f}  quadrature {oracle:.10f}")
for d, alpha, p, R in [(1, 0.25, 2.0, 1.0)]:
    pp = p / (p - 1)
    closed = kernel_norm_tail(d, alpha, p, R)
    oracle = quad(
        lambda r: sphere_area(d) * (gamma_coeff(d, alpha) * r ** (alpha - d)) ** pp * r ** (d - 1),
        R, np.inf,
    )[0] ** (1 / pp)
    print(f"  tail  d={d} alpha={alpha} p={p} R={R}: closed {closed:.10f}  quadrature {oracle:.10f}")

print("\n== the kernel is an approximate identity as its order -> 0 ==")
grid = GridSpec(dim=1, box_side=8.0, points_per_axis=512, omega=interval(1.0), buffer=1.0)
w = bump(grid)
print("  ball norm -> 1:", [round(kernel_norm_ball(1, a, 1.0), 4) for a in (0.4, 0.2, 0.1, 0.05)])
for alpha in (0.4, 0.2, 0.1, 0.05):
    err = np.max(np.abs(riesz_convolve(w, alpha).values - w.values))
    print(f"  alpha={alpha:4}: ||I_alpha * w - w||_inf = {err:.4f}")

print("\n== integration by parts is exact for the spectral pair ==")
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(20):
    u = ScalarField(grid, rng.normal(size=grid.shape))
    xi = VectorField(grid, rng.normal(size=(1,) + grid.shape))
    worst = max(worst, adjointness_residual(u, xi, rng.uniform(0.2, 1.0)))
print(f"  worst relative residual over 20 random pairs: {worst:.2e}")
