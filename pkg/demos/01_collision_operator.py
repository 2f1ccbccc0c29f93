"""
The discrete collision operator
===============================

Build the linearized hard-sphere operator on a coarse grid, look at its
spectrum and check the structural facts the solver relies on.
"""
import numpy as np

from boltzlayer.collision import build_K, collision_frequency, fit_kernel_decay, null_space_basis
from boltzlayer.velocity import build_grid

# a coarse grid keeps the build to a few seconds; results are cached on disk
grid = build_grid(8, 5.0)
op = build_K(grid)
print(f"{grid.size} velocity nodes, quadrature fallback rate {op.fallback_rate:.3f}")

# nu grows like |v| for hard spheres
speed = np.sqrt(grid.speed2)
nu = op.nu
for i in sorted({int(np.argmin(np.abs(speed - s))) for s in (0.5, 2.0, 3.0, 4.5)}, key=speed.__getitem__):
    print(f"|v| = {speed[i]:.2f}  nu = {nu[i]:.3f}  nu / sqrt(1+|v|^2) = {nu[i] / np.sqrt(1 + speed[i]**2):.3f}")

# five conserved quantities give five zero eigenvalues, the rest are a gap
lam, _ = op.spectrum
print("smallest eigenvalues:", np.round(lam[:7], 6))

B = null_space_basis(grid)
print("max |L psi| / |psi|:", np.max(np.linalg.norm(B @ op.L.T, axis=1) / np.linalg.norm(B, axis=1)))

# the kernel of K decays like exp(-rho |v-u|^2) / |v-u|; fit the largest rho
print(f"fitted kernel decay rho = {fit_kernel_decay(op):.3f}")
