"""
Tangent majorants and the per-pixel shrink
==========================================

For g = phi(|y|) the solver replaces phi by its tangent at the current
anchor.  With powerP, phi is concave everywhere and the tangent lies above
g.  Log-sum is convex below 1/sqrt(mu), so there the tangent dips under g.
The w-update then solves a weighted shrink, checked here against a grid.
"""

import numpy as np

from cpalm.composite import CompositeTerm, EuclideanNormPsi, LogSum, PowerP, prox_shrink

rng = np.random.default_rng(0)
anchor = np.array([[1.0], [0.0]])

for phi in (PowerP(1.0, 0.5), LogSum(1.0), LogSum(1e-4)):
    term = CompositeTerm(phi, EuclideanNormPsi())
    y = rng.standard_normal((2, 5000)) * np.exp(rng.uniform(-5, 5, 5000))
    gap = term.pixel_majorant(y, np.broadcast_to(anchor, y.shape)) - term.pixel_values(y)
    print(f"{phi!r:28s} min(q - g) = {gap.min():+.3e}   share below g = {np.mean(gap < -1e-12):.2%}")

# shrink: argmin_w  ups*|w| + beta/2 |w - c|^2 has threshold ups/beta
ups, beta, c = 1.0, 2.0, np.array([1.2, -0.9])
w = prox_shrink(ups, c, beta)
a = np.linspace(-2, 2, 801)
A, B = np.meshgrid(a, a, indexing="ij")
obj = ups * np.hypot(A, B) + beta / 2 * ((A - c[0]) ** 2 + (B - c[1]) ** 2)
i = np.unravel_index(obj.argmin(), obj.shape)
print("shrink:", w, " grid:", np.array([A[i], B[i]]))
