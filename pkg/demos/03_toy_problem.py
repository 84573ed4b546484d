"""
A two-variable toy
==================

Minimize (x-1)^2/2 + log(1+y^2)/2 + (y-x)^2/2 with the single-block solver
and watch the objective, increments and certified residual shrink.  The
stationary point solves y^3 - y^2 + 3y - 1 = 0 with x = (1+y)/2.
"""

import numpy as np

from cpalm.blockspace import BlockVector
from cpalm.composite import CompositeTerm, EuclideanNormPsi, LogSum
from cpalm.coupling import Coupling
from cpalm.solver import Problem, SmoothTerm, SolverConfig, run_cpalm

f = SmoothTerm(lambda x: 0.5 * float(np.sum((x - 1) ** 2)), lambda x: x - 1,
               lambda a, lin, alpha, m: (1 - lin + alpha * a) / (1 + alpha))
g = CompositeTerm(LogSum(1.0), EuclideanNormPsi())
H = Coupling(lambda z: 0.5 * float(np.sum((z[1] - z[0]) ** 2)),
             [lambda z: z[0] - z[1], lambda z: z[1] - z[0]],
             [lambda z: 1.0, lambda z: 1.0])
problem = Problem(f, [g], H, BlockVector([np.array([-2.0]), np.array([2.5])]))

z, trace, status = run_cpalm(problem, SolverConfig(max_iter=200, tol_residual=1e-10))
for r in trace[:5] + trace[-2:]:
    print(f"k={r.k:3d}  F={r.objective:.10f}  |dz|={r.increment:.2e}  res={r.residual:.2e}")
print(status, "at", z[0][0], z[1][0])

roots = np.roots([1, -1, 3, -1])
y = roots[np.abs(roots.imag) < 1e-12].real[0]
print("closed form:", (1 + y) / 2, y)
