"""Variable-metric composite proximal alternating linearized minimization.

Solvers for ``min f(x) + sum_j phi_j(psi_j(y_j)) + H(x, y)`` with concave
``phi_j`` and convex ``psi_j``, plus parallel-MRI reconstruction models
built on them.
"""

from .blockspace import BlockVector, axpy, inner, triple_norm
from .composite import (CompositeTerm, CustomPhi, EuclideanNormPsi, IdentityPhi, LogSum,
                        PowerP, ZeroPsi, prox_shrink, shrink)
from .coupling import Coupling, QuadraticCoupling
from .linops import FiniteDifference2D, LinOp, PmriOperator, UnitaryFFT2
from .metrics import (DiagonalMetric, IdentityMetric, ScaledIdentityMetric,
                      ShiftedGramMetric, ShiftedGramRule, estimate_spectral_radius,
                      weighted_norm_sq)
from .solver import (DescentViolation, DivergenceError, IterateRecord, Problem,
                     QuadraticFidelity, SmoothTerm, SolverConfig, cpalm_step, run_cpalm,
                     run_multi_cpalm, subgrad_residual)

__version__ = "0.1.0"

__all__ = [
    "BlockVector", "axpy", "inner", "triple_norm",
    "CompositeTerm", "CustomPhi", "EuclideanNormPsi", "IdentityPhi", "LogSum", "PowerP",
    "ZeroPsi", "prox_shrink", "shrink",
    "Coupling", "QuadraticCoupling",
    "FiniteDifference2D", "LinOp", "PmriOperator", "UnitaryFFT2",
    "DiagonalMetric", "IdentityMetric", "ScaledIdentityMetric", "ShiftedGramMetric",
    "ShiftedGramRule", "estimate_spectral_radius", "weighted_norm_sq",
    "DescentViolation", "DivergenceError", "IterateRecord", "Problem", "QuadraticFidelity",
    "SmoothTerm", "SolverConfig", "cpalm_step", "run_cpalm", "run_multi_cpalm",
    "subgrad_residual",
]
