"""CPALM and Multi-CPALM drivers.

One outer iteration updates ``x`` by a linearized proximal step under the
metric ``A_k`` and then each composite block ``y_j`` by a proximal step on
the tangent majorant of ``g_j`` under ``B_k^j``:

    alpha_k = gamma1 * rho1 * L1,      rho1 = max(1, 1/lambda_min(A_k))
    x+  = argmin f(x) + <grad_x H, x - x_k> + alpha_k/2 ||x - x_k||_{A_k}^2
    beta_k^j = gamma2 * rho2 * L2^j,   rho2 = max(1, 1/lambda_min(B_k^j))
    y_j+ = argmin Ups_j psi_j(y) + <grad_j H, y - y_j> + beta/2 ||y - y_j||_{B}^2

with ``Ups_j = phi_j'(psi_j(y_j))``. By default the coupling gradient of
block ``j`` is taken at the partially updated point (Gauss-Seidel); set
``gauss_seidel=False`` to take it at the start-of-iteration point.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse.linalg as spla

from .blockspace import BlockVector, triple_norm
from .composite import CompositeTerm
from .coupling import Coupling, empirical_gradient_lipschitz
from .linops import LinOp
from .metrics import IdentityMetric, Metric, ShiftedGramMetric, ShiftedGramRule

logger = logging.getLogger(__name__)

__all__ = [
    "SmoothTerm",
    "QuadraticFidelity",
    "Problem",
    "SolverConfig",
    "IterateRecord",
    "RunResult",
    "SolverError",
    "DivergenceError",
    "DescentViolation",
    "cpalm_step",
    "subgrad_residual",
    "run_cpalm",
    "run_multi_cpalm",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_COLUMNS",
    "descent_constant",
    "residual_bound_constant",
]

TRACE_COLUMNS = ("k", "F", "increment", "residual", "alpha", "beta", "wall_ms")


class SolverError(RuntimeError):
    """Carries the offending record and the state at failure."""

    def __init__(self, message, record=None, state=None, trace=None):
        super().__init__(message)
        self.record = record
        self.state = state
        self.trace = trace if trace is not None else []


class DivergenceError(SolverError):
    pass


class DescentViolation(SolverError):
    pass


class SmoothTerm:
    """The x-block term ``f``.

    Parameters
    ----------
    value : callable
    gradient : callable, optional
        Needed for the explicit shifted-Gram update.
    prox : callable, optional
        ``prox(anchor, lin, alpha, metric)`` returning
        ``argmin_x f(x) + <lin, x - anchor> + alpha/2 ||x - anchor||_metric^2``.
    """

    def __init__(self, value: Callable, gradient: Optional[Callable] = None,
                 prox: Optional[Callable] = None):
        self._value = value
        self._gradient = gradient
        self._prox = prox

    def value(self, x) -> float:
        return float(self._value(x))

    @property
    def has_gradient(self) -> bool:
        return self._gradient is not None

    def gradient(self, x):
        if self._gradient is None:
            raise NotImplementedError("this smooth term has no gradient")
        return self._gradient(x)

    def prox_under_metric(self, anchor, lin, alpha, metric):
        if self._prox is None:
            raise NotImplementedError("this smooth term has no proximal oracle")
        return self._prox(anchor, lin, alpha, metric)


class QuadraticFidelity(SmoothTerm):
    """``f(x) = lam/2 ||A x - b||^2``."""

    def __init__(self, op: LinOp, data, lam: float = 1.0, cg_rtol: float = 1e-13,
                 cg_maxiter: int = 2000):
        if not lam > 0:
            raise ValueError(f"lam must be positive, got {lam}")
        self.op = op
        self.data = np.asarray(data)
        self.lam = float(lam)
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        super().__init__(self._val, self._grad, self._prox_cg)

    @property
    def gram(self):
        return self.op.gram

    def _val(self, x):
        r = self.op.forward(x) - self.data
        return 0.5 * self.lam * float(np.real(np.vdot(r, r)))

    def _grad(self, x):
        return self.lam * self.op.adjoint(self.op.forward(x) - self.data)

    def _prox_cg(self, anchor, lin, alpha, metric):
        """Solve ``(lam A^T A + alpha M) x = lam A^T b - lin + alpha M anchor``
        by conjugate gradients."""
        shape = anchor.shape
        dtype = np.result_type(anchor, self.data, lin, float)
        rhs = self.lam * self.op.adjoint(self.data) - lin + alpha * metric.apply(anchor)

        def mv(v):
            v = v.reshape(shape)
            return (self.lam * self.op.gram(v) + alpha * metric.apply(v)).ravel()

        n = anchor.size
        K = spla.LinearOperator((n, n), matvec=mv, dtype=dtype)
        sol, info = spla.cg(K, rhs.ravel().astype(dtype), x0=anchor.ravel().astype(dtype),
                            rtol=self.cg_rtol, atol=0.0, maxiter=self.cg_maxiter)
        if info != 0:
            raise SolverError(f"x-subproblem CG did not converge (info={info})")
        return sol.reshape(shape)


XMetric = Union[Metric, ShiftedGramRule]


@dataclass
class Problem:
    """Everything the drivers need: ``F = f(x) + sum_j g_j(y_j) + H(x, y)``.

    ``beta`` fixes ``beta_k`` for every block instead of the
    ``gamma2 * rho2 * L2`` rule.
    """

    f: SmoothTerm
    g: Sequence[CompositeTerm]
    H: Coupling
    z0: BlockVector
    x_metric: XMetric = field(default_factory=IdentityMetric)
    y_metrics: Optional[Sequence[Metric]] = None
    beta: Optional[float] = None

    def __post_init__(self):
        self.g = list(self.g)
        if len(self.z0) != len(self.g) + 1:
            raise ValueError(f"z0 has {len(self.z0)} blocks, expected 1 + {len(self.g)}")
        if self.H.num_blocks != len(self.z0):
            raise ValueError("coupling block count does not match z0")
        if self.y_metrics is None:
            self.y_metrics = [IdentityMetric() for _ in self.g]
        self.y_metrics = list(self.y_metrics)
        for B in self.y_metrics:
            if B.scalar is None:
                raise ValueError("y-metrics must be multiples of the identity")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta override must be positive")

    @property
    def num_y_blocks(self) -> int:
        return len(self.g)

    def objective(self, z: BlockVector) -> float:
        return (self.f.value(z[0]) + sum(gj.value(yj) for gj, yj in zip(self.g, z.blocks[1:]))
                + self.H.value(z))


@dataclass
class SolverConfig:
    """Solver knobs.

    ``tol_residual=None`` means ``1e-6`` times the first residual.
    """

    gamma1: float = 1.1
    gamma2: Union[float, Sequence[float]] = 1.1
    max_iter: int = 1000
    tol_residual: Optional[float] = None
    tol_increment: float = 0.0
    descent_check: bool = True
    descent_rtol: float = 1e-10
    gauss_seidel: bool = True
    rel_tol_residual: float = 1e-6

    def __post_init__(self):
        if not self.gamma1 > 1:
            raise ValueError(f"gamma1 must exceed 1, got {self.gamma1}")
        for g2 in np.atleast_1d(self.gamma2):
            if not g2 > 1:
                raise ValueError(f"gamma2 must exceed 1, got {g2}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.tol_residual is not None and self.tol_residual < 0:
            raise ValueError("tol_residual must be nonnegative")
        if self.tol_increment < 0:
            raise ValueError("tol_increment must be nonnegative")

    def gamma2_for(self, j: int) -> float:
        g2 = np.atleast_1d(self.gamma2)
        return float(g2[j] if g2.size > 1 else g2[0])


@dataclass
class IterateRecord:
    """Snapshot of the step ``z^k -> z^{k+1}``; ``objective`` is ``F(z^{k+1})``."""

    k: int
    objective: float
    objective_prev: float
    increment: float
    residual: float
    alpha: float
    beta: float
    wall_time: float
    x_increment: float = 0.0
    y_increments: List[float] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)
    L1: float = 0.0
    L2: List[float] = field(default_factory=list)
    rho1: float = 1.0
    rho2: List[float] = field(default_factory=list)
    a_min: float = 1.0
    a_norm: float = 1.0
    b_min: List[float] = field(default_factory=list)
    b_norm: List[float] = field(default_factory=list)
    gamma1: float = 1.0
    gamma2: List[float] = field(default_factory=list)

    def csv_row(self):
        return [self.k, self.objective, self.increment, self.residual, self.alpha,
                self.beta, self.wall_time * 1e3]


@dataclass
class RunResult:
    z: BlockVector
    trace: List[IterateRecord]
    status: str

    def __iter__(self):
        return iter((self.z, self.trace, self.status))


@dataclass
class _StepData:
    alpha: float
    A: Metric
    betas: List[float]
    Bs: List[Metric]
    grad_x: np.ndarray
    grads_y: List[np.ndarray]


def _x_update(f: SmoothTerm, x, grad_x, alpha, A):
    if (isinstance(A, ShiftedGramMetric) and isinstance(f, QuadraticFidelity)
            and A.lam == f.lam and A.gram == f.gram):
        # alpha A = delta I - lam A^T A cancels the fidelity curvature
        return x - (f.gradient(x) + grad_x) / A.delta
    return f.prox_under_metric(x, grad_x, alpha, A)


def _step(problem: Problem, z: BlockVector, cfg: SolverConfig, k: int):
    H = problem.H
    x = z[0]
    L1 = H.lipschitz(0, z)
    alpha, rho1, A = problem.x_metric.step(L1, cfg.gamma1)
    grad_x = H.grad(0, z)
    x_new = _x_update(problem.f, x, grad_x, alpha, A)
    cur = z.replace(0, x_new)

    rec = dict(L1=L1, rho1=rho1, a_min=A.lambda_min_lower, a_norm=A.norm_upper,
               gamma1=alpha / (rho1 * L1) if L1 > 0 else cfg.gamma1,
               betas=[], L2=[], rho2=[], b_min=[], b_norm=[], gamma2=[])
    grads_y, Bs = [], []
    for j, (gj, Bj) in enumerate(zip(problem.g, problem.y_metrics)):
        i = j + 1
        at = cur if cfg.gauss_seidel else z
        L2 = H.lipschitz(i, at)
        if problem.beta is None:
            beta, rho2, B = Bj.step(L2, cfg.gamma2_for(j))
        else:
            beta, B = problem.beta, Bj
            rho2 = max(1.0, 1.0 / B.lambda_min_lower)
        g2_eff = beta / (rho2 * L2) if L2 > 0 else cfg.gamma2_for(j)
        grad_y = H.grad(i, at)
        yj = z[i]
        ups = gj.upsilon(yj)
        step = beta * B.scalar
        y_new = gj.prox(ups, yj - grad_y / step, step)
        cur = cur.replace(i, y_new)
        grads_y.append(grad_y)
        Bs.append(B)
        rec["betas"].append(beta)
        rec["L2"].append(L2)
        rec["rho2"].append(rho2)
        rec["b_min"].append(B.lambda_min_lower)
        rec["b_norm"].append(B.norm_upper)
        rec["gamma2"].append(g2_eff)
    return cur, rec, _StepData(alpha, A, rec["betas"], Bs, grad_x, grads_y)


def _scaled_metric(A: Metric, alpha: float, v):
    if isinstance(A, ShiftedGramMetric):
        return A.scaled_apply(v)
    return alpha * A.apply(v)


def subgrad_residual(z: BlockVector, z_new: BlockVector, g: Sequence[CompositeTerm],
                     H: Coupling, A: Metric, Bs: Sequence[Metric], alpha: float,
                     betas: Sequence[float], gauss_seidel: bool = True,
                     return_parts: bool = False):
    """Norm of the certified subgradient ``(d_x, d_y)`` of ``F`` at ``z_new``.

    ``d_x = grad_x H(z+) - grad_x H(z) + alpha A (x - x+)`` and, per block,
    ``d_y = (Ups(y+) - Ups(y)) w+ + beta B (y - y+) + grad_y H(z+) - grad_y H(at)``
    where ``at`` is the point the step used and ``w+`` is the subgradient
    of ``psi`` realized by the proximal step.
    """
    d_x = H.grad(0, z_new) - H.grad(0, z) + _scaled_metric(A, alpha, z[0] - z_new[0])
    d_ys = []
    cur = z.replace(0, z_new[0])
    for j, gj in enumerate(g):
        i = j + 1
        at = cur if gauss_seidel else z
        grad_at = H.grad(i, at)
        y, y_new = z[i], z_new[i]
        beta_B_dy = betas[j] * Bs[j].apply(y_new - y)
        ups_old = gj.upsilon(y)
        ups_old_arr = np.asarray(ups_old, dtype=float)
        # optimality: ups_old * w + grad_at + beta B (y+ - y) = 0
        fallback = np.divide(-(grad_at + beta_B_dy), ups_old_arr,
                             out=np.zeros_like(beta_B_dy), where=ups_old_arr > 0)
        w = gj.subgradient(y_new, fallback)
        d_y = ((np.asarray(gj.upsilon(y_new)) - ups_old_arr) * w - beta_B_dy
               + H.grad(i, z_new) - grad_at)
        d_ys.append(d_y)
        cur = cur.replace(i, y_new)
    d = BlockVector([d_x] + d_ys)
    nrm = triple_norm(d)
    return (nrm, d) if return_parts else nrm


def cpalm_step(problem: Problem, z: BlockVector, cfg: SolverConfig, k: int = 0,
               objective_prev: Optional[float] = None, t0: Optional[float] = None):
    """One outer iteration. Returns ``(z_new, IterateRecord)``."""
    t0 = time.perf_counter() if t0 is None else t0
    F_prev = problem.objective(z) if objective_prev is None else objective_prev
    z_new, rec, data = _step(problem, z, cfg, k)
    F_new = problem.objective(z_new)
    dz = z_new - z
    norms = dz.block_norms()
    res = subgrad_residual(z, z_new, problem.g, problem.H, data.A, data.Bs, data.alpha,
                           data.betas, cfg.gauss_seidel)
    record = IterateRecord(
        k=k, objective=F_new, objective_prev=F_prev, increment=float(np.sqrt(np.sum(norms**2))),
        residual=res, alpha=data.alpha, beta=data.betas[0] if data.betas else 0.0,
        wall_time=time.perf_counter() - t0, x_increment=float(norms[0]),
        y_increments=[float(v) for v in norms[1:]], **rec)
    return z_new, record


def run_multi_cpalm(problem: Problem, cfg: Optional[SolverConfig] = None,
                    callback: Optional[Callable] = None) -> RunResult:
    """Run Multi-CPALM from ``problem.z0``.

    Stops when the residual drops to the tolerance, the increment drops to
    ``tol_increment``, or after ``max_iter`` steps.

    Raises
    ------
    DivergenceError
        Non-finite objective.
    DescentViolation
        ``F`` increased by more than ``descent_rtol * (1 + |F|)`` while
        ``descent_check`` is on.
    """
    cfg = SolverConfig() if cfg is None else cfg
    z = problem.z0.copy()
    F = problem.objective(z)
    if not np.isfinite(F):
        raise DivergenceError("initial objective is not finite", state=z)
    trace: List[IterateRecord] = []
    tol_res = cfg.tol_residual
    t0 = time.perf_counter()
    status = "max_iter"
    for k in range(cfg.max_iter):
        z_new, rec = cpalm_step(problem, z, cfg, k, F, t0)
        if not np.isfinite(rec.objective):
            raise DivergenceError(f"objective not finite at iteration {k}", rec, z, trace)
        trace.append(rec)
        if cfg.descent_check and rec.objective > F + cfg.descent_rtol * (1 + abs(F)):
            raise DescentViolation(
                f"objective increased at iteration {k}: {F!r} -> {rec.objective!r}",
                rec, z_new, trace)
        z, F = z_new, rec.objective
        if callback is not None:
            callback(z, rec)
        if tol_res is None:
            tol_res = cfg.rel_tol_residual * rec.residual
        if rec.residual <= tol_res:
            status = "converged_residual"
            break
        if rec.increment <= cfg.tol_increment:
            status = "converged_increment"
            break
    logger.info("stopped after %d iterations: %s", len(trace), status)
    return RunResult(z, trace, status)


def run_cpalm(problem: Problem, cfg: Optional[SolverConfig] = None,
              callback: Optional[Callable] = None) -> RunResult:
    """Two-block CPALM; ``problem`` must have exactly one composite block."""
    if problem.num_y_blocks != 1:
        raise ValueError("run_cpalm takes one composite block; use run_multi_cpalm")
    return run_multi_cpalm(problem, cfg, callback)


def descent_constant(trace: Sequence[IterateRecord]) -> float:
    """``min{lam1- rho1 a_ (g1 - 1), lam2- rho2 b_ (g2 - 1)}`` from the trace."""
    if not trace:
        raise ValueError("empty trace")
    lam1 = min(r.L1 for r in trace)
    rho1 = min(r.rho1 for r in trace)
    a_lo = min(r.a_min for r in trace)
    g1 = min(r.gamma1 for r in trace)
    cands = [lam1 * rho1 * a_lo * (g1 - 1)]
    for j in range(len(trace[0].betas)):
        lam2 = min(r.L2[j] for r in trace)
        rho2 = min(r.rho2[j] for r in trace)
        b_lo = min(r.b_min[j] for r in trace)
        g2 = min(r.gamma2[j] for r in trace)
        cands.append(lam2 * rho2 * b_lo * (g2 - 1))
    return min(cands)


def residual_bound_constant(problem: Problem, trace: Sequence[IterateRecord],
                            z_ref: BlockVector, radius: float, n_pairs: int = 200,
                            seed: int = 0, observed_M: float = 0.0) -> dict:
    """Constants of the residual bound ``(2M + mu nu + 3 xi)``.

    ``M`` is the larger of ``observed_M`` and the empirical gradient
    Lipschitz ratio over random pairs in a box around ``z_ref``; ``mu`` and
    ``nu`` come from the composite terms; ``xi`` from the recorded metrics.
    """
    M = max(observed_M, empirical_gradient_lipschitz(problem.H, z_ref, radius,
                                                     n_pairs, seed))
    mu = max(gj.upsilon_lipschitz() for gj in problem.g)
    nu = max(gj.psi.nu for gj in problem.g)
    a_bar = max(r.a_norm for r in trace)
    xi_x = a_bar * max(r.gamma1 for r in trace) * max(r.rho1 for r in trace) \
        * max(r.L1 for r in trace)
    xi = xi_x
    for j in range(len(trace[0].betas)):
        b_bar = max(r.b_norm[j] for r in trace)
        xi = max(xi, b_bar * max(r.gamma2[j] for r in trace)
                 * max(r.rho2[j] for r in trace) * max(r.L2[j] for r in trace))
    return dict(M=M, mu=mu, nu=nu, xi=xi, C=2 * M + mu * nu + 3 * xi)


def write_trace_csv(trace: Sequence[IterateRecord], path) -> None:
    """CSV with a header row; floats written in shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in rec.csv_row()])


def read_trace_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "k" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]

