"""Variable metrics for the proximal terms, with certified spectral bounds.

A metric is an SPD linear map acting on one block. Each metric carries a
lower bound on its smallest eigenvalue and an upper bound on its operator
norm; the solver needs both for its step-size rule and for the constants
of the descent and residual bounds.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional, Tuple

import numpy as np

from .blockspace import real_inner

logger = logging.getLogger(__name__)

__all__ = [
    "Metric",
    "IdentityMetric",
    "ScaledIdentityMetric",
    "DiagonalMetric",
    "ShiftedGramMetric",
    "ShiftedGramRule",
    "SpectralRadiusError",
    "weighted_norm_sq",
    "estimate_spectral_radius",
    "probe_metric",
    "SAFETY_FACTOR",
]

SAFETY_FACTOR = 1.01


class SpectralRadiusError(RuntimeError):
    """Power iteration failed to converge; ``last`` holds the last estimate."""

    def __init__(self, message, last, vector):
        super().__init__(message)
        self.last = last
        self.vector = vector


class Metric:
    """Base class: an SPD operator on a single block."""

    lambda_min_lower: float
    norm_upper: float

    def apply(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def scalar(self) -> Optional[float]:
        """The constant ``c`` if the metric is ``c * I``, else ``None``."""
        return None

    def step(self, L: float, gamma: float) -> Tuple[float, float, "Metric"]:
        """Step-size rule ``alpha = gamma * rho * L`` with
        ``rho = max(1, 1 / lambda_min)``.

        Returns ``(alpha, rho, metric)``.
        """
        rho = max(1.0, 1.0 / self.lambda_min_lower)
        return gamma * rho * L, rho, self


class IdentityMetric(Metric):
    lambda_min_lower = 1.0
    norm_upper = 1.0

    def apply(self, u):
        return u

    @property
    def scalar(self):
        return 1.0

    def __repr__(self):
        return "IdentityMetric()"


class ScaledIdentityMetric(Metric):
    def __init__(self, c: float):
        if not c > 0:
            raise ValueError(f"scale must be positive, got {c}")
        self.c = float(c)
        self.lambda_min_lower = self.c
        self.norm_upper = self.c

    def apply(self, u):
        return self.c * u

    @property
    def scalar(self):
        return self.c

    def __repr__(self):
        return f"ScaledIdentityMetric({self.c})"


class DiagonalMetric(Metric):
    """Elementwise positive weights."""

    def __init__(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise ValueError("diagonal metric needs strictly positive weights")
        self.d = d
        self.lambda_min_lower = float(d.min())
        self.norm_upper = float(d.max())

    def apply(self, u):
        return self.d * u


class ShiftedGramMetric(Metric):
    """``(delta / alpha) I - (lam / alpha) G`` with ``G = A^T A``.

    Scaled by ``alpha`` this is ``delta I - lam G``; for a quadratic
    fidelity ``(lam/2) ||A u - b||^2`` it cancels the curvature of the
    fidelity and turns the x-subproblem into an explicit gradient step.

    Parameters
    ----------
    delta, lam, alpha : float
        Shift, fidelity weight and step scale; ``delta > lam * rho_upper``.
    gram : callable
        ``u -> A^T A u``.
    rho_upper : float
        Certified upper bound on the spectral radius of ``A^T A``.
    """

    def __init__(self, delta: float, lam: float, alpha: float,
                 gram: Callable[[np.ndarray], np.ndarray], rho_upper: float):
        if min(delta, lam, alpha, rho_upper) <= 0:
            raise ValueError("delta, lam, alpha and rho_upper must be positive")
        if not delta > lam * rho_upper:
            raise ValueError(
                f"metric not SPD: delta={delta:g} must exceed "
                f"lam*rho={lam * rho_upper:g}")
        self.delta = float(delta)
        self.lam = float(lam)
        self.alpha = float(alpha)
        self.gram = gram
        self.rho_upper = float(rho_upper)
        self.lambda_min_lower = (self.delta - self.lam * self.rho_upper) / self.alpha
        self.norm_upper = self.delta / self.alpha

    def apply(self, u):
        return (self.delta * u - self.lam * self.gram(u)) / self.alpha

    def scaled_apply(self, u):
        """``alpha * apply(u)`` without the round trip through ``alpha``."""
        return self.delta * u - self.lam * self.gram(u)

    def __repr__(self):
        return (f"ShiftedGramMetric(delta={self.delta:g}, lam={self.lam:g}, "
                f"alpha={self.alpha:g})")


class ShiftedGramRule:
    """Builds the shifted-Gram metric for the current step.

    ``alpha_k A_k = delta I - lam G`` whatever ``alpha_k`` is, so the rule
    only has to pick ``alpha_k = gamma * rho * L`` consistently with
    ``rho = max(1, 1/lambda_min(A_k))``. With ``rho = 1`` this holds iff
    ``delta - lam * rho_upper >= gamma * L``; other values of ``rho`` have
    no consistent fixed point, so that case is rejected.
    """

    def __init__(self, delta: float, lam: float,
                 gram: Callable[[np.ndarray], np.ndarray], rho_upper: float):
        if not delta > lam * rho_upper:
            raise ValueError(
                f"shifted-Gram metric not SPD: delta={delta:g} must exceed "
                f"lam*rho_hat={lam * rho_upper:g}")
        self.delta = float(delta)
        self.lam = float(lam)
        self.gram = gram
        self.rho_upper = float(rho_upper)

    @property
    def margin(self) -> float:
        return self.delta - self.lam * self.rho_upper

    def step(self, L: float, gamma: float):
        alpha = gamma * L
        if alpha > self.margin:
            raise ValueError(
                f"delta={self.delta:g} too small: need delta >= lam*rho_hat + "
                f"gamma*L = {self.lam * self.rho_upper + alpha:g}")
        metric = ShiftedGramMetric(self.delta, self.lam, alpha, self.gram,
                                   self.rho_upper)
        return alpha, 1.0, metric


def weighted_norm_sq(m: Metric, u: np.ndarray) -> float:
    """``<u, M u>``, clipped at zero against round-off."""
    return max(real_inner(u, m.apply(u)), 0.0)


def estimate_spectral_radius(op: Callable[[np.ndarray], np.ndarray], shape,
                             tol: float = 1e-6, max_iter: int = 500,
                             seed: int = 0, dtype=complex,
                             inflate: float = SAFETY_FACTOR) -> float:
    """Power iteration for a self-adjoint PSD operator.

    Returns the Rayleigh-quotient estimate multiplied by ``inflate``, since
    the raw estimate is a lower bound and callers need an upper bound.

    Raises
    ------
    SpectralRadiusError
        If the relative change is still above ``tol`` after ``max_iter``
        iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    if np.issubdtype(np.dtype(dtype), np.complexfloating):
        x = x + 1j * rng.standard_normal(shape)
    x = x / np.linalg.norm(x)
    r_old = None
    r = 0.0
    for it in range(max_iter):
        y = op(x)
        r = real_inner(x, y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        if r_old is not None and abs(r - r_old) <= tol * abs(r):
            logger.debug("power iteration converged in %d iterations", it + 1)
            return inflate * r
        r_old = r
        x = y / ny
    raise SpectralRadiusError(
        f"power iteration did not reach tol={tol:g} in {max_iter} iterations",
        last=r, vector=x)


def probe_metric(m: Metric, shape, n_probes: int = 20, seed: int = 0,
                 dtype=float, rtol: float = 1e-8) -> None:
    """Randomized checks of symmetry, positivity and the norm bound.

    Raises ``ValueError`` on the first violated probe.
    """
    rng = np.random.default_rng(seed)
    cplx = np.issubdtype(np.dtype(dtype), np.complexfloating)

    def draw():
        u = rng.standard_normal(shape)
        return u + 1j * rng.standard_normal(shape) if cplx else u

    for _ in range(n_probes):
        u, v = draw(), draw()
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        Mu, Mv = m.apply(u), m.apply(v)
        if abs(real_inner(Mu, v) - real_inner(u, Mv)) > rtol * nu * nv * max(1.0, m.norm_upper):
            raise ValueError("metric is not self-adjoint")
        if real_inner(u, Mu) < m.lambda_min_lower * nu**2 * (1 - rtol):
            raise ValueError("metric violates its lambda_min lower bound")
        if np.linalg.norm(Mu) > m.norm_upper * nu * (1 + rtol):
            raise ValueError("metric violates its norm upper bound")
