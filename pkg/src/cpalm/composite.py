"""Composite penalties ``g = phi o psi`` and their tangent majorants.

``phi`` is concave and increasing on ``[0, inf)``, ``psi`` is convex and
Lipschitz. Replacing ``phi`` by its tangent at ``psi(anchor)`` gives the
majorant

    q(y, anchor) = g(anchor) + Upsilon(anchor) * (psi(y) - psi(anchor)),
    Upsilon(anchor) = phi'(psi(anchor)),

so each y-subproblem only needs the proximal map of a weighted ``psi``.

Pixel convention: a field of small vectors is stored with the vector
components on axis 0, e.g. ``(2, M, N)`` for an image gradient; ``psi`` maps
it to an ``(M, N)`` array of per-pixel values. A single vector ``(2,)`` maps
to a 0-d value.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

__all__ = [
    "OuterPhi",
    "LogSum",
    "PowerP",
    "IdentityPhi",
    "CustomPhi",
    "InnerPsi",
    "EuclideanNormPsi",
    "ZeroPsi",
    "CompositeTerm",
    "shrink",
    "prox_shrink",
    "DEFAULT_EPS_CLAMP",
]

DEFAULT_EPS_CLAMP = 1e-8


class OuterPhi:
    """Concave, increasing outer function."""

    kind = "custom"

    def value(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def deriv_lipschitz(self, t_min: float = 0.0) -> float:
        """Upper bound on ``|phi''|`` over ``[t_min, inf)``."""
        raise NotImplementedError


class LogSum(OuterPhi):
    """``phi(t) = log(1 + mu t^2) / (2 mu)``."""

    kind = "logSum"

    def __init__(self, mu: float):
        if not mu > 0:
            raise ValueError(f"mu must be positive, got {mu}")
        self.mu = float(mu)

    def value(self, t):
        return np.log1p(self.mu * np.square(t)) / (2 * self.mu)

    def deriv(self, t):
        return t / (1 + self.mu * np.square(t))

    def deriv_lipschitz(self, t_min=0.0):
        # |phi''(t)| = |1 - mu t^2| / (1 + mu t^2)^2 peaks at t = 0
        return 1.0

    def __repr__(self):
        return f"LogSum(mu={self.mu:g})"


class PowerP(OuterPhi):
    """``phi(t) = theta t^p`` with ``0 < p <= 1``."""

    kind = "powerP"

    def __init__(self, theta: float, p: float):
        if not theta > 0:
            raise ValueError(f"theta must be positive, got {theta}")
        if not 0 < p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {p}")
        self.theta = float(theta)
        self.p = float(p)

    def value(self, t):
        return self.theta * np.power(t, self.p)

    def deriv(self, t):
        if self.p == 1.0:
            return self.theta * np.ones_like(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore"):
            return self.theta * self.p * np.power(t, self.p - 1)

    def deriv_lipschitz(self, t_min=0.0):
        if self.p == 1.0:
            return 0.0
        if t_min <= 0:
            return np.inf
        return self.theta * self.p * (1 - self.p) * t_min ** (self.p - 2)

    def __repr__(self):
        return f"PowerP(theta={self.theta:g}, p={self.p:g})"


class IdentityPhi(OuterPhi):
    kind = "identity"

    def value(self, t):
        return np.asarray(t, dtype=float)

    def deriv(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def deriv_lipschitz(self, t_min=0.0):
        return 0.0


class CustomPhi(OuterPhi):
    """Wraps user callables; ``deriv_lip`` is optional."""

    def __init__(self, value: Callable, deriv: Callable,
                 deriv_lip: Optional[float] = None):
        self._value = value
        self._deriv = deriv
        self._deriv_lip = deriv_lip

    def value(self, t):
        return self._value(t)

    def deriv(self, t):
        return self._deriv(t)

    def deriv_lipschitz(self, t_min=0.0):
        if self._deriv_lip is None:
            raise NotImplementedError("no Lipschitz bound supplied for phi'")
        return self._deriv_lip


def shrink(t: np.ndarray, thresh) -> np.ndarray:
    """Vector shrinkage ``t / ||t|| * max(||t|| - thresh, 0)`` along axis 0.

    ``thresh`` is a scalar or a per-pixel array; ``0 / |0| = 0``.
    """
    t = np.asarray(t)
    nrm = np.sqrt(np.sum(np.abs(t) ** 2, axis=0))
    keep = np.maximum(nrm - thresh, 0.0)
    scale = np.divide(keep, nrm, out=np.zeros_like(keep, dtype=float), where=nrm > 0)
    return scale * t


def prox_shrink(upsilon, center, beta: float) -> np.ndarray:
    """Minimizer of ``upsilon ||w|| + beta/2 ||w - center||^2`` (per pixel)."""
    if not np.all(np.asarray(beta) > 0):
        raise ValueError("beta must be positive")
    return shrink(center, np.asarray(upsilon) / beta)


class InnerPsi:
    """Convex, Lipschitz, nonnegative inner function (per pixel)."""

    nu = 1.0

    def value(self, w):
        raise NotImplementedError

    def prox_weighted(self, upsilon, center, beta):
        raise NotImplementedError

    def subgradient(self, w, fallback=None):
        raise NotImplementedError


class EuclideanNormPsi(InnerPsi):
    """``psi(w) = ||w||`` per pixel (norm over axis 0)."""

    nu = 1.0

    def value(self, w):
        return np.sqrt(np.sum(np.abs(w) ** 2, axis=0))

    def prox_weighted(self, upsilon, center, beta):
        return prox_shrink(upsilon, center, beta)

    def subgradient(self, w, fallback=None):
        """``w/||w||`` where nonzero; elsewhere ``fallback`` projected into
        the unit ball (or zero)."""
        nrm = self.value(w)
        out = np.divide(w, nrm, out=np.zeros_like(w), where=nrm > 0)
        if fallback is not None:
            fb = fallback / np.maximum(self.value(fallback), 1.0)
            out = np.where(nrm > 0, out, fb)
        return out

    def __repr__(self):
        return "EuclideanNormPsi()"


class ZeroPsi(InnerPsi):
    nu = 1.0

    def value(self, w):
        return np.zeros(np.shape(w)[1:])

    def prox_weighted(self, upsilon, center, beta):
        return np.array(center, copy=True)

    def subgradient(self, w, fallback=None):
        return np.zeros_like(w)


class CompositeTerm:
    """Separable penalty ``sum_pixels phi(psi(w_pixel))``.

    Parameters
    ----------
    phi : OuterPhi
    psi : InnerPsi
    eps_clamp : float, optional
        Floor applied to ``psi`` inside ``phi'``. Defaults to
        ``DEFAULT_EPS_CLAMP`` for ``PowerP`` (whose derivative blows up at 0)
        and to 0 otherwise.
    """

    def __init__(self, phi: OuterPhi, psi: InnerPsi,
                 eps_clamp: Optional[float] = None):
        self.phi = phi
        self.psi = psi
        if eps_clamp is None:
            eps_clamp = DEFAULT_EPS_CLAMP if phi.kind == "powerP" else 0.0
        self.eps_clamp = float(eps_clamp)

    def __repr__(self):
        return f"CompositeTerm({self.phi!r}, {self.psi!r}, eps={self.eps_clamp:g})"

    def pixel_values(self, y):
        return self.phi.value(self.psi.value(y))

    def value(self, y) -> float:
        return float(np.sum(self.pixel_values(y)))

    def upsilon(self, anchor):
        """Majorant slope ``phi'(psi(anchor))`` per pixel."""
        t = self.psi.value(anchor)
        if self.eps_clamp > 0:
            t = np.maximum(t, self.eps_clamp)
        ups = self.phi.deriv(t)
        return float(ups) if np.ndim(ups) == 0 else ups

    def pixel_majorant(self, y, anchor):
        """Per-pixel tangent majorant ``q(y, anchor)``."""
        t_a = self.psi.value(anchor)
        return self.phi.value(t_a) + self.upsilon(anchor) * (self.psi.value(y) - t_a)

    def majorant(self, y, anchor) -> float:
        return float(np.sum(self.pixel_majorant(y, anchor)))

    def prox(self, upsilon, center, beta):
        """Minimizer of ``upsilon * psi(w) + beta/2 ||w - center||^2``."""
        return self.psi.prox_weighted(upsilon, center, beta)

    def subgradient(self, y, fallback=None):
        return self.psi.subgradient(y, fallback)

    def upsilon_lipschitz(self) -> float:
        """Bound on the Lipschitz constant of ``anchor -> Upsilon(anchor)``."""
        return self.phi.deriv_lipschitz(self.eps_clamp) * self.psi.nu
