"""Smooth coupling terms ``H(x, y_1, ..., y_p)``.

Block 0 is ``x``; blocks ``1..p`` are the composite blocks. A coupling
exposes its value, partial gradients and per-block Lipschitz moduli of the
partial gradients.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .blockspace import BlockVector, real_inner
from .linops import FiniteDifference2D

__all__ = ["Coupling", "QuadraticCoupling", "probe_coupling",
           "empirical_gradient_lipschitz"]


class Coupling:
    """Generic coupling built from user callables.

    Parameters
    ----------
    value : callable
        ``z -> float`` for a :class:`BlockVector` ``z``.
    grads : sequence of callables
        ``grads[i](z)`` is the partial gradient w.r.t. block ``i``.
    lipschitz : sequence of callables
        ``lipschitz[i](z)`` bounds the Lipschitz constant of ``grads[i]`` in
        block ``i`` with the other blocks frozen at their values in ``z``.
    bounds : sequence of (lo, hi), optional
        Declared uniform bounds on each modulus; checked at every call.
    """

    def __init__(self, value: Callable, grads: Sequence[Callable],
                 lipschitz: Sequence[Callable],
                 bounds: Optional[Sequence[Tuple[float, float]]] = None):
        if len(grads) != len(lipschitz):
            raise ValueError("need one Lipschitz modulus per partial gradient")
        self._value = value
        self._grads = list(grads)
        self._lips = list(lipschitz)
        self.bounds = list(bounds) if bounds is not None else None

    @property
    def num_blocks(self) -> int:
        return len(self._grads)

    def value(self, z: BlockVector) -> float:
        return float(self._value(z))

    def grad(self, i: int, z: BlockVector) -> np.ndarray:
        return self._grads[i](z)

    def lipschitz(self, i: int, z: BlockVector) -> float:
        L = float(self._lips[i](z))
        if self.bounds is not None:
            lo, hi = self.bounds[i]
            if not lo <= L <= hi:
                raise ValueError(f"modulus {L:g} of block {i} outside [{lo:g}, {hi:g}]")
        return L


class QuadraticCoupling(Coupling):
    """``H(u, w) = tau/2 * ||w - D u||^2`` with periodic differences ``D``.

    ``w`` is either one ``(2, M, N)`` field or, when ``groups`` is given, one
    block of shape ``(2, n_j)`` per boolean pixel mask in ``groups`` (the
    masks must partition the image).
    """

    def __init__(self, tau: float, shape, groups: Optional[Sequence[np.ndarray]] = None):
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau}")
        self.tau = float(tau)
        self.shape = tuple(shape)
        self.D = FiniteDifference2D(self.shape)
        if groups is not None:
            groups = [np.asarray(g, dtype=bool) for g in groups]
            cover = np.sum(groups, axis=0)
            if cover.shape != self.shape or np.any(cover != 1):
                raise ValueError("groups must partition the pixel grid")
        self.groups = groups
        p = 1 if groups is None else len(groups)
        L1, L2 = self.lipschitz_moduli()
        bounds = [(L1, L1)] + [(L2, L2)] * p
        super().__init__(self._val, [self._grad_u] + [self._make_grad_w(j) for j in range(p)],
                         [lambda z: L1] + [lambda z: L2] * p, bounds)

    def lipschitz_moduli(self) -> Tuple[float, float]:
        """``(L1, L2) = (tau * rho(D^T D), tau)``, with the exact bound 8."""
        return self.tau * FiniteDifference2D.RHO_BOUND, self.tau

    def joint_lipschitz(self) -> float:
        """Exact Lipschitz constant of the full gradient, ``tau * (8 + 1)``.

        The gradient is ``tau * C^T C z`` with ``C = [D, -I]`` and
        ``||C||^2 = rho(D D^T) + 1``.
        """
        return self.tau * (FiniteDifference2D.RHO_BOUND + 1.0)

    # field <-> group blocks
    def split(self, w: np.ndarray) -> list:
        if self.groups is None:
            return [w]
        return [w[:, g] for g in self.groups]

    def assemble(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        if self.groups is None:
            return blocks[0]
        w = np.zeros((2,) + self.shape, dtype=np.result_type(*blocks))
        for b, g in zip(blocks, self.groups):
            w[:, g] = b
        return w

    def residual(self, z: BlockVector) -> np.ndarray:
        """``w - D u`` as a full field."""
        return self.assemble(z.blocks[1:]) - self.D.forward(z.blocks[0])

    def _val(self, z):
        r = self.residual(z)
        return 0.5 * self.tau * real_inner(r, r)

    def _grad_u(self, z):
        return -self.tau * self.D.adjoint(self.residual(z))

    def _make_grad_w(self, j):
        def grad_w(z):
            if self.groups is None:
                return self.tau * self.residual(z)
            g = self.groups[j]
            return self.tau * (z.blocks[j + 1] - self.D.forward(z.blocks[0])[:, g])
        return grad_w

    def grad_u(self, u, w):
        """``tau * D^T (D u - w)``."""
        return self.tau * self.D.adjoint(self.D.forward(u) - w)

    def grad_w(self, u, w):
        """``tau * (w - D u)``."""
        return self.tau * (w - self.D.forward(u))


def _perturb(z: BlockVector, i: int, rng, scale: float):
    b = z.blocks[i]
    d = rng.standard_normal(b.shape)
    if np.iscomplexobj(b):
        d = d + 1j * rng.standard_normal(b.shape)
    return scale * d


def probe_coupling(H: Coupling, z: BlockVector, n_probes: int = 5, seed: int = 0,
                   h: float = 1e-6, rtol: float = 1e-5) -> None:
    """Check partial gradients against central differences and the
    declared moduli against random secants. Raises ``ValueError``."""
    rng = np.random.default_rng(seed)
    for i in range(H.num_blocks):
        g = H.grad(i, z)
        L = H.lipschitz(i, z)
        for _ in range(n_probes):
            d = _perturb(z, i, rng, 1.0)
            d /= np.linalg.norm(d)
            fp = H.value(z.replace(i, z.blocks[i] + h * d))
            fm = H.value(z.replace(i, z.blocks[i] - h * d))
            fd = (fp - fm) / (2 * h)
            an = real_inner(g, d)
            if abs(fd - an) > rtol * max(1.0, abs(an), np.linalg.norm(g)):
                raise ValueError(f"block {i}: gradient {an:g} vs finite difference {fd:g}")
            d2 = _perturb(z, i, rng, 1.0)
            z2 = z.replace(i, z.blocks[i] + d2)
            dg = np.linalg.norm(H.grad(i, z2) - g)
            if dg > L * np.linalg.norm(d2) * (1 + 1e-10) + 1e-12:
                raise ValueError(f"block {i}: secant {dg / np.linalg.norm(d2):g} exceeds modulus {L:g}")


def empirical_gradient_lipschitz(H: Coupling, z: BlockVector, radius: float,
                                 n_pairs: int = 1000, seed: int = 0) -> float:
    """Largest observed ``|||grad H(z1) - grad H(z2)||| / |||z1 - z2|||`` for
    random pairs in the box of half-width ``radius`` around ``z``."""
    rng = np.random.default_rng(seed)

    def sample():
        return BlockVector([b + _perturb(z, i, rng, radius / np.sqrt(b.size))
                            for i, b in enumerate(z.blocks)])

    def full_grad(v):
        return BlockVector([H.grad(i, v) for i in range(H.num_blocks)])

    best = 0.0
    for _ in range(n_pairs):
        z1, z2 = sample(), sample()
        dz = (z1 - z2).norm()
        if dz > 0:
            best = max(best, (full_grad(z1) - full_grad(z2)).norm() / dz)
    return best
