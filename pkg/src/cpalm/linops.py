"""Matrix-free linear operators used by the parallel-MRI models."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .blockspace import real_inner

__all__ = [
    "LinOp",
    "FiniteDifference2D",
    "UnitaryFFT2",
    "PmriOperator",
    "diff_forward",
    "diff_adjoint",
    "fft2_unitary",
    "ifft2_unitary",
    "adjoint_mismatch",
]


def diff_forward(u: np.ndarray) -> np.ndarray:
    """Periodic forward differences; returns ``(D_x u, D_y u)`` stacked on axis 0.

    ``x`` runs along columns (axis 1), ``y`` along rows (axis 0).
    """
    return np.stack([np.roll(u, -1, axis=1) - u, np.roll(u, -1, axis=0) - u])


def diff_adjoint(w: np.ndarray) -> np.ndarray:
    return (np.roll(w[0], 1, axis=1) - w[0]) + (np.roll(w[1], 1, axis=0) - w[1])


def fft2_unitary(u: np.ndarray, workers: int = 1) -> np.ndarray:
    """Orthonormal 2-D DFT over the last two axes."""
    return sfft.fft2(u, norm="ortho", workers=workers)


def ifft2_unitary(v: np.ndarray, workers: int = 1) -> np.ndarray:
    return sfft.ifft2(v, norm="ortho", workers=workers)


class LinOp:
    """A linear map with its adjoint.

    Supports ``a * op``, ``op1 @ op2`` (composition) and ``gram``.
    """

    def __init__(self, forward: Callable, adjoint: Callable,
                 in_shape: Sequence[int], out_shape: Sequence[int]):
        self._forward = forward
        self._adjoint = adjoint
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)

    def forward(self, u):
        u = np.asarray(u)
        if u.shape != self.in_shape:
            raise ValueError(f"expected input shape {self.in_shape}, got {u.shape}")
        return self._forward(u)

    def adjoint(self, v):
        v = np.asarray(v)
        if v.shape != self.out_shape:
            raise ValueError(f"expected adjoint input shape {self.out_shape}, got {v.shape}")
        return self._adjoint(v)

    __call__ = forward

    @property
    def T(self) -> "LinOp":
        return LinOp(self._adjoint, self._forward, self.out_shape, self.in_shape)

    def gram(self, u):
        return self.adjoint(self.forward(u))

    def __rmul__(self, a) -> "LinOp":
        a = float(a) if np.isrealobj(a) else complex(a)
        ca = np.conj(a)
        return LinOp(lambda u: a * self._forward(u), lambda v: ca * self._adjoint(v),
                     self.in_shape, self.out_shape)

    def __matmul__(self, other: "LinOp") -> "LinOp":
        if other.out_shape != self.in_shape:
            raise ValueError("incompatible shapes for composition")
        return LinOp(lambda u: self._forward(other._forward(u)),
                     lambda v: other._adjoint(self._adjoint(v)),
                     other.in_shape, self.out_shape)

    def to_dense(self, dtype=complex) -> np.ndarray:
        """Dense matrix in row-major flattening; small operators only."""
        n = int(np.prod(self.in_shape))
        cols = []
        for k in range(n):
            e = np.zeros(n, dtype=dtype)
            e[k] = 1
            cols.append(self._forward(e.reshape(self.in_shape)).ravel())
        return np.stack(cols, axis=1)


class FiniteDifference2D(LinOp):
    """Periodic 2-D forward differences ``D``; ``rho(D^T D) <= 8``."""

    RHO_BOUND = 8.0

    def __init__(self, shape):
        shape = tuple(shape)
        super().__init__(diff_forward, diff_adjoint, shape, (2,) + shape)


class UnitaryFFT2(LinOp):
    def __init__(self, shape, workers: int = 1):
        shape = tuple(shape)
        super().__init__(lambda u: fft2_unitary(u, workers),
                         lambda v: ifft2_unitary(v, workers), shape, shape)


class PmriOperator(LinOp):
    """Parallel-MRI forward model, channel ``i``: ``P * F(S_i * u)``.

    Parameters
    ----------
    sensitivities : array, shape (Nc, M, N)
    mask : array, shape (M, N)
        Binary sampling pattern in unshifted FFT layout.
    workers : int
        Threads handed to the FFT; results do not depend on it.
    """

    def __init__(self, sensitivities, mask, workers: int = 1):
        self.sens = np.asarray(sensitivities, dtype=complex)
        if self.sens.ndim != 3:
            raise ValueError("sensitivities must have shape (Nc, M, N)")
        self.mask = np.asarray(mask).astype(bool)
        if self.mask.shape != self.sens.shape[1:]:
            raise ValueError("mask and sensitivity shapes differ")
        self.workers = int(workers)
        self._conj_sens = np.conj(self.sens)
        shape = self.mask.shape
        super().__init__(self._fwd, self._adj, shape, self.sens.shape)

    @property
    def num_coils(self) -> int:
        return self.sens.shape[0]

    def _fwd(self, u):
        return self.mask * fft2_unitary(self.sens * u, self.workers)

    def _adj(self, v):
        return np.sum(self._conj_sens * ifft2_unitary(self.mask * v, self.workers), axis=0)

    def rho_bound(self) -> float:
        """Analytic bound ``max_pixel sum_i |S_i|^2`` on ``rho(A^T A)``."""
        return float(np.max(np.sum(np.abs(self.sens) ** 2, axis=0)))


def adjoint_mismatch(op: LinOp, n_probes: int = 100, seed: int = 0,
                     dtype=complex) -> float:
    """Largest ``|<Au, v> - <u, A^T v>| / (||u|| ||v||)`` over random probes."""
    rng = np.random.default_rng(seed)
    cplx = np.issubdtype(np.dtype(dtype), np.complexfloating)

    def draw(shape):
        x = rng.standard_normal(shape)
        return x + 1j * rng.standard_normal(shape) if cplx else x

    worst = 0.0
    for _ in range(n_probes):
        u, v = draw(op.in_shape), draw(op.out_shape)
        lhs = real_inner(op.forward(u), v)
        rhs = real_inner(u, op.adjoint(v))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return worst
