"""Parallel-MRI reconstruction models and synthetic data.

Two models share the splitting ``w = D u``:

    log-sum:  lam/2 ||A u - b||^2 + sum log(1 + mu ||w_ij||^2) / (2 mu) + tau/2 ||w - D u||^2
    l_p^p:    lam/2 ||A u - b||^2 + theta sum ||w_ij||^p             + tau/2 ||w - D u||^2

Both are solved with the shifted-Gram metric on ``u`` (an explicit update)
and identity metrics on ``w`` (per-pixel shrinkage).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .blockspace import BlockVector
from .composite import CompositeTerm, EuclideanNormPsi, LogSum, PowerP
from .coupling import QuadraticCoupling
from .fileio import (read_cplx, read_keyvalue, read_pgm, write_cplx, write_keyvalue,
                     write_pgm)
from .linops import FiniteDifference2D, PmriOperator, diff_forward
from .metrics import ShiftedGramRule, SpectralRadiusError, estimate_spectral_radius
from .solver import Problem, QuadraticFidelity

logger = logging.getLogger(__name__)

__all__ = [
    "MriDataset",
    "ModelSpec",
    "shepp_logan",
    "coil_sensitivities",
    "poisson_mask",
    "radial_mask",
    "make_mask",
    "synthesize_dataset",
    "build_logsum_problem",
    "build_lp_problem",
    "build_problem",
    "default_delta",
    "spectral_bound",
    "row_groups",
    "snr",
    "psnr",
    "rel_err",
    "save_dataset",
    "load_dataset",
    "PGM_MAX",
]

PGM_MAX = 65535
RATIO_TOL = 0.02

# modified Shepp-Logan: intensity, semi-axes a, b, centre x0, y0, angle (deg)
_SHEPP_LOGAN = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0),
]


def _grid(shape):
    M, N = shape
    y = np.linspace(1, -1, M)[:, None] * np.ones((1, N))
    x = np.ones((M, 1)) * np.linspace(-1, 1, N)[None, :]
    return x, y


def shepp_logan(shape) -> np.ndarray:
    """Modified Shepp-Logan phantom scaled to ``[0, 1]``."""
    x, y = _grid(shape)
    img = np.zeros(shape)
    for val, a, b, x0, y0, ang in _SHEPP_LOGAN:
        t = np.deg2rad(ang)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1] += val
    img = np.clip(img, 0, None)
    return img / img.max()


def coil_sensitivities(shape, num_coils: int, width: float = 0.8) -> np.ndarray:
    """Smooth complex Gaussians centred on a ring just outside the field of
    view, normalized so that ``sum_i |S_i|^2 = 1`` at every pixel.

    A single coil is the uniform body coil ``S = 1``.
    """
    if num_coils < 1:
        raise ValueError("need at least one coil")
    if num_coils == 1:
        return np.ones((1,) + tuple(shape), dtype=complex)
    x, y = _grid(shape)
    sens = []
    for i in range(num_coils):
        ang = 2 * np.pi * i / num_coils
        cx, cy = 1.2 * np.cos(ang), 1.2 * np.sin(ang)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width**2))
        phase = ang + 0.5 * (x * np.cos(ang) + y * np.sin(ang))
        sens.append(mag * np.exp(1j * phase))
    sens = np.array(sens)
    return sens / np.sqrt(np.sum(np.abs(sens) ** 2, axis=0))


def _centered_radius(shape):
    M, N = shape
    ky = (np.arange(M) - M // 2)[:, None] / M
    kx = (np.arange(N) - N // 2)[None, :] / N
    return np.sqrt(kx**2 + ky**2)


def _check_ratio(ratio):
    if not 0 < ratio <= 1:
        raise ValueError(f"undersampling ratio must lie in (0, 1], got {ratio}")


def poisson_mask(shape, ratio: float, rng: np.random.Generator,
                 center_fraction: float = 0.25, power: float = 2.0) -> np.ndarray:
    """Variable-density random mask in unshifted FFT layout.

    A disc around the k-space centre holding about ``center_fraction`` of the
    budget is fully sampled; the rest is drawn without replacement with
    density ``(1 - r/r_max)^power``. Exactly ``round(ratio * n)`` samples.
    """
    _check_ratio(ratio)
    n = int(np.prod(shape))
    if ratio == 1.0:
        return np.ones(shape, dtype=np.uint8)
    K = int(round(ratio * n))
    if K < 1:
        raise ValueError(f"ratio {ratio} gives no samples on a {shape} grid")
    r = _centered_radius(shape)
    order = np.argsort(r.ravel(), kind="stable")
    n_center = int(center_fraction * K)
    mask = np.zeros(n, dtype=np.uint8)
    mask[order[:n_center]] = 1
    rest = np.flatnonzero(mask == 0)
    dens = (1 - r.ravel()[rest] / r.max()) ** power + 1e-3
    pick = rng.choice(rest, size=K - n_center, replace=False, p=dens / dens.sum())
    mask[pick] = 1
    return np.fft.ifftshift(mask.reshape(shape))


def _spokes(shape, n_spokes):
    M, N = shape
    m = np.zeros(shape, dtype=np.uint8)
    R = np.hypot(M, N) / 2
    t = np.arange(-R, R + 0.25, 0.5)
    for s in range(n_spokes):
        ang = np.pi * s / n_spokes
        rows = np.rint(M // 2 + t * np.sin(ang)).astype(int)
        cols = np.rint(N // 2 + t * np.cos(ang)).astype(int)
        ok = (rows >= 0) & (rows < M) & (cols >= 0) & (cols < N)
        m[rows[ok], cols[ok]] = 1
    return m


def radial_mask(shape, ratio: float) -> np.ndarray:
    """Equiangular straight spokes through the k-space centre.

    The spoke count is the one whose realized ratio is closest to ``ratio``.
    """
    _check_ratio(ratio)
    if ratio == 1.0:
        return np.ones(shape, dtype=np.uint8)
    n = float(np.prod(shape))
    best, best_err = None, np.inf
    s = 1
    while True:
        m = _spokes(shape, s)
        err = abs(m.sum() / n - ratio)
        if err < best_err:
            best, best_err = m, err
        if m.sum() / n >= ratio or s > 4 * max(shape):
            break
        s += 1
    if best_err > RATIO_TOL:
        raise ValueError(f"radial ratio {ratio} unreachable on {shape} "
                         f"(closest {best.sum() / n:.3f})")
    return np.fft.ifftshift(best)


def make_mask(shape, kind: str, ratio: float, rng: np.random.Generator) -> np.ndarray:
    if kind == "poisson":
        return poisson_mask(shape, ratio, rng)
    if kind == "radial":
        return radial_mask(shape, ratio)
    raise ValueError(f"unknown mask kind {kind!r}")


@dataclass
class MriDataset:
    ground_truth: np.ndarray
    sensitivities: np.ndarray
    mask: np.ndarray
    observed: np.ndarray
    noise_sigma: float
    seed: int = 0
    mask_kind: str = "poisson"

    @property
    def shape(self):
        return self.ground_truth.shape

    @property
    def num_coils(self) -> int:
        return self.sensitivities.shape[0]

    @property
    def ratio(self) -> float:
        return round(float(self.mask.mean()), 3)

    def operator(self, workers: int = 1) -> PmriOperator:
        return PmriOperator(self.sensitivities, self.mask, workers)

    def zero_filled(self, workers: int = 1) -> np.ndarray:
        """Complex adjoint image ``sum_i conj(S_i) F^-1(b_i)``."""
        return self.operator(workers).adjoint(self.observed)


def synthesize_dataset(size, num_coils: int = 4, mask_kind: str = "poisson",
                       ratio: float = 0.3, noise_sigma: float = 0.005,
                       seed: int = 0) -> MriDataset:
    """Phantom, coil maps, mask and noisy masked k-space, all from ``seed``.

    ``noise_sigma`` is the standard deviation of the circular complex
    Gaussian noise per k-space sample.
    """
    shape = (size, size) if np.isscalar(size) else tuple(size)
    for s in shape:
        if s < 2 or s & (s - 1):
            raise ValueError(f"image sizes must be powers of two, got {shape}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    mask_rng, noise_rng = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(seed).spawn(2))
    u0 = shepp_logan(shape)
    sens = coil_sensitivities(shape, num_coils)
    mask = make_mask(shape, mask_kind, ratio, mask_rng)
    op = PmriOperator(sens, mask)
    noise = noise_sigma / np.sqrt(2) * (noise_rng.standard_normal(sens.shape)
                                        + 1j * noise_rng.standard_normal(sens.shape))
    observed = op.forward(u0.astype(complex)) + mask * noise
    return MriDataset(u0, sens, mask, observed, float(noise_sigma), int(seed), mask_kind)


@dataclass
class ModelSpec:
    """Model and metric parameters.

    ``delta=None`` picks :func:`default_delta`; ``beta`` fixes the w-step
    size instead of ``gamma2 * tau``.
    """

    kind: str = "logsum"
    lam: float = 1000.0
    mu: float = 1e-4
    theta: float = 1e-4
    p: float = 0.5
    tau: float = 1.0
    delta: Optional[float] = None
    beta: Optional[float] = None
    gamma1: float = 1.1

    def __post_init__(self):
        if self.kind not in ("logsum", "lp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not (self.lam > 0 and self.tau > 0):
            raise ValueError("lam and tau must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.kind == "logsum" and not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.kind == "lp" and not (self.theta > 0 and 0 < self.p < 1):
            raise ValueError("lp model needs theta > 0 and 0 < p < 1")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")

    def composite(self) -> CompositeTerm:
        phi = LogSum(self.mu) if self.kind == "logsum" else PowerP(self.theta, self.p)
        return CompositeTerm(phi, EuclideanNormPsi())


def default_delta(lam: float, rho_hat: float, tau: float, gamma1: float) -> float:
    """``1.01 * lam * rho_hat * 1.1``, raised if needed so that the
    shifted-Gram step rule stays consistent (``delta >= lam rho + gamma1 L1``)."""
    L1 = tau * FiniteDifference2D.RHO_BOUND
    return max(1.01 * lam * rho_hat * 1.1, lam * rho_hat + 1.1 * gamma1 * L1)


def row_groups(shape, n: int) -> list:
    """Partition the pixel grid into ``n`` horizontal bands."""
    labels = np.repeat(np.arange(shape[0]) * n // shape[0], shape[1]).reshape(shape)
    return [labels == j for j in range(n)]


def spectral_bound(op: PmriOperator) -> float:
    """Power-iteration estimate of ``rho(A^T A)``; if it stalls on a
    clustered spectrum, the analytic bound ``max sum_i |S_i|^2`` instead."""
    try:
        return estimate_spectral_radius(op.gram, op.in_shape, tol=1e-6, max_iter=500, seed=0)
    except SpectralRadiusError as e:
        bound = op.rho_bound()
        logger.warning("power iteration stalled at %.6g; using analytic bound %.6g",
                       e.last, bound)
        return bound


def build_problem(data: MriDataset, spec: ModelSpec, groups: Optional[Sequence] = None,
                  workers: int = 1, rho_hat: Optional[float] = None) -> Problem:
    """Assemble ``f``, ``g``, ``H`` and the metrics for either model.

    Start point: ``u0 = A^T b`` (zero-filled), ``w0 = D u0``.

    Raises
    ------
    ValueError
        If ``delta`` does not exceed ``lam * rho_hat + gamma1 * L1``.
    """
    op = data.operator(workers)
    if rho_hat is None:
        rho_hat = spectral_bound(op)
    H = QuadraticCoupling(spec.tau, data.shape, groups)
    L1, _ = H.lipschitz_moduli()
    delta = spec.delta
    if delta is None:
        delta = default_delta(spec.lam, rho_hat, spec.tau, spec.gamma1)
    elif delta <= spec.lam * rho_hat:
        raise ValueError(
            f"delta={delta:g} violates the SPD condition delta > lam*rho_hat = "
            f"{spec.lam * rho_hat:g} (lam={spec.lam:g}, rho_hat={rho_hat:.6g})")
    elif delta < spec.lam * rho_hat + spec.gamma1 * L1:
        raise ValueError(
            f"delta={delta:g} too small for the step rule: need delta >= "
            f"lam*rho_hat + gamma1*L1 = {spec.lam * rho_hat + spec.gamma1 * L1:g}")
    rule = ShiftedGramRule(delta, spec.lam, op.gram, rho_hat)
    f = QuadraticFidelity(op, data.observed, spec.lam)
    u0 = op.adjoint(data.observed)
    w_blocks = H.split(diff_forward(u0))
    g = [spec.composite() for _ in w_blocks]
    z0 = BlockVector([u0] + w_blocks)
    logger.info("model %s: rho_hat=%.6g delta=%.6g", spec.kind, rho_hat, delta)
    return Problem(f, g, H, z0, x_metric=rule, beta=spec.beta)


def build_logsum_problem(data: MriDataset, spec: ModelSpec, **kw) -> Problem:
    if spec.kind != "logsum":
        raise ValueError("spec.kind must be 'logsum'")
    return build_problem(data, spec, **kw)


def build_lp_problem(data: MriDataset, spec: ModelSpec, **kw) -> Problem:
    if spec.kind != "lp":
        raise ValueError("spec.kind must be 'lp'")
    return build_problem(data, spec, **kw)


def _pair(u, u0):
    u, u0 = np.abs(np.asarray(u)), np.abs(np.asarray(u0))
    if u.shape != u0.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u0.shape}")
    return u, u0


def snr(u, u0) -> float:
    """``10 log10(||u||^2 / ||u - u0||^2)`` on magnitudes; ``inf`` if equal."""
    u, u0 = _pair(u, u0)
    err = np.sum((u - u0) ** 2)
    if err == 0:
        return np.inf
    return float(10 * np.log10(np.sum(u**2) / err))


def psnr(u, u0) -> float:
    """``10 log10(||u||^2 / (||u - u0||^2 / n))``: signal energy, not peak."""
    u, u0 = _pair(u, u0)
    err = np.sum((u - u0) ** 2)
    if err == 0:
        return np.inf
    return float(10 * np.log10(np.sum(u**2) / (err / u.size)))


def rel_err(u, u0) -> float:
    """``||u - u0|| / (sqrt(n) ||u0||)`` on magnitudes."""
    u, u0 = _pair(u, u0)
    return float(np.linalg.norm(u - u0) / (np.sqrt(u.size) * np.linalg.norm(u0)))


def to_pgm_scale(img) -> np.ndarray:
    return np.rint(np.clip(np.abs(img), 0, 1) * PGM_MAX).astype(np.int64)


def from_pgm_scale(img) -> np.ndarray:
    return np.asarray(img, dtype=float) / PGM_MAX


def save_dataset(data: MriDataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_pgm(d / "ground_truth.pgm", to_pgm_scale(data.ground_truth), PGM_MAX)
    write_pgm(d / "mask.pgm", data.mask.astype(np.int64), 1)
    for i in range(data.num_coils):
        write_cplx(d / f"sens_{i}.cplx", data.sensitivities[i])
        write_cplx(d / f"kspace_{i}.cplx", data.observed[i])
    M, N = data.shape
    write_keyvalue(d / "meta.txt", {
        "size": f"{M}x{N}", "coils": data.num_coils, "mask": data.mask_kind,
        "ratio": f"{data.ratio:.3f}", "sigma": repr(data.noise_sigma), "seed": data.seed,
        "pgm_max": PGM_MAX})
    return d


def load_dataset(directory) -> MriDataset:
    d = Path(directory)
    if not (d / "meta.txt").is_file():
        raise FileNotFoundError(f"{d}: no meta.txt, not a dataset directory")
    meta = read_keyvalue(d / "meta.txt")
    nc = int(meta["coils"])
    gt, _ = read_pgm(d / "ground_truth.pgm")
    mask, _ = read_pgm(d / "mask.pgm")
    sens = np.array([read_cplx(d / f"sens_{i}.cplx") for i in range(nc)])
    obs = np.array([read_cplx(d / f"kspace_{i}.cplx") for i in range(nc)])
    return MriDataset(from_pgm_scale(gt), sens, mask.astype(np.uint8), obs,
                      float(meta["sigma"]), int(meta["seed"]), meta.get("mask", "poisson"))
