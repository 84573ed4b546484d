import numpy as np
import pytest

from cpalm import mri
from cpalm.blockspace import BlockVector
from cpalm.composite import CompositeTerm, EuclideanNormPsi, IdentityPhi, LogSum
from cpalm.coupling import Coupling
from cpalm.solver import SmoothTerm, SolverConfig, run_multi_cpalm

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """``report(n, title, ok, detail)`` records and prints one verdict line."""

    def _report(n, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}"
        if detail:
            line += f" | {detail}"
        print(line)
        request.config.stash[ACCEPTANCE_KEY].append(line)
        return ok

    return _report


def rng_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# scalar toy: f = (x-1)^2/2, g = phi(|y|), H = tau/2 (y - x)^2

def _abs_psi():
    # |y| for a scalar is the Euclidean norm of a length-1 vector
    return EuclideanNormPsi()


def toy_problem(phi=None, tau=1.0, x0=0.0, y0=0.0):
    from cpalm.solver import Problem

    def prox(anchor, lin, alpha, metric):
        # argmin (x-1)^2/2 + lin (x - a) + alpha/2 (x - a)^2, identity metric
        return (1.0 - lin + alpha * anchor) / (1.0 + alpha)

    f = SmoothTerm(lambda x: 0.5 * float(np.sum((x - 1.0) ** 2)), lambda x: x - 1.0, prox)
    g = CompositeTerm(phi if phi is not None else IdentityPhi(), _abs_psi())
    H = Coupling(lambda z: 0.5 * tau * float(np.sum((z[1] - z[0]) ** 2)),
                 [lambda z: tau * (z[0] - z[1]), lambda z: tau * (z[1] - z[0])],
                 [lambda z: tau, lambda z: tau])
    z0 = BlockVector([np.array([x0]), np.array([y0])])
    return Problem(f, [g], H, z0)


@pytest.fixture
def logsum_toy():
    return toy_problem(LogSum(1.0))


# 64x64 reconstruction used by the acceptance suite and the CLI tests

MRI_PARAMS = dict(size=64, num_coils=4, mask_kind="poisson", ratio=0.3,
                  noise_sigma=0.005, seed=1)


@pytest.fixture(scope="session")
def mri_data():
    return mri.synthesize_dataset(**MRI_PARAMS)


class RunLog:
    """Everything the acceptance checks need from one monitored run."""

    def __init__(self, problem, data, n_iter):
        self.problem = problem
        self.z0 = problem.z0.copy()
        self.relerr = []
        self.snr_at = {}
        self.radius = 0.0
        self.observed_M = 0.0
        self._prev = problem.z0
        H = problem.H

        def full_grad(z):
            return BlockVector([H.grad(i, z) for i in range(H.num_blocks)])

        self._g_prev = full_grad(problem.z0)

        def callback(z, rec):
            self.relerr.append(mri.rel_err(z[0], data.ground_truth))
            self.radius = max(self.radius, (z - self.z0).norm())
            g = full_grad(z)
            dz = (z - self._prev).norm()
            if dz > 0:
                self.observed_M = max(self.observed_M, (g - self._g_prev).norm() / dz)
            self._prev, self._g_prev = z, g
            if rec.k + 1 in (300, n_iter):
                self.snr_at[rec.k + 1] = mri.snr(z[0], data.ground_truth)

        cfg = SolverConfig(max_iter=n_iter, tol_residual=0.0)
        self.z, self.trace, self.status = run_multi_cpalm(problem, cfg, callback)


@pytest.fixture(scope="session")
def mri_runs(mri_data):
    """500 monitored iterations of both models on the shared dataset."""
    runs = {}
    for kind in ("logsum", "lp"):
        problem = mri.build_problem(mri_data, mri.ModelSpec(kind=kind))
        runs[kind] = RunLog(problem, mri_data, 500)
    return runs
