import numpy as np
import pytest

from cpalm import mri
from cpalm.blockspace import BlockVector
from cpalm.composite import CompositeTerm, IdentityPhi, LogSum, ZeroPsi
from cpalm.coupling import Coupling
from cpalm.metrics import IdentityMetric
from cpalm.solver import (DescentViolation, DivergenceError, Problem, SmoothTerm,
                          SolverConfig, TRACE_COLUMNS, cpalm_step, descent_constant,
                          read_trace_csv, run_cpalm, run_multi_cpalm, subgrad_residual,
                          write_trace_csv)

from conftest import toy_problem

# frozen grid-search oracle values (step 1e-5 on [-3, 3], see _argmin_1d)
TOY_STEP_FROM_00 = (0.476190, 0.0)
TOY_STEP_FROM_02 = (1.428571, 0.571429)
# stationary point of (x-1)^2/2 + log(1+y^2)/2 + (y-x)^2/2, grid refined to 1e-9
TOY_STATIONARY = (0.6805515, 0.3611031)


def _argmin_1d(obj, lo=-3.0, hi=3.0, step=1e-5):
    t = np.arange(lo, hi + step / 2, step)
    return float(t[np.argmin(obj(t))])


def test_fixed_point_when_everything_vanishes():
    f = SmoothTerm(lambda x: 0.0, lambda x: 0 * x,
                   lambda a, lin, alpha, m: a - lin / alpha)
    g = CompositeTerm(IdentityPhi(), ZeroPsi())
    H = Coupling(lambda z: 0.0, [lambda z: 0 * z[0], lambda z: 0 * z[1]],
                 [lambda z: 1.0, lambda z: 1.0])
    rng = np.random.default_rng(0)
    z = BlockVector([rng.standard_normal(3), rng.standard_normal((2, 4))])
    z_new, rec = cpalm_step(Problem(f, [g], H, z), z, SolverConfig())
    np.testing.assert_array_equal(z_new[0], z[0])
    np.testing.assert_array_equal(z_new[1], z[1])
    assert rec.increment == 0.0 and rec.residual == 0.0


@pytest.mark.parametrize("start, frozen", [((0.0, 0.0), TOY_STEP_FROM_00),
                                           ((0.0, 2.0), TOY_STEP_FROM_02)])
def test_toy_step_matches_grid_search(start, frozen):
    x0, y0 = start
    p = toy_problem(x0=x0, y0=y0)
    z, rec = cpalm_step(p, p.z0, SolverConfig(gamma1=1.1, gamma2=1.1))
    alpha = beta = 1.1  # gamma * L with L = tau = 1
    assert rec.alpha == pytest.approx(alpha) and rec.beta == pytest.approx(beta)
    xs = _argmin_1d(lambda t: 0.5 * (t - 1) ** 2 + (x0 - y0) * (t - x0) + alpha / 2 * (t - x0) ** 2)
    ys = _argmin_1d(lambda t: np.abs(t) + (y0 - xs) * (t - y0) + beta / 2 * (t - y0) ** 2)
    assert (xs, ys) == pytest.approx(frozen, abs=1e-5)
    assert z[0][0] == pytest.approx(xs, abs=1e-5)
    assert z[1][0] == pytest.approx(ys, abs=1e-5)


def test_toy_converges_to_stationary_point(logsum_toy):
    cfg = SolverConfig(max_iter=500, tol_residual=1e-5)
    z, trace, status = run_cpalm(logsum_toy, cfg)
    assert status == "converged_residual"
    assert len(trace) <= 500
    assert trace[-1].residual < 1e-5
    assert z[0][0] == pytest.approx(TOY_STATIONARY[0], abs=1e-4)
    assert z[1][0] == pytest.approx(TOY_STATIONARY[1], abs=1e-4)


def test_stationary_point_is_cubic_root():
    # dF/dx = 0 gives x = (1+y)/2; dF/dy = 0 then reads y^3 - y^2 + 3y - 1 = 0
    roots = np.roots([1.0, -1.0, 3.0, -1.0])
    y = roots[np.abs(roots.imag) < 1e-12].real[0]
    assert (0.5 * (1 + y), y) == pytest.approx(TOY_STATIONARY, abs=1e-7)


def test_residual_vanishes_at_stationary_input():
    p = toy_problem(LogSum(1.0), x0=0.3, y0=-1.2)
    z = p.z0
    _, rec = cpalm_step(p, z, SolverConfig())
    r = subgrad_residual(z, z, p.g, p.H, IdentityMetric(), [IdentityMetric()], rec.alpha,
                         [rec.beta])
    assert r == 0.0


def test_residual_is_the_gradient_of_F_on_smooth_toy():
    p = toy_problem(LogSum(1.0), x0=-1.0, y0=2.5)
    cfg = SolverConfig()
    z, rec = cpalm_step(p, p.z0, cfg)
    x, y = z[0][0], z[1][0]
    assert y != 0
    grad_F = np.hypot(x - 1 + (x - y), y / (1 + y**2) + (y - x))
    assert rec.residual == pytest.approx(grad_F, rel=1e-12)


def test_sufficient_decrease_on_toy(logsum_toy):
    _, trace, _ = run_cpalm(logsum_toy, SolverConfig(max_iter=200, tol_residual=0.0))
    d = descent_constant(trace)
    assert d == pytest.approx(0.1)  # L (gamma - 1) with L = 1, gamma = 1.1
    for r in trace:
        assert r.objective_prev - r.objective >= d / 2 * r.increment**2 \
            - 1e-10 * (1 + abs(r.objective_prev))


def test_max_iter_zero(logsum_toy):
    z, trace, status = run_cpalm(logsum_toy, SolverConfig(max_iter=0))
    assert trace == [] and status == "max_iter"
    np.testing.assert_array_equal(z[0], logsum_toy.z0[0])


def test_increment_stopping(logsum_toy):
    _, trace, status = run_cpalm(logsum_toy, SolverConfig(tol_residual=0.0, tol_increment=1e-3))
    assert status == "converged_increment"
    assert trace[-1].increment <= 1e-3


def test_default_residual_tolerance_is_relative(logsum_toy):
    _, trace, status = run_cpalm(logsum_toy, SolverConfig(max_iter=5000))
    assert status == "converged_residual"
    assert trace[-1].residual <= 1e-6 * trace[0].residual


def test_config_validation():
    for kw in (dict(gamma1=1.0), dict(gamma2=0.9), dict(gamma2=[1.2, 1.0]),
               dict(max_iter=-1), dict(tol_residual=-1.0), dict(tol_increment=-1.0)):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_descent_violation_on_understated_modulus():
    p = toy_problem(tau=10.0, x0=3.0, y0=-3.0)
    p.H._lips = [lambda z: 0.1, lambda z: 0.1]  # true modulus is 10
    with pytest.raises(DescentViolation) as ei:
        run_cpalm(p, SolverConfig(max_iter=50))
    assert ei.value.record is not None and ei.value.trace


def test_divergence_on_nonfinite_objective():
    p = toy_problem()
    p.f._value = lambda x: np.nan
    with pytest.raises(DivergenceError):
        run_cpalm(p, SolverConfig(max_iter=3))


def test_run_cpalm_requires_one_block(logsum_toy):
    p = logsum_toy
    two = Problem(p.f, [p.g[0], p.g[0]],
                  Coupling(lambda z: 0.0, [lambda z: 0 * z[i] for i in range(3)],
                           [lambda z: 1.0] * 3),
                  BlockVector([np.zeros(1)] * 3))
    with pytest.raises(ValueError):
        run_cpalm(two)


def test_problem_validation(logsum_toy):
    p = logsum_toy
    with pytest.raises(ValueError):
        Problem(p.f, p.g, p.H, BlockVector([np.zeros(1)] * 3))
    from cpalm.metrics import DiagonalMetric
    with pytest.raises(ValueError, match="identity"):
        Problem(p.f, p.g, p.H, p.z0, y_metrics=[DiagonalMetric([1.0])])


def test_trace_csv_round_trip(tmp_path, logsum_toy):
    _, trace, _ = run_cpalm(logsum_toy, SolverConfig(max_iter=20, tol_residual=0.0))
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 21
    rows = read_trace_csv(path)
    for rec, row in zip(trace, rows):
        assert row["k"] == rec.k
        assert row["F"] == rec.objective  # shortest round-trip repr
        assert row["residual"] == rec.residual


# small MRI instances

@pytest.fixture(scope="module")
def small_mri():
    return mri.synthesize_dataset(16, num_coils=3, ratio=0.4, seed=3)


def test_explicit_update_matches_prox_paths(small_mri):
    data = small_mri
    spec = mri.ModelSpec()
    p = mri.build_problem(data, spec)
    rng = np.random.default_rng(0)
    u = p.z0[0] + 0.1 * (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    z = p.z0.replace(0, u)
    L1 = p.H.lipschitz(0, z)
    alpha, _, A = p.x_metric.step(L1, 1.1)
    lin = p.H.grad(0, z)
    explicit = u - (p.f.gradient(u) + lin) / A.delta
    from cpalm.solver import _x_update
    np.testing.assert_array_equal(_x_update(p.f, u, lin, alpha, A), explicit)
    cg = p.f.prox_under_metric(u, lin, alpha, A)
    np.testing.assert_allclose(cg, explicit, rtol=0, atol=1e-8 * np.linalg.norm(explicit))


def test_jacobi_mode_runs_and_differs(small_mri):
    p = mri.build_problem(small_mri, mri.ModelSpec())
    gs = run_multi_cpalm(p, SolverConfig(max_iter=30, tol_residual=0.0))
    jac = run_multi_cpalm(p, SolverConfig(max_iter=30, tol_residual=0.0, gauss_seidel=False))
    assert len(jac.trace) == 30
    assert all(r.objective <= r.objective_prev + 1e-10 * (1 + abs(r.objective_prev))
               for r in jac.trace)
    assert jac.trace[-1].objective != gs.trace[-1].objective


def test_single_block_multi_equals_cpalm(small_mri):
    p = mri.build_problem(small_mri, mri.ModelSpec(kind="lp"))
    cfg = SolverConfig(max_iter=40, tol_residual=0.0)
    a = run_cpalm(p, cfg)
    b = run_multi_cpalm(p, cfg)
    for x, y in zip(a.z, b.z):
        np.testing.assert_array_equal(x, y)
    assert [r.objective for r in a.trace] == [r.objective for r in b.trace]


def test_split_groups_match_unsplit(small_mri):
    spec = mri.ModelSpec()
    cfg = SolverConfig(max_iter=60, tol_residual=0.0)
    whole = run_multi_cpalm(mri.build_problem(small_mri, spec), cfg)
    groups = mri.row_groups(small_mri.shape, 3)
    split_p = mri.build_problem(small_mri, spec, groups=groups)
    assert split_p.num_y_blocks == 3
    split = run_multi_cpalm(split_p, cfg)
    F1, F2 = whole.trace[-1].objective, split.trace[-1].objective
    assert abs(F1 - F2) <= 1e-6 * abs(F1)
    w = split_p.H.assemble(split.z.blocks[1:])
    np.testing.assert_allclose(w, whole.z[1], atol=1e-8)
