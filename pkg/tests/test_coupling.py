import numpy as np
import pytest

from cpalm.blockspace import BlockVector, real_inner
from cpalm.coupling import (Coupling, QuadraticCoupling, empirical_gradient_lipschitz,
                            probe_coupling)
from cpalm.linops import FiniteDifference2D, diff_forward

from conftest import rng_complex


def _uw(seed=0, shape=(8, 8)):
    rng = np.random.default_rng(seed)
    return rng_complex(rng, shape), rng_complex(rng, (2,) + shape)


def test_gradients_vanish_on_consistent_pair():
    u, _ = _uw()
    H = QuadraticCoupling(1.0, u.shape)
    w = diff_forward(u)
    assert np.all(H.grad_u(u, w) == 0)
    assert np.all(H.grad_w(u, w) == 0)
    assert H.value(BlockVector([u, w])) == 0.0


def test_gradients_match_finite_differences():
    u, w = _uw(1)
    tau = 1.7
    H = QuadraticCoupling(tau, u.shape)
    z = BlockVector([u, w])
    rng = np.random.default_rng(2)
    h = 1e-6
    for i, grad in ((0, H.grad_u(u, w)), (1, H.grad_w(u, w))):
        np.testing.assert_allclose(grad, H.grad(i, z), rtol=0, atol=1e-12)
        for _ in range(5):
            d = rng_complex(rng, z[i].shape)
            d /= np.linalg.norm(d)
            fd = (H.value(z.replace(i, z[i] + h * d)) - H.value(z.replace(i, z[i] - h * d))) / (2 * h)
            an = real_inner(grad, d)
            assert fd == pytest.approx(an, rel=1e-5, abs=1e-7)
    probe_coupling(H, z)


def test_gradients_linear_in_tau():
    u, w = _uw(3)
    g1 = QuadraticCoupling(1.0, u.shape)
    g2 = QuadraticCoupling(2.0, u.shape)
    np.testing.assert_allclose(g2.grad_u(u, w), 2 * g1.grad_u(u, w), rtol=1e-15)
    np.testing.assert_allclose(g2.grad_w(u, w), 2 * g1.grad_w(u, w), rtol=1e-15)


def test_grad_w_is_exactly_tau_lipschitz():
    u, w1 = _uw(4)
    _, w2 = _uw(5)
    tau = 2.5
    H = QuadraticCoupling(tau, u.shape)
    lhs = np.linalg.norm(H.grad_w(u, w1) - H.grad_w(u, w2))
    assert lhs == pytest.approx(tau * np.linalg.norm(w1 - w2), rel=1e-12)


def test_moduli():
    assert QuadraticCoupling(1.0, (16, 16)).lipschitz_moduli() == (8.0, 1.0)
    assert QuadraticCoupling(3.0, (16, 16)).lipschitz_moduli() == (24.0, 3.0)
    Dm = FiniteDifference2D((16, 16)).to_dense()
    rho = np.linalg.eigvalsh(Dm.conj().T @ Dm).max()
    L1, _ = QuadraticCoupling(1.0, (16, 16)).lipschitz_moduli()
    assert rho <= L1 + 1e-9
    assert L1 == pytest.approx(rho, rel=0.02)


def test_descent_lemma_each_block():
    rng = np.random.default_rng(6)
    tau = 1.3
    H = QuadraticCoupling(tau, (8, 8))
    for _ in range(50):
        z = BlockVector([rng_complex(rng, (8, 8)), rng_complex(rng, (2, 8, 8))])
        for i in range(2):
            v = z.replace(i, z[i] + rng_complex(rng, z[i].shape) * rng.uniform(0.01, 10))
            d = v[i] - z[i]
            L = H.lipschitz(i, z)
            rhs = H.value(z) + real_inner(H.grad(i, z), d) + L / 2 * real_inner(d, d)
            assert H.value(v) <= rhs * (1 + 1e-12) + 1e-12


def test_joint_gradient_lipschitz_bounded():
    rng = np.random.default_rng(7)
    H = QuadraticCoupling(1.0, (8, 8))
    z = BlockVector([rng_complex(rng, (8, 8)), rng_complex(rng, (2, 8, 8))])
    M = empirical_gradient_lipschitz(H, z, radius=5.0, n_pairs=1000, seed=0)
    assert 0 < M <= H.joint_lipschitz() * (1 + 1e-12)


def test_groups_partition_and_gradients():
    rng = np.random.default_rng(8)
    shape = (6, 6)
    top = np.zeros(shape, bool)
    top[:3] = True
    H = QuadraticCoupling(1.0, shape, [top, ~top])
    Hf = QuadraticCoupling(1.0, shape)
    u, w = rng_complex(rng, shape), rng_complex(rng, (2,) + shape)
    z = BlockVector([u] + H.split(w))
    zf = BlockVector([u, w])
    assert H.value(z) == pytest.approx(Hf.value(zf), rel=1e-14)
    np.testing.assert_allclose(H.grad(0, z), Hf.grad(0, zf), atol=1e-13)
    np.testing.assert_allclose(H.assemble([H.grad(1, z), H.grad(2, z)]), Hf.grad(1, zf),
                               atol=1e-13)
    np.testing.assert_array_equal(H.assemble(H.split(w)), w)
    with pytest.raises(ValueError):
        QuadraticCoupling(1.0, shape, [top, top])


def test_generic_coupling_bounds_checked():
    H = Coupling(lambda z: 0.0, [lambda z: 0 * z[0]], [lambda z: 5.0], bounds=[(1.0, 2.0)])
    with pytest.raises(ValueError, match="outside"):
        H.lipschitz(0, BlockVector([np.zeros(2)]))


def test_probe_rejects_wrong_gradient():
    H = Coupling(lambda z: float(np.sum(z[0] ** 2)), [lambda z: z[0]], [lambda z: 2.0])
    with pytest.raises(ValueError, match="finite difference"):
        probe_coupling(H, BlockVector([np.ones(3)]))


def test_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        QuadraticCoupling(0.0, (4, 4))
