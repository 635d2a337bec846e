import numpy as np
import pytest

from icevp import algebra, integrands
from icevp.algebra import sym2
from icevp.errors import ConfigurationError, NonConvergenceError
from icevp.integrands import IntegrandSpec, RegularizedIntegrand


def rand_sym(rng, n, scale=1.0):
    return rng.normal(size=(n, 3)) * scale


def test_eval_norm_kind():
    spec = IntegrandSpec.norm(P=2.0)
    z = sym2(3, 0, 0)  # |z| = 3
    assert np.isclose(integrands.eval_F(spec, z), 3.0)
    assert integrands.eval_F(spec, sym2(0, 0, 0)) == 0.0


def test_eval_mohr_coulomb_branches():
    spec = IntegrandSpec.mohr_coulomb(P=2.0, s0=1.0)
    # quadratic branch: P/(4 s0) |z|^2
    assert np.isclose(integrands.eval_F(spec, sym2(0.5, 0, 0)), 0.125)
    # C1 splice: both branches meet at |z| = s0 with equal value and slope
    r = np.array([1.0 - 1e-9, 1.0 + 1e-9])
    v = integrands.eval_F_radial(spec, r)
    assert abs(v[1] - v[0]) < 1e-8
    assert np.isclose(v[0], spec.P * spec.s0 / 4.0)
    assert integrands.eval_F(spec, sym2(0, 0, 0)) == 0.0


def test_any_spec_zero_at_zero():
    for spec in (IntegrandSpec.norm(1.3), IntegrandSpec.mohr_coulomb(2.0, 0.7),
                 IntegrandSpec.disabled()):
        assert integrands.eval_F(spec, sym2(0, 0, 0)) == 0.0


def test_eval_F_eps_example():
    reg = RegularizedIntegrand(IntegrandSpec.norm(P=2.0), eps=16.0)
    z = sym2(0, 0, 3)
    assert np.isclose(integrands.eval_F_eps(reg, z), 5.0)


def test_grad_zero_at_zero():
    for base in (IntegrandSpec.norm(2.0), IntegrandSpec.mohr_coulomb(2.0, 1.0)):
        for eps in (1e-4, 0.1, 1.0):
            g = integrands.grad_F_eps(RegularizedIntegrand(base, eps=eps), sym2(0, 0, 0))
            assert np.all(g == 0.0)


def test_grad_is_regularized_stress():
    # norm(P=2): grad = z / sqrt(eps + |z|^2)
    reg = RegularizedIntegrand(IntegrandSpec.norm(P=2.0), eps=1.0)
    z = sym2(1, 0, 0)
    g = integrands.grad_F_eps(reg, z)
    assert np.allclose(g, z / np.sqrt(2.0))
    assert np.isclose(algebra.fro_norm(g), 1 / np.sqrt(2))


def test_monotone_envelope():
    rng = np.random.default_rng(0)
    z = rand_sym(rng, 10_000, scale=3.0)
    for base in (IntegrandSpec.norm(2.0), IntegrandSpec.mohr_coulomb(2.0, 1.0)):
        for eps in (1e-6, 1e-2, 0.5):
            reg = RegularizedIntegrand(base, eps=eps)
            f = integrands.eval_F(base, z)
            fe = integrands.eval_F_eps(reg, z)
            assert np.all(f <= fe + 1e-15)
            assert np.all(fe <= f + np.sqrt(eps) + 1e-15)


def test_gradient_bound_uniform():
    rng = np.random.default_rng(1)
    z = rand_sym(rng, 5000, scale=10.0)
    for base in (IntegrandSpec.norm(2.0), IntegrandSpec.mohr_coulomb(2.0, 1.0)):
        M = 0.5 * base.P
        for eps in (1e-8, 1e-3, 0.99):
            g = integrands.grad_F_eps(RegularizedIntegrand(base, eps=eps), z)
            assert np.all(algebra.fro_norm(g) <= M + 1e-12)


def test_gradient_finite_differences():
    rng = np.random.default_rng(2)
    n = 1000
    z = rng.normal(size=(n, 3))
    z *= (np.logspace(-3, 3, n) / algebra.fro_norm(z))[:, None]
    for base in (IntegrandSpec.norm(2.0), IntegrandSpec.mohr_coulomb(2.0, 1.0)):
        reg = RegularizedIntegrand(base, eps=0.1)
        g = integrands.grad_F_eps(reg, z)
        h = 1e-6 * np.maximum(1.0, algebra.fro_norm(z))
        fd = np.zeros_like(z)
        w = np.array([1.0, 2.0, 1.0])  # Frobenius metric weights per stored entry
        for c in range(3):
            dz = np.zeros_like(z)
            dz[:, c] = h
            fd[:, c] = (integrands.eval_F_eps(reg, z + dz)
                        - integrands.eval_F_eps(reg, z - dz)) / (2 * h * w[c])
        # combined tolerance: the quadratic branch makes |g| ~ |z|^2 near 0,
        # where plain relative FD comparison is dominated by float cancellation
        diff = algebra.fro_norm(fd - g)
        assert np.all(diff <= 1e-6 * algebra.fro_norm(g) + 1e-10)


def test_hessian_psd_and_consistent():
    rng = np.random.default_rng(3)
    z = rand_sym(rng, 200, scale=2.0)
    for base in (IntegrandSpec.norm(2.0), IntegrandSpec.mohr_coulomb(2.0, 1.0)):
        reg = RegularizedIntegrand(base, eps=0.05, delta=1e-3)
        H = integrands.hess_F_delta_eps(reg, z)
        eig = np.linalg.eigvalsh(H)
        assert np.all(eig >= reg.delta - 1e-12)
        # directional derivative of the gradient matches H in weighted coords
        v = rand_sym(rng, 200)
        t = 1e-6
        g1 = integrands.grad_F_delta_eps(reg, z + t * v)
        g0 = integrands.grad_F_delta_eps(reg, z - t * v)
        dg = (g1 - g0) / (2 * t)
        dg_w = dg.copy()
        dg_w[:, 1] *= np.sqrt(2)
        vw = v.copy()
        vw[:, 1] *= np.sqrt(2)
        pred = np.einsum("nij,nj->ni", H, vw)
        err = np.linalg.norm(pred - dg_w, axis=1) / np.maximum(np.linalg.norm(dg_w, axis=1), 1e-9)
        assert np.max(err) < 1e-4


def test_recession_closed_forms():
    rng = np.random.default_rng(4)
    z = rand_sym(rng, 100)
    spec = IntegrandSpec.norm(2.0)
    assert np.allclose(integrands.recession(spec, z), algebra.fro_norm(z))
    mc = IntegrandSpec.mohr_coulomb(2.0, 1.0)
    zu = z / algebra.fro_norm(z)[:, None]
    assert np.allclose(integrands.recession(mc, zu), 1.0)


def test_recession_of_regularization_matches_base():
    rng = np.random.default_rng(5)
    z = rand_sym(rng, 50)
    base = IntegrandSpec.mohr_coulomb(2.0, 0.5)
    for eps in (1e-6, 1e-2, 0.9):
        reg = RegularizedIntegrand(base, eps=eps)
        # numeric recession of F_eps agrees with the base recession
        num = integrands.recession_numeric(lambda w: integrands.eval_F_eps(reg, w), z)
        assert np.allclose(num, integrands.recession(base, z), rtol=1e-6)


def test_recession_numeric_flags_superlinear():
    with pytest.raises(NonConvergenceError):
        integrands.recession_numeric(lambda w: algebra.fro_norm(w) ** 2, sym2(1, 0, 0))


def test_perspective():
    spec = IntegrandSpec.mohr_coulomb(2.0, 1.0)
    rng = np.random.default_rng(6)
    z = rand_sym(rng, 64)
    t = np.abs(rng.normal(size=64)) + 0.1
    assert np.allclose(integrands.perspective(spec, 1.0, z), integrands.eval_F(spec, z))
    assert np.allclose(integrands.perspective(spec, np.zeros(64), z),
                       integrands.recession(spec, z))
    lam = 3.0
    lhs = integrands.perspective(spec, lam * t, lam * z)
    rhs = lam * integrands.perspective(spec, t, z)
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_perspective_rejects_negative_t():
    with pytest.raises(ValueError):
        integrands.perspective(IntegrandSpec.norm(2.0), -1.0, sym2(1, 0, 0))


def test_coercivity_probe():
    rng = np.random.default_rng(7)
    z = rand_sym(rng, 400, scale=5.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=0.25)
    rep = integrands.coercivity_probe(reg, z, seed=0)
    assert rep["c4"] > 0.0
    assert rep["c6"] <= 1.0 + 1e-12  # norm(P=2): F'_eps(z).z <= |z|
    assert rep["domination_margin"] >= 0.0
    with pytest.raises(ConfigurationError):
        integrands.coercivity_probe(
            RegularizedIntegrand(IntegrandSpec.disabled(), eps=0.1), z)


def test_serialization_roundtrip():
    for spec in (IntegrandSpec.norm(1.5), IntegrandSpec.mohr_coulomb(3.0, 0.25)):
        assert IntegrandSpec.from_dict(spec.to_dict()) == spec
