import numpy as np
import pytest
from numpy.polynomial import legendre

from srlwlab.bounded_domain import (BoundaryControl, BoundedState, apply_L, approx_control_lsq,
                                    eigenpairs, energy, energy_quadrature, evolve_homogeneous,
                                    frequencies, inner_product_quadrature, lifting_solve,
                                    modal_rk4, mode_indices, moment_rhs_bounded, null_moment,
                                    penalty_sweep, project, spectral_controllability_probe)


def gl(nodes):
    x, w = legendre.leggauss(nodes)
    return 0.5 * (x + 1), 0.5 * w


def test_first_frequency_and_accumulation():
    assert frequencies(1) == pytest.approx(np.pi / np.sqrt(1 + np.pi**2), abs=1e-15)
    lam = np.abs(frequencies(np.arange(1, 51)))
    assert np.all(np.diff(lam) > 0) and np.all(lam < 1)
    assert lam[-1] == pytest.approx(0.99998, abs=1e-5)
    assert frequencies(-3) == -frequencies(3)


def test_orthonormality_by_quadrature():
    pairs = eigenpairs(8)
    G = np.array([[inner_product_quadrature(a.u, a.du, a.v, b.u, b.du, b.v, 36) for b in pairs]
                  for a in pairs])
    assert np.max(np.abs(G - np.eye(16))) < 1e-10
    one = lambda x: np.ones_like(x)
    zero = lambda x: np.zeros_like(x)
    for p in pairs:
        assert abs(inner_product_quadrature(zero, zero, one, p.u, p.du, p.v, 36)) < 1e-12


def test_eigen_relation_by_quadrature():
    """(I - d_xx) of the first component of L U_n equals d_x v_n, and the second equals u_n'."""
    x, w = gl(64)
    for p in eigenpairs(8):
        # L U_n = -i lam U_n
        lu1 = -1j * p.lam * p.u(x)
        lu1_xx = -1j * p.lam * (-(p.n * np.pi) ** 2) * p.u(x)
        dv = -p.v_amp * p.n * np.pi * np.sin(p.n * np.pi * x)
        r1 = np.sqrt(np.sum(w * np.abs(lu1 - lu1_xx - dv) ** 2))
        r2 = np.sqrt(np.sum(w * np.abs(-1j * p.lam * p.v(x) - p.du(x)) ** 2))
        assert r1 < 1e-10 and r2 < 1e-10


def test_evolution_identity_and_period(rng):
    a = BoundedState.random(6, rng)
    same = evolve_homogeneous(a, 0.0)
    np.testing.assert_array_equal(same.coeffs, a.coeffs)
    single = BoundedState.from_modes(6, {3: 1.0 + 0.5j})
    back = evolve_homogeneous(single, 2 * np.pi / abs(frequencies(3)))
    assert np.max(np.abs(back.coeffs - single.coeffs)) < 1e-12


def test_energy(rng):
    assert energy(BoundedState.zeros(3)) == 0
    assert energy(BoundedState.from_modes(3, {-2: 1.0})) == 1.0
    a = BoundedState.random(8, rng)
    assert energy_quadrature(a) == pytest.approx(energy(a), abs=1e-10)
    e0 = energy(a)
    for t in np.linspace(0, 50, 11):
        assert abs(energy(evolve_homogeneous(a, t)) - e0) < 1e-12


def test_skew_adjointness(rng):
    a, b = BoundedState.random(6, rng), BoundedState.random(6, rng)
    x, w = gl(64)

    def pair(p, q):
        pu, pv = p.evaluate(x)
        qu, qv = q.evaluate(x)
        return np.sum(w * (p.evaluate_du(x) * np.conj(q.evaluate_du(x)) + pu * np.conj(qu)
                           + pv * np.conj(qv)))

    assert abs(pair(apply_L(a), b) + pair(a, apply_L(b))) < 1e-10


def test_norms(rng):
    a = BoundedState.random(5, rng)
    x, w = gl(48)
    u, v = a.evaluate(x)
    assert a.l2_norm() == pytest.approx(np.sqrt(np.sum(w * (abs(u) ** 2 + abs(v) ** 2))), rel=1e-12)
    assert a.norm() == pytest.approx(np.sqrt(energy(a)), rel=1e-15)


def test_projection_recovers_coefficients(rng):
    a = BoundedState.random(5, rng)
    b = project(lambda x: a.evaluate(x)[0], lambda x: a.evaluate(x)[1], 5)
    assert np.max(np.abs(b.vector() - a.vector())) < 1e-12


def test_lifting_zero_boundary_is_free_flow(rng):
    a = BoundedState.random(6, rng)
    zero = (lambda t: np.zeros_like(t), lambda t: np.zeros_like(t))
    traj = lifting_solve(a, None, zero, 4.0, 6, times=[0, 1.5, 4.0])
    for i, t in enumerate(traj.times):
        np.testing.assert_allclose(traj.coeffs[i], evolve_homogeneous(a, t).coeffs, atol=1e-15)


def test_lifting_constant_boundary_ramp():
    h0 = 0.7
    h = (lambda t: np.full_like(t, h0), lambda t: np.zeros_like(t))
    traj = lifting_solve(lambda x: h0 * x, lambda x: np.zeros_like(x), h, 3.0, 10,
                         times=[0, 1, 3.0])
    x = np.linspace(0, 1, 7)
    for i, t in enumerate(traj.times):
        u, v = traj.evaluate(x, i)
        np.testing.assert_allclose(u, h0 * x, atol=1e-12)
        np.testing.assert_allclose(v, h0 * t, atol=1e-12)


def test_lifting_matches_modal_rk4(rng):
    a = BoundedState.random(6, rng)
    h = BoundaryControl(5.0, rng.standard_normal(4))
    ref = modal_rk4(a, h, 5.0, 4000)
    out = lifting_solve(a, None, h, 5.0, 6).final()
    assert np.max(np.abs(out.vector() - ref.vector())) < 1e-10


def test_boundary_trace():
    h = (lambda t: np.cos(t), lambda t: -np.sin(t))
    u0 = lambda x: x + 0.3 * np.sin(np.pi * x)
    traj = lifting_solve(u0, lambda x: np.cos(np.pi * x), h, 4.0, 12,
                         times=np.linspace(0, 4, 9))
    np.testing.assert_allclose(traj.boundary_trace(), np.cos(traj.times), atol=1e-8)
    u, _ = traj.evaluate(np.array([0.0]), 3)
    assert abs(u[0]) < 1e-14


def test_null_moment_steers_to_rest(rng):
    """A boundary control meeting the derived moments drives a 2-mode state to rest."""
    M, T = 2, 10.0
    a = BoundedState.random(M, rng)
    a.mean = 0.0
    dim = 12
    gx, gw = legendre.leggauss(200)
    t = T / 2 * (gx + 1)
    basis = np.sin(np.outer(t, np.arange(1, dim + 1) * np.pi / T))
    lam = frequencies(mode_indices(M))
    A = (T / 2 * gw[:, None] * np.exp(1j * np.outer(t, lam))).T @ basis
    A = np.vstack([A, (T / 2 * gw) @ basis])
    d = np.append(null_moment(a), 0.0)
    wts = np.linalg.lstsq(A, d, rcond=None)[0]
    assert np.max(np.abs(A @ wts - d)) < 1e-9
    final = lifting_solve(a, None, BoundaryControl(T, wts), T, M, quadrature_nodes=32,
                          panels=40).final()
    assert final.norm() < 1e-8 * a.norm()


def test_published_moment_closed_form():
    a = BoundedState.from_modes(3, {1: 1.0, -1: 1.0, 2: 1.0, -2: 1.0})
    rhs = moment_rhs_bounded(a)
    assert not np.any(moment_rhs_bounded(BoundedState.zeros(3)))
    assert rhs[3] == pytest.approx(-0.3366, abs=1e-4)
    assert rhs[3] == pytest.approx(-0.3365058, abs=1e-6)
    for n in (1, -1, 2, -2):
        r = np.sqrt(1 + (n * np.pi) ** 2)
        lam = n * np.pi / r
        direct = (-1) ** n * np.sqrt(2) * n**2 * np.pi**2 / (2 * r * (n * np.pi * lam + np.sign(n) * r))
        assert a.coefficient(n) * direct == pytest.approx(rhs[n + 3 if n < 0 else n + 2], rel=1e-14)


def test_probe_growth_and_conditioning():
    r = spectral_controllability_probe(1, 8, 10.0)
    assert np.isfinite(r.cost[0]) and r.cost[0] > 0
    assert np.all(np.diff(r.cost) > 0)
    assert np.all(np.diff(r.cond) > 0)
    assert r.cond[-1] > 1e12


def test_probe_single_constraint_closed_form():
    # one constraint pair n = +-1: cost^2 = d^H G^{-1} d with a 2x2 Gram matrix
    T = 10.0
    lam = frequencies(1)
    d = 1 + np.pi**2
    g12 = (np.exp(-2j * lam * T) - 1) / (-2j * lam)
    G = np.array([[T, g12], [np.conj(g12), T]])
    ref = np.sqrt(np.real(np.array([0, -d]) @ np.linalg.solve(G, np.array([0, -d]))))
    assert spectral_controllability_probe(1, 1, T).cost[0] == pytest.approx(ref, rel=1e-12)


def test_lsq_free_target():
    a0 = BoundedState.from_modes(4, {1: 1.0, -1: 1.0})
    aT = evolve_homogeneous(a0, 10.0)
    r = approx_control_lsq(a0, aT, 10.0, 10, 1e-6, M=16)
    assert r.residual < 1e-12 and r.control_norm < 1e-10


def target4():
    vals = {}
    for n in range(1, 5):
        vals[n] = vals[-n] = 1.0 / n**2
    a = BoundedState.from_modes(4, vals)
    return a * (1 / a.norm())


def test_penalty_sweep_signature():
    sweep = penalty_sweep(BoundedState.zeros(4), target4(), 10.0, 40)
    res = [r.residual for r in sweep]
    norms = [r.control_norm for r in sweep]
    assert np.all(np.diff(res) < 0)
    assert np.all(np.diff(norms) > 0)


def test_residual_non_increasing_in_dimension():
    res = [approx_control_lsq(BoundedState.zeros(4), target4(), 10.0, d, 1e-6).residual
           for d in (5, 10, 20, 40)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res[:-1], res[1:]))


def test_single_mode_target_reached_closely():
    a = BoundedState.from_modes(1, {1: 1 / np.sqrt(2), -1: 1 / np.sqrt(2)})
    r = approx_control_lsq(BoundedState.zeros(1), a, 10.0, 40, 0.0)
    assert r.residual < 1e-3 and r.residual_l2 < 1e-3


def test_boundary_control_h1_norm(rng):
    h = BoundaryControl(3.0, rng.standard_normal(5))
    gx, gw = legendre.leggauss(80)
    t = 1.5 * (gx + 1)
    ref = np.sum(1.5 * gw * (h(t) ** 2 + h.derivative(t) ** 2))
    assert h.h1_norm() == pytest.approx(np.sqrt(ref), rel=1e-12)
    assert abs(h(np.array([0.0, 3.0]))).max() < 1e-14
