import json

import numpy as np
import pytest

from conftest import random_state
from srlwlab.errors import MeanMismatch, NonConvergence
from srlwlab.ivp_solver import (CollocationGrid, ForcingSignal, TrajectorySample, picard_solve,
                                rk4_oracle)
from srlwlab.moving_control import BumpProfile, moving_forcing_modes, synthesize_moving
from srlwlab.nonlinear_control import (ControlOperatorPhi, controlled_trajectory, default_grid,
                                       nonlinear_exact_control, psi_map, w_integral)
from srlwlab.spectral_core import TorusState, nonlinearity_G, signed_frequency, xs_norm

B = BumpProfile.one_plus_cos()
N, C, T = 8, 3.0, 7.0


def small_data(rng, norm, n=N):
    U0, UT = random_state(n, rng), random_state(n, rng)
    scale = norm / (xs_norm(U0) + xs_norm(UT))
    return U0 * scale, UT * scale


def constant_trajectory(U, grid):
    return TrajectorySample(U.N, grid.times, np.tile(U.u, (grid.size, 1)),
                            np.tile(U.v, (grid.size, 1)), grid)


def test_w_integral_zero_and_constant(rng):
    grid = CollocationGrid(3.0, panels=8, nodes=12)
    assert xs_norm(w_integral(constant_trajectory(TorusState.zeros(4), grid), 1)) == 0
    U = TorusState.random(4, rng) * 0.1
    w = w_integral(constant_trajectory(U, grid), 1)
    g = nonlinearity_G(U, 1).u
    k = U.k
    om = signed_frequency(k)
    with np.errstate(invalid="ignore", divide="ignore"):
        su = np.where(k == 0, 3.0, np.sin(om * 3.0) / om)
        sv = np.where(k == 0, 0.0, 1j * np.sqrt(1 + k**2) * (1 - np.cos(om * 3.0)) / om)
    np.testing.assert_allclose(w.u, su * g, atol=1e-14)
    np.testing.assert_allclose(w.v, sv * g, atol=1e-14)


def test_w_integral_lipschitz_shadow(rng):
    grid = CollocationGrid(2.0, panels=8, nodes=10)
    ratios = []
    for _ in range(10):
        U = TorusState.random(5, rng) * 0.01
        V = U + TorusState.random(5, rng) * 1e-4
        d = xs_norm(w_integral(constant_trajectory(U, grid), 1)
                    - w_integral(constant_trajectory(V, grid), 1))
        ratios.append(d / ((xs_norm(U) + xs_norm(V)) * xs_norm(U - V)))
    assert max(ratios) < 50 and max(ratios) / min(ratios) < 20


def test_phi_is_linear(rng):
    phi = ControlOperatorPhi(B, C, T)
    P0, PT = random_state(6, rng), random_state(6, rng)
    Q0, QT = random_state(6, rng), random_state(6, rng)
    lhs = phi(P0 * 2.0 + Q0 * -0.7, PT * 2.0 + QT * -0.7)
    a, b = phi(P0, PT), phi(Q0, QT)
    np.testing.assert_allclose(lhs.f_plus, 2 * a.f_plus - 0.7 * b.f_plus, atol=1e-10)
    np.testing.assert_allclose(lhs.f_minus, 2 * a.f_minus - 0.7 * b.f_minus, atol=1e-10)


def test_psi_without_nonlinearity_is_linear_control(rng):
    U0, UT = small_data(rng, 1e-2, 5)
    grid = default_grid(5, C, T)
    phi = ControlOperatorPhi(B, C, T)
    A = constant_trajectory(random_state(5, rng), grid)
    Bt = constant_trajectory(random_state(5, rng), grid)
    pa, pb = psi_map(A, U0, UT, phi, 0, grid), psi_map(Bt, U0, UT, phi, 0, grid)
    assert (pa - pb).sup_norm() == 0
    ref = controlled_trajectory(U0, synthesize_moving(U0, UT, B, C, T), B, grid)
    assert (pa - ref).sup_norm() < 1e-15


def test_psi_anchoring_and_contraction(rng):
    U0, UT = small_data(rng, 1e-3)
    grid = default_grid(N, C, T)
    phi = ControlOperatorPhi(B, C, T)
    U = psi_map(constant_trajectory(U0, grid), U0, UT, phi, 0, grid)
    V = U - constant_trajectory(random_state(N, rng) * 1e-4, grid)
    pu, pv = psi_map(U, U0, UT, phi, 1, grid), psi_map(V, U0, UT, phi, 1, grid)
    assert xs_norm(pu.state(0) - U0) < 1e-15
    assert xs_norm(pu.final() - UT) < 1e-12
    assert (pu - pv).sup_norm() <= 0.5 * (U - V).sup_norm()


def test_acceptance_problem_converges(rng):
    U0, UT = small_data(rng, 1e-3)
    h, rep = nonlinear_exact_control(U0, UT, B, C, T, 1)
    assert rep.converged and rep.iterations <= 10
    assert all(r < 0.5 for r in rep.contraction_ratios)
    assert all(b <= a for a, b in zip(rep.contraction_ratios[:-1], rep.contraction_ratios[1:]))
    assert rep.terminal_error < 1e-6


def test_closed_loop_against_rk4(rng):
    U0, UT = small_data(rng, 1e-3)
    h, rep = nonlinear_exact_control(U0, UT, B, C, T, 1, verify=False)
    final = rk4_oracle(U0, moving_forcing_modes(h, B), 1, T, 2e-3).final()
    assert xs_norm(final - UT) / max(1.0, xs_norm(UT)) < 1e-6


def test_free_trajectory_needs_no_control(rng):
    U0 = random_state(N, rng) * 1e-3
    grid = default_grid(N, C, T)
    free = picard_solve(U0, ForcingSignal.zero(N), 1, T, grid=grid).trajectory.final()
    h, rep = nonlinear_exact_control(U0, free, B, C, T, 1, grid=grid)
    assert h.control_norm < 1e-10 * xs_norm(U0)
    assert rep.terminal_error < 1e-12


def test_small_data_limit_is_linear_control(rng):
    U0, UT = small_data(rng, 1.0)
    diffs = []
    for eps in (1e-2, 1e-3, 1e-4):
        hn, _ = nonlinear_exact_control(U0 * eps, UT * eps, B, C, T, 1, verify=False)
        hl = synthesize_moving(U0 * eps, UT * eps, B, C, T)
        diffs.append(np.linalg.norm(hn.f_plus - hl.f_plus) / np.linalg.norm(hl.f_plus))
    slopes = -np.diff(np.log10(diffs))
    assert np.all(np.abs(slopes - 1.0) < 0.2)


def test_nonconvergence_beyond_contraction_boundary(rng):
    """At data norm 20 (smooth random data) the fixed-point increments grow."""
    U0, UT = small_data(np.random.default_rng(0), 20.0)
    with pytest.raises(NonConvergence):
        nonlinear_exact_control(U0, UT, B, C, T, 1, verify=False)


def test_mean_mismatch(rng):
    U0, UT = small_data(rng, 1e-3)
    UT.v[N] = 1e-3
    with pytest.raises(MeanMismatch):
        nonlinear_exact_control(U0, UT, B, C, T, 1)


def test_report_exports(tmp_path, rng):
    U0, UT = small_data(rng, 1e-3, 4)
    _, rep = nonlinear_exact_control(U0, UT, B, C, T, 1)
    data = json.loads(rep.to_json())
    assert data["iterations"] == rep.iterations
    rep.trace_csv(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "iter,ratio,increment" and len(lines) == rep.iterations + 1
