import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srlwlab.errors import NonlinearityOverflow
from srlwlab.spectral_core import (TorusState, apply_A, convolution_power, dispersion_table,
                                   nonlinearity_G, propagator, semigroup_apply, sobolev_norm,
                                   xs_norm)


def test_sobolev_norm_single_mode():
    s = TorusState.from_modes(3, u={1: 1.0})
    assert sobolev_norm(s.u, 0) == pytest.approx(1.0, abs=1e-15)
    assert sobolev_norm(s.u, 1) == pytest.approx(np.sqrt(2), abs=1e-15)


def test_sobolev_norm_matches_direct_sum(rng):
    s = TorusState.random(8, rng)
    direct = np.sqrt(sum((1 + k * k) ** 2 * abs(s.u[k + 8]) ** 2 for k in range(-8, 9)))
    assert sobolev_norm(s.u, 2) == pytest.approx(direct, rel=1e-14)


def test_xs_norm_uses_shifted_v_weight(rng):
    s = TorusState.random(5, rng)
    assert xs_norm(s, 1.0) == pytest.approx(np.hypot(sobolev_norm(s.u, 1), sobolev_norm(s.v, 0)))
    assert xs_norm(s, 1.0, v_order=-1.0) == pytest.approx(
        np.hypot(sobolev_norm(s.u, 1), sobolev_norm(s.v, -1)))


def test_dispersion_table_properties():
    d = dispersion_table(40)
    assert d.rho[40] == 0.0
    np.testing.assert_array_equal(d.rho, d.rho[::-1])
    assert np.all(d.rho < 1) and np.all(np.diff(d.rho[40:]) > 0)


def test_apply_A_examples(rng):
    s = TorusState.from_modes(2, v={1: 1.0})
    out = apply_A(s)
    assert out.u[3] == pytest.approx(0.5j) and out.v[3] == 0
    z = apply_A(TorusState.zeros(4))
    assert not np.any(z.u) and not np.any(z.v)
    r = TorusState.random(6, rng)
    twice = apply_A(apply_A(r))
    k = r.k
    np.testing.assert_allclose(twice.u, -k**2 / (1 + k**2) * r.u, atol=1e-14)
    np.testing.assert_allclose(twice.v, -k**2 / (1 + k**2) * r.v, atol=1e-14)


def test_propagator_is_exponential_of_A():
    from scipy.linalg import expm
    for k in (-5, -1, 0, 2, 7):
        A = np.array([[0, 1j * k / (1 + k * k)], [1j * k, 0]])
        a11, a12, a21, a22 = propagator(k, 1.3)
        np.testing.assert_allclose(np.array([[a11, a12], [a21, a22]]), expm(1.3 * A), atol=1e-14)


def test_semigroup_identity_and_zero_mode(rng):
    s = TorusState.random(5, rng)
    same = semigroup_apply(s, 0.0)
    np.testing.assert_array_equal(same.u, s.u)
    later = semigroup_apply(s, 3.7)
    assert later.u[5] == s.u[5] and later.v[5] == s.v[5]


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.integers(0, 2**32 - 1))
def test_group_law_property(t, s, seed):
    U = TorusState.random(16, np.random.default_rng(seed))
    a = semigroup_apply(semigroup_apply(U, t), s)
    b = semigroup_apply(U, t + s)
    assert np.max(np.abs(a.u - b.u)) < 1e-12 and np.max(np.abs(a.v - b.v)) < 1e-12


def test_realness_preserved(rng):
    s = TorusState.random(8, rng)
    assert s.is_real()
    assert apply_A(s).is_real()
    assert semigroup_apply(s, 2.1).is_real()
    assert nonlinearity_G(s, 2).is_real()


def test_G_single_mode_hand_value():
    s = TorusState.from_modes(4, u={1: 1.0})
    g = nonlinearity_G(s, 1)
    expected = np.zeros(9, complex)
    expected[4 + 2] = 0.2j
    np.testing.assert_allclose(g.u, expected, atol=1e-15)
    assert not np.any(g.v)
    assert not np.any(nonlinearity_G(TorusState.zeros(4), 1).u)


def test_G_matches_dense_grid_oracle(rng):
    N, p = 8, 2
    s = TorusState.random(N, rng, decay=0.0)
    M = 4 * (N + 1)
    x = 2 * np.pi * np.arange(M) / M
    u, _ = s.evaluate(x)
    w = np.fft.fft(u ** (p + 1)) / M
    k = s.k
    expected = 1j * k / (1 + k**2) * w[k % M] / (p + 1)
    np.testing.assert_allclose(nonlinearity_G(s, p).u, expected, atol=1e-12)


def test_G_overflow_flag():
    s = TorusState.from_modes(2, u={1: 1e80})
    with pytest.raises(NonlinearityOverflow):
        nonlinearity_G(s, 2)
    assert convolution_power(np.array([1.0, 2.0]), 3).size == 4


def test_G_bound_ratio_is_stable(rng):
    ratios = {}
    for N in (8, 16):
        r = []
        for _ in range(500):
            s = TorusState.random(N, rng, decay=2.0)
            s = s * (rng.uniform(0.05, 1.0) / xs_norm(s))
            r.append(xs_norm(nonlinearity_G(s, 1)) / xs_norm(s) ** 2)
        ratios[N] = max(r)
    assert all(np.isfinite(v) for v in ratios.values())
    assert ratios[16] < 3 * ratios[8]


def test_json_roundtrip(rng):
    s = TorusState.random(3, rng)
    back = TorusState.from_json(s.to_json())
    np.testing.assert_array_equal(back.u, s.u)
    data = json.loads(s.to_json())
    assert data["N"] == 3 and len(data["u"]) == 7


def test_state_validation():
    with pytest.raises(ValueError):
        TorusState(2, np.zeros(4), np.zeros(5))
    with pytest.raises(ValueError):
        TorusState(1, [np.nan, 0, 0], np.zeros(3))
