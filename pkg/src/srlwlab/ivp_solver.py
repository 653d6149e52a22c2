"""
Forward solvers for the forced g-SRLW system on the torus.

All solvers work on the truncated modal system

    d/dt u_k = i k/(1+k^2) v_k - G(U)_k + f_k(t)/(1+k^2)
    d/dt v_k = i k u_k

The linear part is always propagated exactly with ``exp(tA)``; only the
forcing and nonlinear integrals carry quadrature error. ``rk4_oracle`` is an
independent classical integrator used to cross-check the other two.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import legendre
from scipy.interpolate import BarycentricInterpolator

from .errors import NonConvergence, NonlinearityOverflow
from .spectral_core import TorusState, propagator, sobolev_norm, wavenumbers

__all__ = [
    "ForcingSignal",
    "TrajectorySample",
    "CollocationGrid",
    "PicardResult",
    "batch_G",
    "solve_linear_forced",
    "nonlinear_duhamel",
    "picard_solve",
    "rk4_oracle",
    "sup_xs_distance",
]


@dataclass
class ForcingSignal:
    """Modal forcing f_k(t) of the first equation, |k| <= N.

    ``evaluator`` maps an array of times (shape (m,)) to coefficients of
    shape (m, 2N+1).
    """

    kind: str
    N: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    max_frequency: float = 0.0

    KINDS = ("modal_time_series", "moving_distributed", "moving_point")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.asarray(self.evaluator(t), dtype=complex)
        return out.reshape(t.size, 2 * self.N + 1)

    @classmethod
    def zero(cls, N):
        return cls("modal_time_series", N, lambda t: np.zeros((t.size, 2 * N + 1), complex))

    @classmethod
    def constant(cls, N, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        return cls("modal_time_series", N, lambda t: np.broadcast_to(coeffs, (t.size, coeffs.size)))

    @classmethod
    def from_samples(cls, times, values):
        """Barycentric polynomial interpolant through sampled modal values.

        Use Chebyshev-distributed sample times; equispaced samples give a
        badly conditioned interpolant beyond a few dozen nodes.
        """
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=complex)
        N = (values.shape[1] - 1) // 2
        interp = BarycentricInterpolator(times, values, axis=0)
        return cls("modal_time_series", N, lambda t: interp(t))

    def scaled(self, alpha):
        f = self.evaluator
        return ForcingSignal(self.kind, self.N, lambda t: alpha * f(t), self.max_frequency)

    def __add__(self, other):
        f, g = self.evaluator, other.evaluator
        return ForcingSignal(
            "modal_time_series", self.N, lambda t: f(t) + g(t),
            max(self.max_frequency, other.max_frequency),
        )


@dataclass
class CollocationGrid:
    """Composite Chebyshev-Lobatto grid on [0, T] with spectral integration matrices.

    Panels share their endpoints, so the grid has ``panels*(nodes-1)+1``
    distinct times.
    """

    T: float
    panels: int = 16
    nodes: int = 12

    def __post_init__(self):
        if self.panels < 1 or self.nodes < 3:
            raise ValueError("need panels >= 1 and nodes >= 3")

    @cached_property
    def _reference(self):
        n = self.nodes
        x = -np.cos(np.pi * np.arange(n) / (n - 1))
        V = legendre.legvander(x, n - 1)
        W = np.empty_like(V)
        for m in range(n):
            c = np.zeros(n)
            c[m] = 1.0
            W[:, m] = legendre.legval(x, legendre.legint(c, lbnd=-1))
        # Q[i, j] = int_{-1}^{x_i} l_j(x) dx
        Q = np.linalg.solve(V.T, W.T).T
        return x, Q

    @cached_property
    def times(self):
        x, _ = self._reference
        edges = np.linspace(0.0, self.T, self.panels + 1)
        pts = [edges[0:1]]
        for a, b in zip(edges[:-1], edges[1:]):
            pts.append(a + (x[1:] + 1.0) * (b - a) / 2)
        t = np.concatenate(pts)
        t[-1] = self.T
        return t

    @property
    def size(self):
        return self.times.size

    def cumulative_integral(self, values):
        """int_0^{t_i} g(tau) dtau at every grid time, for samples g(t_i) along axis 0."""
        _, Q = self._reference
        n = self.nodes
        h = self.T / self.panels
        values = np.asarray(values)
        out = np.zeros_like(values, dtype=complex)
        acc = np.zeros(values.shape[1:], dtype=complex)
        for p in range(self.panels):
            sl = slice(p * (n - 1), p * (n - 1) + n)
            local = np.tensordot(Q, values[sl], axes=(1, 0)) * (h / 2)
            out[sl] = acc + local
            acc = out[sl][-1].copy()
        return out

    def interpolate(self, values, t):
        """Barycentric evaluation of grid samples at off-grid times (panel-local)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        values = np.asarray(values)
        n = self.nodes
        h = self.T / self.panels
        idx = np.clip((t // h).astype(int), 0, self.panels - 1)
        out = np.empty((t.size,) + values.shape[1:], dtype=values.dtype)
        for p in np.unique(idx):
            sl = slice(p * (n - 1), p * (n - 1) + n)
            interp = BarycentricInterpolator(self.times[sl], values[sl], axis=0)
            mask = idx == p
            out[mask] = interp(t[mask])
        return out


@dataclass
class TrajectorySample:
    """States on an increasing time grid; ``u`` and ``v`` have shape (len(times), 2N+1)."""

    N: int
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    grid: CollocationGrid | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        shape = (self.times.size, 2 * self.N + 1)
        if self.u.shape != shape or self.v.shape != shape:
            raise ValueError(f"state arrays must have shape {shape}")

    def state(self, i):
        return TorusState(self.N, self.u[i], self.v[i])

    def final(self):
        return self.state(-1)

    def __len__(self):
        return self.times.size

    def __sub__(self, other):
        return TrajectorySample(self.N, self.times, self.u - other.u, self.v - other.v, self.grid)

    def xs_norms(self, s=1.0, v_order=None):
        if v_order is None:
            v_order = s - 1.0
        return np.hypot(sobolev_norm(self.u, s), sobolev_norm(self.v, v_order))

    def sup_norm(self, s=1.0, v_order=None):
        return float(np.max(self.xs_norms(s, v_order)))

    def to_csv(self, path):
        k = wavenumbers(self.N)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "k", "re_u", "im_u", "re_v", "im_v"])
            for i, t in enumerate(self.times):
                for j, kk in enumerate(k):
                    u, v = self.u[i, j], self.v[i, j]
                    writer.writerow([repr(float(t)), int(kk), repr(u.real), repr(u.imag),
                                     repr(v.real), repr(v.imag)])


def sup_xs_distance(a, b, s=1.0, v_order=None):
    return (a - b).sup_norm(s, v_order)


def _propagate_batch(k, dt, u, v):
    a11, a12, a21, a22 = propagator(k, dt)
    return a11 * u + a12 * v, a21 * u + a22 * v


def solve_linear_forced(U0, f, T, quadrature_nodes=16, times=None, panels=1):
    """Exact linear propagation plus composite Gauss-Legendre Duhamel integral.

    Parameters
    ----------
    U0 : TorusState
    f : ForcingSignal
        Modal forcing of the first equation.
    T : float
        Final time; ignored when ``times`` is given (its last entry is used).
    quadrature_nodes : int
        Gauss-Legendre nodes per panel.
    times : array_like, optional
        Output times starting at 0; defaults to ``linspace(0, T, 65)``.
    panels : int
        Gauss-Legendre panels per output interval.
    """
    if quadrature_nodes < 2:
        raise ValueError("quadrature_nodes must be at least 2")
    if times is None:
        times = np.linspace(0.0, T, 65)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise ValueError("output times must start at 0")
    N = U0.N
    k = wavenumbers(N)
    x, w = legendre.leggauss(quadrature_nodes)
    weight = 1.0 / (1.0 + k**2)

    nt = times.size
    u = np.empty((nt, 2 * N + 1), complex)
    v = np.empty((nt, 2 * N + 1), complex)
    u[0], v[0] = U0.u, U0.v
    for i in range(nt - 1):
        t0, t1 = times[i], times[i + 1]
        uu, vv = _propagate_batch(k, t1 - t0, u[i], v[i])
        edges = np.linspace(t0, t1, panels + 1)
        mids = 0.5 * (edges[1:] + edges[:-1])
        halves = 0.5 * (edges[1:] - edges[:-1])
        taus = (mids[:, None] + halves[:, None] * x[None, :]).ravel()
        wts = (halves[:, None] * w[None, :]).ravel()
        F = f(taus) * weight
        a11, _, a21, _ = propagator(k[None, :], (t1 - taus)[:, None])
        uu = uu + np.sum(wts[:, None] * a11 * F, axis=0)
        vv = vv + np.sum(wts[:, None] * a21 * F, axis=0)
        u[i + 1], v[i + 1] = uu, vv
    return TrajectorySample(N, times, u, v)


def batch_G(u, p, bound=1e150):
    """Nonlinearity G for a batch of u-coefficient rows (shape (m, 2N+1)); returns the u-part."""
    u = np.asarray(u, dtype=complex)
    m, n = u.shape
    N = (n - 1) // 2
    acc = u
    for _ in range(p):
        out = np.zeros((m, acc.shape[1] + n - 1), complex)
        for j in range(n):
            out[:, j:j + acc.shape[1]] += u[:, j:j + 1] * acc
        acc = out
        if not np.all(np.isfinite(acc)) or np.max(np.abs(acc)) > bound:
            raise NonlinearityOverflow(f"convolution magnitude exceeded {bound:g}")
    M = (acc.shape[1] - 1) // 2
    k = wavenumbers(N)
    return 1j * k / (1.0 + k**2) * acc[:, M - N:M + N + 1] / (p + 1)


def nonlinear_duhamel(traj, p, grid=None):
    """int_0^t S(t - tau) G(U(tau)) dtau at every grid time of ``traj``.

    Uses the group law: the integral equals S(t) int_0^t S(-tau) G(U(tau)) dtau,
    whose integrand is integrated with the grid's spectral integration matrix.
    """
    grid = grid or traj.grid
    if grid is None:
        raise ValueError("trajectory is not sampled on a collocation grid")
    k = wavenumbers(traj.N)
    t = grid.times[:, None]
    g = batch_G(traj.u, p)
    bu, bv = _propagate_batch(k[None, :], -t, g, np.zeros_like(g))
    iu = grid.cumulative_integral(bu)
    iv = grid.cumulative_integral(bv)
    nu, nv = _propagate_batch(k[None, :], t, iu, iv)
    return TrajectorySample(traj.N, grid.times, nu, nv, grid)


@dataclass
class PicardResult:
    trajectory: TrajectorySample
    iterations: int
    contraction_ratio: float
    ratios: list
    increments: list


def picard_solve(U0, f, p, T, tol=1e-12, max_iter=50, s=1.0, grid=None,
                 quadrature_nodes=16, forcing_panels=1):
    """Picard fixed point of the Duhamel formula on a collocation grid.

    Iterates ``U <- S(t)U0 - int S(t-tau) G(U) + int S(t-tau) F`` from the
    linear forced trajectory until the sup-in-time X^s increment is below
    ``tol``. Raises NonConvergence when ``max_iter`` is reached or the
    increments blow up.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = grid or CollocationGrid(T)
    if not np.isclose(grid.T, T):
        raise ValueError("grid horizon does not match T")
    linear = solve_linear_forced(U0, f, T, quadrature_nodes, times=grid.times, panels=forcing_panels)
    linear.grid = grid
    current = linear
    increments, ratios = [], []
    for it in range(1, max_iter + 1):
        try:
            nl = nonlinear_duhamel(current, p, grid)
        except NonlinearityOverflow as exc:
            raise NonConvergence(f"Picard iteration overflowed at iteration {it}",
                                 it, increments) from exc
        nxt = linear - nl
        inc = sup_xs_distance(nxt, current, s)
        if not np.isfinite(inc):
            raise NonConvergence("Picard increment is not finite", it, increments)
        if increments and increments[-1] > 0:
            ratios.append(inc / increments[-1])
        increments.append(inc)
        current = nxt
        if inc < tol:
            ratio = ratios[-1] if ratios else 0.0
            return PicardResult(current, it, ratio, ratios, increments)
    raise NonConvergence(
        f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations "
        f"(last increment {increments[-1]:.3e})", max_iter, increments)


def rk4_oracle(U0, f, p, T, dt, n_samples=2):
    """Classical RK4 on the truncated modal ODE; ``p = 0`` means the linear system.

    Returns ``n_samples`` equally spaced states (the step count is rounded up
    to a multiple of ``n_samples - 1``).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    N = U0.N
    k = wavenumbers(N)
    a = 1j * k / (1.0 + k**2)
    b = 1j * k
    weight = 1.0 / (1.0 + k**2)
    segments = max(n_samples - 1, 1)
    steps = int(np.ceil(T / dt / segments)) * segments
    h = T / steps

    def rhs(t, u, v):
        du = a * v + f(np.array([t]))[0] * weight
        if p:
            du = du - batch_G(u[None, :], p)[0]
        return du, b * u

    u, v = U0.u.copy(), U0.v.copy()
    us, vs = [u.copy()], [v.copy()]
    stride = steps // segments
    for n in range(steps):
        t = n * h
        k1u, k1v = rhs(t, u, v)
        k2u, k2v = rhs(t + h / 2, u + h / 2 * k1u, v + h / 2 * k1v)
        k3u, k3v = rhs(t + h / 2, u + h / 2 * k2u, v + h / 2 * k2v)
        k4u, k4v = rhs(t + h, u + h * k3u, v + h * k3v)
        u = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if (n + 1) % stride == 0:
            us.append(u.copy())
            vs.append(v.copy())
    times = np.linspace(0.0, T, segments + 1)
    return TrajectorySample(N, times, np.array(us), np.array(vs))
