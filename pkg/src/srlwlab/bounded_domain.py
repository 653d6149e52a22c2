"""
The linear system on (0, 1) with u(0) = 0, u(1) = h(t) and v_x(0) = v_x(1) = 0.

Writing ``U_t = L U`` with ``L = [[0, (I - d_xx)^{-1} d_x], [d_x, 0]]`` (u in
H^1_0, v in L^2), the operator has the orthonormal eigenbasis

    U_n = (i sin(n pi x) / sqrt(1 + n^2 pi^2), -cos(n pi x)),   n = +-1, +-2, ...
    L U_n = -i lam_n U_n,   lam_n = n pi / sqrt(1 + n^2 pi^2),

plus the mean mode ``(0, 1)`` with eigenvalue 0. Orthonormality is in the
Hermitian product ``int (u' conj(f)' + u conj(f)) + int v conj(g)``, so a
state is stored as its coefficients ``a_n`` and ``mean``, and the free flow is
``a_n -> exp(-i lam_n t) a_n``. The frequencies accumulate at +-1, which is
what defeats exact control by the boundary.

Boundary data are handled by lifting: ``phi = u - x h(t)`` has homogeneous
boundary values and solves ``W_t = L W + F`` with
``F = (-(I - d_xx)^{-1}(x h'), h)``, whose modal components are
``F_n = -h' kappa_n`` and ``F_mean = h``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import mpmath
import numpy as np
from numpy.polynomial import legendre

from .moment_toolkit import gram_matrix_mp

__all__ = [
    "IntervalEigenpair",
    "BoundedState",
    "BoundaryControl",
    "BoundedTrajectory",
    "ProbeResult",
    "LsqResult",
    "mode_indices",
    "frequencies",
    "eigenpairs",
    "evolve_homogeneous",
    "energy",
    "energy_quadrature",
    "inner_product_quadrature",
    "apply_L",
    "lifting_forcing_weights",
    "project",
    "lifting_solve",
    "modal_rk4",
    "moment_rhs_bounded",
    "null_moment",
    "spectral_controllability_probe",
    "approx_control_lsq",
    "penalty_sweep",
]


def mode_indices(M):
    """n = -M..-1, 1..M."""
    if M < 1:
        raise ValueError("M must be at least 1")
    return np.concatenate([np.arange(-M, 0), np.arange(1, M + 1)])


def frequencies(n):
    """lam_n = n pi / sqrt(1 + n^2 pi^2) (odd in n, accumulating at +-1)."""
    n = np.asarray(n, dtype=float)
    return n * np.pi / np.sqrt(1.0 + (n * np.pi) ** 2)


@dataclass(frozen=True)
class IntervalEigenpair:
    """U_n = (u_amp sin(n pi x), v_amp cos(n pi x)) with L U_n = -i lam U_n."""

    n: int
    lam: float
    u_amp: complex
    v_amp: complex

    def u(self, x):
        return self.u_amp * np.sin(self.n * np.pi * np.asarray(x))

    def du(self, x):
        return self.u_amp * self.n * np.pi * np.cos(self.n * np.pi * np.asarray(x))

    def v(self, x):
        return self.v_amp * np.cos(self.n * np.pi * np.asarray(x))


def eigenpairs(M):
    out = []
    for n in mode_indices(M):
        n = int(n)
        out.append(IntervalEigenpair(n, float(frequencies(n)),
                                     1j / np.sqrt(1.0 + (n * np.pi) ** 2), -1.0 + 0j))
    return out


@dataclass
class BoundedState:
    """Coefficients a_n (n = -M..-1, 1..M) plus the v-mean coefficient."""

    M: int
    coeffs: np.ndarray
    mean: complex = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex).copy()
        if self.coeffs.shape != (2 * self.M,):
            raise ValueError(f"expected {2 * self.M} coefficients")
        self.mean = complex(self.mean)
        if not (np.all(np.isfinite(self.coeffs)) and np.isfinite(self.mean)):
            raise ValueError("coefficients must be finite")

    @property
    def n(self):
        return mode_indices(self.M)

    @classmethod
    def zeros(cls, M):
        return cls(M, np.zeros(2 * M))

    @classmethod
    def from_modes(cls, M, modes, mean=0.0):
        st = cls.zeros(M)
        for n, val in modes.items():
            st.coeffs[_slot(M, n)] = val
        st.mean = complex(mean)
        return st

    @classmethod
    def random(cls, M, rng, decay=0.0):
        w = (1.0 + mode_indices(M) ** 2.0) ** (-decay / 2)
        z = rng.standard_normal(2 * M) + 1j * rng.standard_normal(2 * M)
        return cls(M, z * w, complex(rng.standard_normal(), rng.standard_normal()))

    def coefficient(self, n):
        return self.coeffs[_slot(self.M, n)]

    def vector(self):
        """Coefficients followed by the mean: the coordinates in the orthonormal basis."""
        return np.append(self.coeffs, self.mean)

    @classmethod
    def from_vector(cls, M, vec):
        return cls(M, vec[:-1], vec[-1])

    def resized(self, M):
        out = BoundedState.zeros(M)
        m = min(M, self.M)
        for n in mode_indices(m):
            out.coeffs[_slot(M, n)] = self.coeffs[_slot(self.M, n)]
        out.mean = self.mean
        return out

    def __sub__(self, other):
        return BoundedState(self.M, self.coeffs - other.coeffs, self.mean - other.mean)

    def __add__(self, other):
        return BoundedState(self.M, self.coeffs + other.coeffs, self.mean + other.mean)

    def __mul__(self, alpha):
        return BoundedState(self.M, alpha * self.coeffs, alpha * self.mean)

    __rmul__ = __mul__

    def norm(self):
        """H^1_0 x L^2 norm (l^2 norm of the coordinates)."""
        return float(np.linalg.norm(self.vector()))

    def l2_norm(self):
        """L^2 x L^2 norm of (u, v)."""
        pos = np.arange(1, self.M + 1)
        ap, am = self.coeffs[self.M:], self.coeffs[:self.M][::-1]
        u_sin = 1j * (ap - am) / np.sqrt(1.0 + (pos * np.pi) ** 2)
        v_cos = -(ap + am)
        return float(np.sqrt(np.sum(np.abs(u_sin) ** 2) / 2 + np.sum(np.abs(v_cos) ** 2) / 2
                             + abs(self.mean) ** 2))

    def evaluate(self, x):
        """(u(x), v(x)) for points x in [0, 1]."""
        x = np.asarray(x, dtype=float)
        n = self.n
        S = np.sin(np.pi * np.multiply.outer(x, n))
        C = np.cos(np.pi * np.multiply.outer(x, n))
        ua = 1j / np.sqrt(1.0 + (n * np.pi) ** 2)
        return S @ (ua * self.coeffs), -C @ self.coeffs + self.mean

    def evaluate_du(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n
        C = np.cos(np.pi * np.multiply.outer(x, n))
        ua = 1j * n * np.pi / np.sqrt(1.0 + (n * np.pi) ** 2)
        return C @ (ua * self.coeffs)


def _slot(M, n):
    if n == 0 or abs(n) > M:
        raise IndexError(f"mode {n} outside +-1..+-{M}")
    return n + M if n < 0 else n + M - 1


def evolve_homogeneous(a, t):
    return BoundedState(a.M, np.exp(-1j * frequencies(a.n) * t) * a.coeffs, a.mean)


def energy(a):
    """int |u|^2 + |u_x|^2 + |v|^2, exact by orthonormality."""
    return float(np.sum(np.abs(a.coeffs) ** 2) + abs(a.mean) ** 2)


def _gl(M, nodes=None):
    nodes = nodes or 4 * (M + 1)
    x, w = legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def inner_product_quadrature(u1, du1, v1, u2, du2, v2, nodes):
    """Hermitian H^1_0 x L^2 product of sampled pairs by Gauss-Legendre quadrature."""
    x, w = _gl(0, nodes)
    return complex(np.sum(w * (du1(x) * np.conj(du2(x)) + u1(x) * np.conj(u2(x))
                               + v1(x) * np.conj(v2(x)))))


def energy_quadrature(a, nodes=None):
    x, w = _gl(a.M, nodes)
    u, v = a.evaluate(x)
    du = a.evaluate_du(x)
    return float(np.sum(w * (np.abs(u) ** 2 + np.abs(du) ** 2 + np.abs(v) ** 2)))


def apply_L(a):
    """Coefficients of L U: mode-wise multiplication by -i lam_n."""
    return BoundedState(a.M, -1j * frequencies(a.n) * a.coeffs, 0.0)


def lifting_forcing_weights(n):
    """kappa_n with <(-(I - d_xx)^{-1} x, 0), U_n> = -kappa_n."""
    n = np.asarray(n, dtype=float)
    return 1j * (-1.0) ** np.abs(n) / (n * np.pi * np.sqrt(1.0 + (n * np.pi) ** 2))


def project(u, v, M, nodes=None):
    """Coordinates of (u, v) with u in H^1_0, given as callables on [0, 1].

    Uses ``<u, u_n>_{H^1} = (1 + n^2 pi^2) int u conj(u_n)`` (valid since u
    vanishes at both ends) and Gauss-Legendre quadrature.
    """
    x, w = _gl(M, nodes or max(256, 8 * (M + 1)))
    ux, vx = np.asarray(u(x), dtype=complex), np.asarray(v(x), dtype=complex)
    n = mode_indices(M)
    S = np.sin(np.pi * np.multiply.outer(x, n))
    C = np.cos(np.pi * np.multiply.outer(x, n))
    ua = 1j / np.sqrt(1.0 + (n * np.pi) ** 2)
    cu = (1.0 + (n * np.pi) ** 2) * np.conj(ua) * ((w * ux) @ S)
    cv = -((w * vx) @ C)
    return BoundedState(M, cu + cv, np.sum(w * vx))


@dataclass
class BoundaryControl:
    """h(t) = sum_j weights[j] sin((j+1) pi t / T); vanishes at t = 0 and t = T.

    ``basis = "sine"`` is the only basis; it is orthogonal in both L^2(0, T)
    and H^1(0, T), so the H^1 norm is a weighted l^2 norm of the weights.
    """

    T: float
    weights: np.ndarray
    basis: str = "sine"

    def __post_init__(self):
        if self.basis != "sine":
            raise ValueError(f"unknown control basis {self.basis!r}")
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 1 or self.weights.size < 1:
            raise ValueError("weights must be a nonempty vector")

    @property
    def dim(self):
        return self.weights.size

    def _rates(self):
        return np.arange(1, self.dim + 1) * np.pi / self.T

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.sin(np.multiply.outer(t, self._rates())) @ self.weights

    def derivative(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r = self._rates()
        return np.cos(np.multiply.outer(t, r)) @ (r * self.weights)

    @staticmethod
    def h1_weights(T, dim):
        r = np.arange(1, dim + 1) * np.pi / T
        return T / 2 * (1.0 + r**2)

    def h1_norm(self):
        return float(np.sqrt(np.sum(self.h1_weights(self.T, self.dim) * np.abs(self.weights) ** 2)))

    @classmethod
    def unit(cls, T, dim, j):
        w = np.zeros(dim)
        w[j] = 1.0
        return cls(T, w)


@dataclass
class BoundedTrajectory:
    """Lifted coordinates w(t) of phi = u - x h(t) together with h(t)."""

    M: int
    times: np.ndarray
    coeffs: np.ndarray
    mean: np.ndarray
    h: np.ndarray

    def state(self, i):
        """Coordinates of the lifted state (phi, v) at times[i]."""
        return BoundedState(self.M, self.coeffs[i], self.mean[i])

    def final(self):
        return self.state(-1)

    def evaluate(self, x, i):
        """Un-lifted (u, v) at times[i]: u = phi + x h."""
        x = np.asarray(x, dtype=float)
        phi, v = self.state(i).evaluate(x)
        return phi + x * self.h[i], v

    def boundary_trace(self):
        """u(1, t) at every stored time."""
        return np.array([self.evaluate(np.array([1.0]), i)[0][0] for i in range(self.times.size)])

    def to_csv(self, path):
        n = mode_indices(self.M)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "n", "re_a", "im_a"])
            for i, t in enumerate(self.times):
                for j, nn in enumerate(n):
                    z = self.coeffs[i, j]
                    w.writerow([repr(float(t)), int(nn), repr(z.real), repr(z.imag)])
                w.writerow([repr(float(t)), 0, repr(self.mean[i].real), repr(self.mean[i].imag)])


def _as_signal(h):
    if isinstance(h, BoundaryControl):
        return h, h.derivative
    if isinstance(h, tuple):
        return h
    raise TypeError("h must be a BoundaryControl or a (h, h') pair of callables")


def lifting_solve(u0, v0, h, T, M, times=None, quadrature_nodes=24, panels=None):
    """Boundary-forced solve by lifting and exact modal propagation.

    Parameters
    ----------
    u0, v0 : callables on [0, 1], or ``u0`` a BoundedState (then ``v0`` is ignored)
        Initial data; callables must satisfy ``u0(0) = 0`` and ``u0(1) = h(0)``.
        A BoundedState gives the lifted coordinates of ``(u0 - x h(0), v0)`` directly.
    h : BoundaryControl or (h, h') pair of callables
    T : float
    M : int
        Mode cutoff.
    times : array_like, optional
        Output times from 0; defaults to ``[0, T]``.
    """
    hf, dh = _as_signal(h)
    if isinstance(u0, BoundedState):
        w0 = u0.resized(M)
    else:
        h0 = complex(np.asarray(hf(np.array([0.0])))[0])
        w0 = project(lambda x: np.asarray(u0(x), dtype=complex) - x * h0, v0, M)
    times = np.array([0.0, T]) if times is None else np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase")
    n = mode_indices(M)
    lam = frequencies(n)
    kappa = lifting_forcing_weights(n)
    gx, gw = legendre.leggauss(quadrature_nodes)
    panels = panels or max(1, int(np.ceil(T)))

    nt = times.size
    coeffs = np.empty((nt, 2 * M), complex)
    mean = np.empty(nt, complex)
    hv = np.empty(nt, complex)
    coeffs[0], mean[0] = w0.coeffs, w0.mean
    hv[0] = np.asarray(hf(times[:1]))[0]
    # w_n(t) = exp(-i lam t) [w_n(0) - kappa_n int_0^t exp(i lam tau) h'(tau) dtau]
    acc = np.zeros(2 * M, complex)
    acc_mean = 0.0 + 0.0j
    for i in range(nt - 1):
        t0, t1 = times[i], times[i + 1]
        edges = np.linspace(t0, t1, panels + 1)
        mids, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
        tau = (mids[:, None] + half[:, None] * gx).ravel()
        wts = (half[:, None] * gw).ravel()
        acc = acc + np.exp(1j * np.multiply.outer(tau, lam)).T @ (wts * dh(tau))
        acc_mean = acc_mean + np.sum(wts * hf(tau))
        coeffs[i + 1] = np.exp(-1j * lam * t1) * (w0.coeffs - kappa * acc)
        mean[i + 1] = w0.mean + acc_mean
        hv[i + 1] = np.asarray(hf(np.array([t1])))[0]
    return BoundedTrajectory(M, times, coeffs, mean, hv)


def modal_rk4(w0, h, T, steps):
    """Classical RK4 on the lifted modal ODE ``w' = -i lam w - h' kappa``, ``mean' = h``."""
    hf, dh = _as_signal(h)
    n = w0.n
    lam, kappa = frequencies(n), lifting_forcing_weights(n)
    y = w0.vector()
    dt = T / steps

    def rhs(t, y):
        tt = np.array([t])
        out = np.empty_like(y)
        out[:-1] = -1j * lam * y[:-1] - dh(tt)[0] * kappa
        out[-1] = hf(tt)[0]
        return out

    for s in range(steps):
        t = s * dt
        k1 = rhs(t, y)
        k2 = rhs(t + dt / 2, y + dt / 2 * k1)
        k3 = rhs(t + dt / 2, y + dt / 2 * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return BoundedState.from_vector(w0.M, y)


def moment_rhs_bounded(a):
    """Closed-form moments ``(-1)^n sqrt2 n^2 pi^2 a_n / (2 sqrt(1+n^2pi^2) (n pi lam_n + sgn(n) sqrt(1+n^2pi^2)))``.

    This is the literal published closed form; :func:`null_moment` gives the
    moments implied by the eigenbasis used here.
    """
    n = a.n.astype(float)
    root = np.sqrt(1.0 + (n * np.pi) ** 2)
    lam = frequencies(n)
    return ((-1.0) ** np.abs(n) * np.sqrt(2) * n**2 * np.pi**2 * a.coeffs
            / (2 * root * (n * np.pi * lam + np.sign(n) * root)))


def null_moment(a):
    """``int_0^T h(t) exp(i lam_n t) dt`` needed to steer ``a`` to rest with h(0) = h(T) = 0.

    Equals ``(-1)^n (1 + n^2 pi^2) a_n``.
    """
    n = a.n.astype(float)
    return (-1.0) ** np.abs(n) * (1.0 + (n * np.pi) ** 2) * a.coeffs


@dataclass
class ProbeResult:
    m: int
    T: float
    M_constraints: np.ndarray
    cost: np.ndarray
    cond: np.ndarray
    ill_conditioned: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["M_constraints", "cost", "cond", "ill_conditioned"])
            for row in zip(self.M_constraints, self.cost, self.cond, self.ill_conditioned):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3])])


def spectral_controllability_probe(m, M_constraints, T, cond_limit=1e14, dps=None):
    """Minimum-L^2 cost of steering the single eigenmode m to rest while leaving modes
    +-1..+-K untouched, for K = m..M_constraints.

    The Gram matrices of ``{exp(i lam_n t)}`` are solved in multiprecision since
    their condition numbers pass the double-precision range after a few modes;
    the float64 verdict (cond above ``cond_limit``) is reported per K, not raised.
    """
    if not 1 <= m <= M_constraints:
        raise ValueError("need 1 <= m <= M_constraints")
    Ks = np.arange(m, M_constraints + 1)
    costs, conds = [], []
    for K in Ks:
        n = mode_indices(int(K))
        prec = dps or 30 + 12 * int(K)
        with mpmath.workdps(prec):
            lam = [mpmath.mpf(int(k)) * mpmath.pi / mpmath.sqrt(1 + (int(k) * mpmath.pi) ** 2)
                   for k in n]
            G = gram_matrix_mp(lam, T, prec)
            d = mpmath.matrix(len(n), 1)
            idx = int(np.where(n == m)[0][0])
            d[idx] = (-1) ** m * (1 + (m * mpmath.pi) ** 2)
            beta = mpmath.lu_solve(G, d)
            cost2 = sum((mpmath.conj(d[i]) * beta[i] for i in range(len(n))), mpmath.mpf(0))
            costs.append(float(mpmath.sqrt(mpmath.re(cost2))))
            conds.append(float(mpmath.cond(G)))
    conds = np.array(conds)
    return ProbeResult(m, T, Ks, np.array(costs), conds, conds > cond_limit)


@dataclass
class LsqResult:
    control: BoundaryControl
    residual: float
    relative_residual: float
    residual_l2: float
    control_norm: float
    final: BoundedState = field(repr=False)


def _input_matrix(T, control_dim, M):
    """Columns: final lifted coordinates for each unit sine control from rest."""
    zero = BoundedState.zeros(M)
    cols = []
    for j in range(control_dim):
        traj = lifting_solve(zero, None, BoundaryControl.unit(T, control_dim, j), T, M,
                             quadrature_nodes=32, panels=j + 4)
        cols.append(traj.final().vector())
    return np.array(cols).T


def approx_control_lsq(a0, aT, T, control_dim, penalty, M=None):
    """Penalized least-squares boundary control.

    Minimizes ``||state(T; h) - aT||^2 + penalty ||h||_{H^1}^2`` over real
    combinations of ``sin(j pi t / T)``, j = 1..control_dim. States are
    compared in H^1_0 x L^2 on modes +-1..+-M plus the mean (``M`` defaults
    to the larger of 64 and the data cutoffs).
    """
    if control_dim < 1:
        raise ValueError("control_dim must be at least 1")
    if penalty < 0:
        raise ValueError("penalty must be nonnegative")
    M = M or max(64, a0.M, aT.M)
    a0, aT = a0.resized(M), aT.resized(M)
    B = _input_matrix(T, control_dim, M)
    free = evolve_homogeneous(a0, T).vector()
    rhs = aT.vector() - free
    A = np.vstack([B.real, B.imag])
    y = np.concatenate([rhs.real, rhs.imag])
    if penalty > 0:
        A = np.vstack([A, np.diag(np.sqrt(penalty * BoundaryControl.h1_weights(T, control_dim)))])
        y = np.concatenate([y, np.zeros(control_dim)])
    wts, *_ = np.linalg.lstsq(A, y, rcond=None)
    control = BoundaryControl(T, wts)
    final = BoundedState.from_vector(M, free + B @ wts)
    diff = final - aT
    res = diff.norm()
    tnorm = aT.norm()
    return LsqResult(control, res, res / tnorm if tnorm else res, diff.l2_norm(),
                     control.h1_norm(), final)


def penalty_sweep(a0, aT, T, control_dim, penalties=None, M=None):
    penalties = np.logspace(-2, -8, 7) if penalties is None else np.asarray(penalties)
    return [approx_control_lsq(a0, aT, T, control_dim, float(p), M) for p in penalties]
