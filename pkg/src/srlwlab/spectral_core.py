"""
Truncated Fourier representation of the g-SRLW state on the torus.

The torus has period 2*pi and a state (u, v) is stored through its Fourier
coefficients ``u(x) = sum_k u_k exp(i k x)`` for ``|k| <= N``, with
``u_k = (1/2pi) int u exp(-i k x) dx``. Coefficient arrays have length
``2N + 1`` and are ordered ``k = -N, ..., N``.

The linear part of the system is written ``dU/dt = A U`` with

    A = [[0, (I - d_xx)^{-1} d_x],
         [d_x, 0]]

which is diagonal in Fourier space, and the nonlinearity is

    G(U) = ((I - d_xx)^{-1} d_x (u^{p+1} / (p+1)), 0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonlinearityOverflow

__all__ = [
    "TorusState",
    "DispersionTable",
    "wavenumbers",
    "dispersion_table",
    "signed_frequency",
    "sobolev_norm",
    "xs_norm",
    "apply_A",
    "propagator",
    "semigroup_apply",
    "convolution_power",
    "nonlinearity_G",
]


def wavenumbers(N):
    return np.arange(-N, N + 1)


@dataclass(frozen=True)
class DispersionTable:
    """rho(k) = |k| / sqrt(1 + k^2) for |k| <= N."""

    N: int
    k: np.ndarray
    rho: np.ndarray


def dispersion_table(N):
    k = wavenumbers(N)
    return DispersionTable(N=N, k=k, rho=np.abs(k) / np.sqrt(1.0 + k**2))


def signed_frequency(k):
    """k / sqrt(1 + k^2), the rotation rate of mode k under exp(tA).

    Its modulus is the dispersion ``rho(k)``; the sign keeps exp(tA) exact
    for negative wavenumbers.
    """
    k = np.asarray(k, dtype=float)
    return k / np.sqrt(1.0 + k**2)


@dataclass
class TorusState:
    """Fourier coefficient pair (u_k, v_k), |k| <= N."""

    N: int
    u: np.ndarray
    v: np.ndarray
    real: bool = field(default=False, compare=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"mode cutoff must be a nonnegative integer, got {self.N}")
        self.N = int(self.N)
        self.u = np.asarray(self.u, dtype=complex).copy()
        self.v = np.asarray(self.v, dtype=complex).copy()
        size = 2 * self.N + 1
        if self.u.shape != (size,) or self.v.shape != (size,):
            raise ValueError(f"coefficient arrays must have shape ({size},)")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("coefficients must be finite")

    @property
    def k(self):
        return wavenumbers(self.N)

    @classmethod
    def zeros(cls, N):
        return cls(N, np.zeros(2 * N + 1), np.zeros(2 * N + 1))

    @classmethod
    def from_modes(cls, N, u=None, v=None):
        """Build a state from ``{k: value}`` dictionaries."""
        state = cls.zeros(N)
        for k, val in (u or {}).items():
            state.u[k + N] = val
        for k, val in (v or {}).items():
            state.v[k + N] = val
        return state

    @classmethod
    def random(cls, N, rng, decay=0.0, real=True):
        """Random coefficients with magnitude ~ (1 + k^2)^(-decay / 2)."""
        k = wavenumbers(N)
        w = (1.0 + k**2) ** (-decay / 2)
        u = (rng.standard_normal(2 * N + 1) + 1j * rng.standard_normal(2 * N + 1)) * w
        v = (rng.standard_normal(2 * N + 1) + 1j * rng.standard_normal(2 * N + 1)) * w
        state = cls(N, u, v)
        if real:
            state = state.symmetrized()
        return state

    def symmetrized(self):
        """Project onto conjugate-symmetric coefficients (real-valued fields)."""
        u = 0.5 * (self.u + np.conj(self.u[::-1]))
        v = 0.5 * (self.v + np.conj(self.v[::-1]))
        return TorusState(self.N, u, v, real=True)

    def symmetry_defect(self):
        return max(
            np.max(np.abs(self.u - np.conj(self.u[::-1]))),
            np.max(np.abs(self.v - np.conj(self.v[::-1]))),
        )

    def is_real(self, tol=1e-12):
        return self.symmetry_defect() <= tol

    def copy(self):
        return TorusState(self.N, self.u, self.v, self.real)

    def resized(self, N):
        """Zero-pad or truncate to cutoff N."""
        out = TorusState.zeros(N)
        m = min(N, self.N)
        out.u[N - m:N + m + 1] = self.u[self.N - m:self.N + m + 1]
        out.v[N - m:N + m + 1] = self.v[self.N - m:self.N + m + 1]
        return out

    def __add__(self, other):
        _check_same_N(self, other)
        return TorusState(self.N, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        _check_same_N(self, other)
        return TorusState(self.N, self.u - other.u, self.v - other.v)

    def __mul__(self, scalar):
        return TorusState(self.N, scalar * self.u, scalar * self.v)

    __rmul__ = __mul__

    def __neg__(self):
        return TorusState(self.N, -self.u, -self.v)

    def evaluate(self, x):
        """Physical values (u(x), v(x)) on the points x."""
        x = np.asarray(x, dtype=float)
        E = np.exp(1j * np.multiply.outer(x, self.k))
        return E @ self.u, E @ self.v

    def to_json(self):
        return json.dumps(
            {
                "N": self.N,
                "u": [[float(z.real), float(z.imag)] for z in self.u],
                "v": [[float(z.real), float(z.imag)] for z in self.v],
            }
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text) if isinstance(text, str) else text
        u = np.array([complex(re, im) for re, im in data["u"]])
        v = np.array([complex(re, im) for re, im in data["v"]])
        return cls(int(data["N"]), u, v)


def _check_same_N(a, b):
    if a.N != b.N:
        raise ValueError(f"mode cutoffs differ: {a.N} vs {b.N}")


def sobolev_norm(coeffs, s):
    """H^s norm ``(sum (1 + k^2)^s |c_k|^2)^{1/2}`` of a coefficient vector ordered -N..N."""
    coeffs = np.asarray(coeffs)
    N = (coeffs.shape[-1] - 1) // 2
    k = wavenumbers(N)
    w = (1.0 + k**2) ** float(s)
    return np.sqrt(np.sum(w * np.abs(coeffs) ** 2, axis=-1))


def xs_norm(state, s=1.0, v_order=None):
    """Norm of (u, v) in H^s x H^{v_order}; v_order defaults to s - 1."""
    if v_order is None:
        v_order = s - 1.0
    return float(np.hypot(sobolev_norm(state.u, s), sobolev_norm(state.v, v_order)))


def apply_A(state):
    k = state.k
    return TorusState(state.N, 1j * k / (1.0 + k**2) * state.v, 1j * k * state.u)


def propagator(k, t):
    """Entries (a11, a12, a21, a22) of exp(tA) on mode k.

    Broadcasts over ``k`` and ``t``.
    """
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    root = np.sqrt(1.0 + k**2)
    wt = signed_frequency(k) * t
    c, s = np.cos(wt), np.sin(wt)
    return c, 1j * s / root, 1j * root * s, c


def semigroup_apply(state, t):
    a11, a12, a21, a22 = propagator(state.k, t)
    return TorusState(state.N, a11 * state.u + a12 * state.v, a21 * state.u + a22 * state.v)


def convolution_power(coeffs, power, bound=np.inf):
    """Coefficients of u^power, untruncated (length 2*power*N + 1).

    Each stage is an exact direct convolution.
    """
    out = np.asarray(coeffs, dtype=complex)
    for _ in range(power - 1):
        out = np.convolve(out, coeffs)
        if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > bound:
            raise NonlinearityOverflow(
                f"convolution magnitude exceeded {bound:g} while forming u^{power}"
            )
    return out


def nonlinearity_G(state, p, bound=1e150):
    """G(U) = ((I - d_xx)^{-1} d_x (u^{p+1}/(p+1)), 0), truncated to |k| <= N."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p}")
    N = state.N
    full = convolution_power(state.u, int(p) + 1, bound=bound)
    M = (full.size - 1) // 2
    w = full[M - N:M + N + 1]
    k = state.k
    return TorusState(N, 1j * k / (1.0 + k**2) * w / (p + 1), np.zeros(2 * N + 1))
