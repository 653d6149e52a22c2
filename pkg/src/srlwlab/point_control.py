"""
Scalar control g(t) acting through the moving Dirac source delta(x + ct).

The Dirac source has modal forcing ``f_k(t) = g(t) exp(ikct) / (2 pi)`` and
the exact-control conditions become

    int_0^T g(t) exp(i (kc - s rho(k)) t) dt = RHS_k^s,   s = +-1,

with ``RHS`` from :func:`~srlwlab.moving_control.moment_rhs` applied to
``UT - S(T) U0``. The same dual family as the moving distributed control is
used (and cached). Point-control states are measured in H^{-1} x L^2.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ivp_solver import ForcingSignal, solve_linear_forced
from .moment_toolkit import gram_matrix
from .moving_control import MomentDuals, auto_panels, check_mean, moment_duals, moment_rhs
from .spectral_core import semigroup_apply, wavenumbers, xs_norm

__all__ = [
    "PointControl",
    "POINT_NORM",
    "dirac_forcing_modes",
    "synthesize_point",
    "verify_terminal_point",
]

# (u order, v order) of the H^{-1} x L^2 state space
POINT_NORM = (-1.0, 0.0)


@dataclass
class PointControl:
    c: float
    T: float
    N: int
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    duals: MomentDuals = field(repr=False)
    control_norm: float = np.nan
    dual_residual: float = np.nan

    @property
    def expo_coeffs(self):
        """Coefficients of g over the dual family's exponentials."""
        C = self.duals.duals.dual_coeffs
        a = self.alpha_plus @ C[self.duals.plus]
        mask = self.duals.minus >= 0
        return a + self.alpha_minus[mask] @ C[self.duals.minus[mask]]

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(1j * np.multiply.outer(t, self.duals.duals.family.freqs)) @ self.expo_coeffs

    def norm(self):
        """||g||_{L^2(0,T)} via the Gram matrix."""
        a = self.expo_coeffs
        G = gram_matrix(self.duals.duals.family)
        return float(np.sqrt(max(np.real(a @ G @ np.conj(a)), 0.0)))

    def to_dict(self):
        enc = lambda z: [[float(w.real), float(w.imag)] for w in z]
        return {"c": self.c, "T": self.T, "N": self.N, "alpha_plus": enc(self.alpha_plus),
                "alpha_minus": enc(self.alpha_minus), "control_norm": self.control_norm,
                "dual_residual": self.dual_residual}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def samples_csv(self, path, nt=257):
        t = np.linspace(0.0, self.T, nt)
        g = self(t)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "re_g", "im_g"])
            for tt, gg in zip(t, g):
                w.writerow([repr(float(tt)), repr(gg.real), repr(gg.imag)])


def dirac_forcing_modes(g, c, N, max_frequency=0.0):
    """Modal forcing ``g(t) exp(ikct) / (2 pi)`` of ``g(t) delta(x + ct)``.

    ``g`` is any callable returning values on an array of times.
    """
    k = wavenumbers(N)

    def evaluator(t):
        gt = np.asarray(g(t), dtype=complex).reshape(t.size)
        return gt[:, None] * np.exp(1j * c * np.multiply.outer(t, k)) / (2 * np.pi)

    if not max_frequency and isinstance(g, PointControl):
        max_frequency = float(np.max(np.abs(g.duals.duals.family.freqs)))
    return ForcingSignal("moving_point", N, evaluator, max_frequency + abs(c) * N + 1.0)


def synthesize_point(U0, UT, c, T, N=None, regularization=0.0):
    """Scalar control steering U0 to UT in time T through delta(x + ct).

    Raises MeanMismatch when the v-means differ and IllConditioned from the
    dual construction. Horizons T <= 2 pi are outside the guaranteed range
    and only produce a warning.
    """
    N = UT.N if N is None else N
    if U0.N != N or UT.N != N:
        raise ValueError("state cutoffs must equal N")
    if T <= 2 * np.pi:
        warnings.warn(f"T = {T} <= 2 pi: outside the guaranteed control horizon", stacklevel=2)
    check_mean(U0, UT)
    md = moment_duals(float(c), float(T), int(N), float(regularization))
    rp, rm = moment_rhs(UT - semigroup_apply(U0, T), T)
    ctrl = PointControl(c, T, N, rp, rm, md)
    ctrl.dual_residual = md.duals.residual
    ctrl.control_norm = ctrl.norm()
    return ctrl


def verify_terminal_point(U0, UT, g, c, T, quadrature_nodes=16, panels=None):
    """Relative terminal error in H^{-1} x L^2 after forward simulation."""
    f = dirac_forcing_modes(g, c, UT.N)
    panels = panels or auto_panels(f, T)
    traj = solve_linear_forced(U0, f, T, quadrature_nodes, times=[0.0, T], panels=panels)
    err = xs_norm(traj.final() - UT, *POINT_NORM)
    return err / max(1.0, xs_norm(UT, *POINT_NORM))
