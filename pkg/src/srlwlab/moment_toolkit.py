"""
Finite exponential families on (0, T) and their minimum-norm biorthogonal duals.

Pairing convention: everything here is Hermitian. For a family
``e_j(t) = exp(i mu_j t)`` the Gram matrix is
``G[j, k] = int_0^T e_j conj(e_k) dt`` and a dual ``q_m`` satisfies
``int_0^T q_m conj(e_k) dt = delta_mk``. A bilinear moment problem
``int q_m exp(i nu_k t) dt = delta_mk`` is obtained by building the family on
``mu = -nu``; the synthesis modules do that relabeling.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import DegenerateFamily, IllConditioned

__all__ = [
    "ExponentialFamily",
    "BiorthogonalFamily",
    "GapReport",
    "moving_frequencies",
    "gap",
    "gram_matrix",
    "gram_matrix_mp",
    "biorthogonal",
    "verify_biorthogonality",
    "conditioning_record",
]

DISTINCT_TOL = 1e-10
COND_LIMIT = 1e14


@dataclass
class ExponentialFamily:
    freqs: np.ndarray
    T: float
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if not self.labels:
            self.labels = list(range(self.freqs.size))
        if len(self.labels) != self.freqs.size:
            raise ValueError("one label per frequency is required")
        s = np.sort(self.freqs)
        if s.size > 1 and np.min(np.diff(s)) <= DISTINCT_TOL:
            i = int(np.argmin(np.diff(s)))
            raise DegenerateFamily(f"frequencies {s[i]!r} and {s[i + 1]!r} collide")

    def __len__(self):
        return self.freqs.size

    def index(self, label):
        return self.labels.index(label)

    def permuted(self, perm):
        perm = np.asarray(perm)
        return ExponentialFamily(self.freqs[perm], self.T, [self.labels[i] for i in perm])


def moving_frequencies(c, N, T=2 * np.pi):
    """Frequencies ck + rho(k) and ck - rho(k) for |k| <= N.

    Labels are ``(k, +1)`` and ``(k, -1)``; k = 0 contributes the single
    frequency 0 with label ``(0, 0)``. Collisions raise DegenerateFamily.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if abs(c) <= 2:
        warnings.warn(f"|c| = {abs(c)} <= 2: the family may have collisions or no uniform gap",
                      stacklevel=2)
    freqs, labels = [0.0], [(0, 0)]
    for k in range(-N, N + 1):
        if k == 0:
            continue
        r = abs(k) / np.sqrt(1.0 + k * k)
        freqs += [c * k + r, c * k - r]
        labels += [(k, 1), (k, -1)]
    return ExponentialFamily(np.array(freqs), T, labels)


@dataclass(frozen=True)
class GapReport:
    delta_tail: float
    delta_combined: float
    K_used: int

    def to_dict(self):
        return {"delta_tail": self.delta_tail, "delta_combined": self.delta_combined,
                "K_used": self.K_used}


def gap(family, tail_from=1):
    """Same-sign tail gap and the minimal gap of the merged sorted family.

    ``delta_tail`` scans consecutive same-sign frequencies (labels (k, s) and
    (k+1, s)) with ``|k| >= tail_from`` on both ends; families without sign
    labels fall back to the merged gap.
    """
    if len(family) == 0:
        raise ValueError("empty family")
    if len(family) == 1:
        return GapReport(np.inf, np.inf, 0)
    combined = float(np.min(np.diff(np.sort(family.freqs))))
    lookup = {lab: f for lab, f in zip(family.labels, family.freqs)
              if isinstance(lab, tuple) and len(lab) == 2}
    diffs = []
    ks = sorted({lab[0] for lab in lookup})
    for sign in (1, -1):
        for k in ks:
            if min(abs(k), abs(k + 1)) < tail_from or k * (k + 1) <= 0:
                continue
            a, b = lookup.get((k, sign)), lookup.get((k + 1, sign))
            if a is not None and b is not None:
                diffs.append(abs(b - a))
    if not diffs:
        return GapReport(combined, combined, 0)
    K = max(abs(k) for k in ks)
    return GapReport(float(min(diffs)), combined, K)


def gram_matrix(family):
    """Closed-form Gram matrix G[j, k] = int_0^T exp(i (mu_j - mu_k) t) dt."""
    T = family.T
    d = family.freqs[:, None] - family.freqs[None, :]
    # (exp(i d T) - 1) / (i d) = T exp(i d T / 2) sinc(d T / 2)
    return T * np.exp(0.5j * d * T) * np.sinc(d * T / (2 * np.pi))


def gram_matrix_mp(freqs, T, dps):
    """Gram matrix in mpmath at ``dps`` digits (used where float64 saturates)."""
    with mpmath.workdps(dps):
        mu = [mpmath.mpf(f) if not isinstance(f, mpmath.mpf) else f for f in freqs]
        T = mpmath.mpf(T)
        n = len(mu)
        G = mpmath.matrix(n, n)
        for j in range(n):
            for k in range(n):
                d = mu[j] - mu[k]
                G[j, k] = T if d == 0 else (mpmath.expj(d * T) - 1) / (1j * d)
        return G


@dataclass
class BiorthogonalFamily:
    """Duals ``q_m(t) = sum_j C[m, j] exp(i mu_j t)`` (row m of ``dual_coeffs``)."""

    family: ExponentialFamily
    dual_coeffs: np.ndarray
    regularization: float = 0.0
    residual: float = np.nan
    cond: float = np.nan

    def evaluate(self, t):
        """Dual values, shape (len(t), n); column m is q_m."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        E = np.exp(1j * np.multiply.outer(t, self.family.freqs))
        return E @ self.dual_coeffs.T

    def combination(self, weights):
        """Exponential coefficients of sum_m weights[m] q_m."""
        return np.asarray(weights) @ self.dual_coeffs

    def l2_norm_sq(self, expo_coeffs):
        """||sum_j a_j exp(i mu_j t)||^2_{L^2(0,T)} via the Gram matrix (rows of a batch allowed)."""
        G = gram_matrix(self.family)
        a = np.atleast_2d(expo_coeffs)
        return np.real(np.einsum("ij,jk,ik->i", a, G, np.conj(a)))

    def dual_norms_sq(self):
        return self.l2_norm_sq(self.dual_coeffs)


def biorthogonal(family, regularization=0.0, cond_limit=COND_LIMIT):
    """Minimum-L^2-norm duals ``C = (G + lambda I)^{-1}``.

    Raises IllConditioned when ``regularization == 0`` and cond(G) exceeds
    ``cond_limit``.
    """
    if regularization < 0:
        raise ValueError("regularization must be nonnegative")
    G = gram_matrix(family)
    cond = float(np.linalg.cond(G))
    if regularization == 0 and not cond < cond_limit:
        raise IllConditioned(f"Gram matrix condition number {cond:.3e} exceeds {cond_limit:.1e}",
                             cond)
    A = G + regularization * np.eye(len(family))
    C = np.linalg.solve(A, np.eye(len(family)))
    b = BiorthogonalFamily(family, C, regularization, cond=cond)
    b.residual = verify_biorthogonality(b)
    return b


def verify_biorthogonality(b):
    """max |int q_m conj(e_k) dt - delta_mk| from the closed-form Gram matrix."""
    G = gram_matrix(b.family)
    M = b.dual_coeffs @ G
    return float(np.max(np.abs(M - np.eye(M.shape[0]))))


def conditioning_record(c, T, N, tail_from=1, regularization=0.0):
    """JSON-ready record {c, T, N, delta_tail, delta_combined, cond, residual} for the moving family."""
    fam = moving_frequencies(c, N, T)
    rep = gap(fam, tail_from)
    G = gram_matrix(fam)
    cond = float(np.linalg.cond(G))
    try:
        residual = biorthogonal(fam, regularization).residual
    except IllConditioned:
        residual = float("nan")
    return {"c": c, "T": T, "N": N, "delta_tail": rep.delta_tail,
            "delta_combined": rep.delta_combined, "cond": cond, "residual": residual}


def dump_records(records, path):
    with open(path, "w") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
