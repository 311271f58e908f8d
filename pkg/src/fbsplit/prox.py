"""Proximal operators and projections.

Every operator here solves ``argmin_x t*g(x) + 1/2 |x - z|^2`` in closed form.
Thresholds ``t`` may be arrays (broadcast against ``z``) for the separable
operators, which is how a diagonal preconditioner enters the backward step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .smooth import HermitianError, hermitian_part


def _check_threshold(t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")


def _phase(z):
    """``z/|z|`` with 0 -> 0; plain sign for real input."""
    if not np.iscomplexobj(z):
        return np.sign(z)
    mag = np.abs(z)
    out = np.zeros_like(z)
    nz = mag > 0
    out[nz] = z[nz] / mag[nz]
    return out


def shrink(z, t):
    """Soft thresholding ``sign(z) max(|z| - t, 0)``; complex entries keep their phase."""
    _check_threshold(t)
    z = np.asarray(z)
    return _phase(z) * np.maximum(np.abs(z) - t, 0.0)


def _l1_ball_level(a, radius):
    # a: non-negative magnitudes, with sum(a) > radius
    s = np.sort(a.ravel())[::-1]
    css = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    rho = np.nonzero(s * k > css - radius)[0][-1]
    return (css[rho] - radius) / (rho + 1.0)


def project_l1_ball(z, radius):
    """Euclidean projection onto ``{x : |x|_1 <= radius}`` (sort-based)."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    z = np.asarray(z)
    a = np.abs(z)
    if a.sum() <= radius:
        return z.copy()
    theta = _l1_ball_level(a, radius)
    return _phase(z) * np.maximum(a - theta, 0.0)


def prox_linf(z, t):
    """Prox of ``t |x|_inf`` via the Moreau decomposition ``z - P_{t B_1}(z)``."""
    _check_threshold(t)
    z = np.asarray(z)
    if t == 0:
        return z.copy()
    return z - project_l1_ball(z, t)


def group_row_shrink(Z, t):
    """Shrink the Euclidean norm of every row of ``Z`` by ``t``."""
    _check_threshold(t)
    Z = np.asarray(Z)
    norms = np.linalg.norm(Z, axis=-1, keepdims=True)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(norms[nz] - t, 0.0) / norms[nz]
    return Z * scale


def prox_nuclear(Z, t):
    """Singular value thresholding ``U shrink(S, t) V^H``."""
    _check_threshold(t)
    Z = np.asarray(Z)
    U, s, Vh = np.linalg.svd(Z, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vh[keep]


def prox_psd_nuclear(Z, t):
    """Nuclear-norm prox restricted to the PSD cone: eigenvalues -> max(lambda - t, 0)."""
    _check_threshold(t)
    Z = hermitian_part(Z)
    lam, U = np.linalg.eigh(Z)
    lam = np.maximum(lam - t, 0.0)
    keep = lam > 0
    X = (U[:, keep] * lam[keep]) @ U[:, keep].conj().T
    return 0.5 * (X + X.conj().T)


def project_box(z, lo, hi):
    if lo > hi:
        raise ValueError("empty box: lo > hi")
    return np.clip(z, lo, hi)


def project_nonneg(Z):
    return np.maximum(Z, 0.0)


def project_rows_unit_ball(Z):
    """Rescale every row (last axis) to norm at most one.

    Dual TV fields stacked as (rows, cols, 2) are handled pixel by pixel.
    """
    Z = np.asarray(Z)
    norms = np.linalg.norm(Z, axis=-1, keepdims=True)
    return Z / np.maximum(norms, 1.0)


# ---------------------------------------------------------------------------
# g terms for the solver

@dataclass(frozen=True)
class ProxTerm:
    """A prox-capable term ``g``.

    ``prox_at(z, tau)`` returns ``prox_g(z, tau)``; ``value_at`` may return
    ``inf`` for characteristic functions.  ``separable`` terms accept an array
    stepsize, which is needed for diagonal preconditioning.
    """

    value_at: Callable[[np.ndarray], float]
    prox_at: Callable[[np.ndarray, object], np.ndarray]
    weight: float = 1.0
    separable: bool = False
    name: str = ""
    params: dict = field(default_factory=dict)


FEAS_TOL = 1e-9


def _indicator(ok):
    return 0.0 if ok else np.inf


def zero_term():
    return ProxTerm(lambda x: 0.0, lambda z, tau: np.array(z, copy=True), 0.0, True, "zero")


def l1_term(mu):
    return ProxTerm(lambda x: mu * float(np.sum(np.abs(x))),
                    lambda z, tau: shrink(z, mu * tau), mu, True, "l1", {"mu": mu})


def l1_ball_term(radius):
    def value(x):
        return _indicator(np.sum(np.abs(x)) <= radius * (1 + FEAS_TOL))

    return ProxTerm(value, lambda z, tau: project_l1_ball(z, radius), 0.0, False, "l1_ball",
                    {"radius": radius})


def linf_term(mu):
    return ProxTerm(lambda x: mu * float(np.max(np.abs(x))),
                    lambda z, tau: prox_linf(z, mu * tau), mu, False, "linf", {"mu": mu})


def group_rows_term(mu):
    return ProxTerm(lambda X: mu * float(np.sum(np.linalg.norm(X, axis=-1))),
                    lambda Z, tau: group_row_shrink(Z, mu * tau), mu, False, "group_rows",
                    {"mu": mu})


def nuclear_term(mu):
    return ProxTerm(lambda X: mu * float(np.sum(np.linalg.svd(X, compute_uv=False))),
                    lambda Z, tau: prox_nuclear(Z, mu * tau), mu, False, "nuclear", {"mu": mu})


def psd_nuclear_term(mu):
    def value(X):
        try:
            lam = np.linalg.eigvalsh(hermitian_part(X))
        except HermitianError:
            return np.inf
        if lam.min(initial=0.0) < -FEAS_TOL * max(1.0, np.abs(lam).max(initial=0.0)):
            return np.inf
        return mu * float(np.sum(np.maximum(lam, 0.0)))

    return ProxTerm(value, lambda Z, tau: prox_psd_nuclear(Z, mu * tau), mu, False,
                    "psd_nuclear", {"mu": mu})


def box_term(lo, hi):
    if lo > hi:
        raise ValueError("empty box: lo > hi")
    tol = FEAS_TOL * max(1.0, abs(lo), abs(hi))

    def value(x):
        return _indicator(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    return ProxTerm(value, lambda z, tau: project_box(z, lo, hi), 0.0, True, "box",
                    {"lo": lo, "hi": hi})


def nonneg_term():
    return ProxTerm(lambda x: _indicator(np.all(x >= -FEAS_TOL)),
                    lambda z, tau: project_nonneg(z), 0.0, True, "nonneg")


def unit_rows_term():
    def value(X):
        return _indicator(np.all(np.linalg.norm(X, axis=-1) <= 1 + FEAS_TOL))

    return ProxTerm(value, lambda Z, tau: project_rows_unit_ball(Z), 0.0, False, "unit_rows")
