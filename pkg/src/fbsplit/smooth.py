"""Smooth objective terms written as ``ftilde(A x)``.

Each term stores ``ftilde`` (value and gradient in the range of ``A``) and the
linear map ``A``.  The solver applies ``A`` once per iterate and reuses the
product for both the objective and the gradient ``A^H grad ftilde(Ax)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linops import (LinearMap, dense_block_map, dense_map, divergence_map, grad2d,
                     identity_map)


@dataclass(frozen=True)
class SmoothTerm:
    value_at: Callable[[np.ndarray], float]
    gradient_at: Callable[[np.ndarray], np.ndarray]
    linear_map: LinearMap
    name: str = ""

    def value(self, x):
        return self.value_at(self.linear_map.apply(x))

    def gradient(self, x):
        return self.linear_map.adjoint(self.gradient_at(self.linear_map.apply(x)))


def _as_map(A, b=None):
    if isinstance(A, LinearMap):
        return A
    if b is not None and np.ndim(b) == 2:
        return dense_block_map(A, np.shape(b)[1])
    return dense_map(A)


def least_squares(A, b):
    """``1/2 |Ax - b|^2``.  A matrix ``b`` makes ``A`` act column-wise (MMV)."""
    b = np.asarray(b)
    A = _as_map(A, b)
    if b.shape != tuple(A.range_shape):
        raise ValueError(f"b has shape {b.shape}, map range is {A.range_shape}")

    def value_at(z):
        r = z - b
        return 0.5 * float(np.vdot(r, r).real)

    return SmoothTerm(value_at, lambda z: z - b, A, "least_squares")


def softplus(z):
    """``log(1 + e^z)`` without overflow."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logit_loss(A, b, mask=None):
    """Logistic log-likelihood ``sum softplus(z_i) - b_i z_i`` at ``z = Ax``.

    ``A=None`` means the identity (the matrix variable is ``z`` itself);
    ``mask`` restricts the sum to observed entries.
    """
    b = np.asarray(b, dtype=float)
    A = identity_map(b.shape) if A is None else _as_map(A)
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("logit_loss needs binary labels in {0, 1}")
    if b.shape != tuple(A.range_shape):
        raise ValueError(f"b has shape {b.shape}, map range is {A.range_shape}")
    w = 1.0 if mask is None else np.asarray(mask, dtype=float)

    def value_at(z):
        return float(np.sum(w * (softplus(z) - b * z)))

    return SmoothTerm(value_at, lambda z: w * (sigmoid(z) - b), A, "logit")


def masked_quadratic(Y, mask=None):
    """``sum_{Omega} (X - Y)^2`` over the observed entries."""
    Y = np.asarray(Y, dtype=float)
    mask = np.ones(Y.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != Y.shape:
        raise ValueError("mask and Y shapes differ")
    w = mask.astype(float)

    def value_at(X):
        return float(np.sum(w * (X - Y) ** 2))

    return SmoothTerm(value_at, lambda X: 2.0 * w * (X - Y), identity_map(Y.shape),
                      "masked_quadratic")


class HermitianError(ValueError):
    pass


def hermitian_part(X, tol=1e-10):
    """Return ``(X + X^H)/2``; reject inputs whose asymmetry exceeds ``tol``."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise HermitianError("expected a square matrix")
    asym = np.linalg.norm(X - X.conj().T)
    scale = max(1.0, np.linalg.norm(X))
    if asym > tol * scale:
        raise HermitianError(f"matrix is not Hermitian (asymmetry {asym:.3g})")
    return 0.5 * (X + X.conj().T)


def lift_map(vectors):
    """``X -> (a_i^H X a_i)_i`` on Hermitian matrices, rows of ``vectors`` are ``a_i``."""
    a = np.asarray(vectors)
    M, N = a.shape
    ac = a.conj()

    def apply(X):
        X = hermitian_part(X)
        return np.einsum("ij,jk,ik->i", ac, X, a).real

    def adjoint(v):
        G = (a.T * v) @ ac
        return 0.5 * (G + G.conj().T)

    return LinearMap((N, N), (M,), apply, adjoint, "complex", hermitian_domain=True,
                     name="lift")


def phaselift_loss(vectors, b):
    """``|A(X) - b|^2`` with ``A(X)_i = a_i^H X a_i``."""
    A = lift_map(vectors)
    b = np.asarray(b, dtype=float)
    if b.shape != tuple(A.range_shape):
        raise ValueError("need one measurement per vector")

    def value_at(z):
        return float(np.sum((z - b) ** 2))

    return SmoothTerm(value_at, lambda z: 2.0 * (z - b), A, "phaselift")


def stack_factors(W, C):
    return np.vstack([W, C])


def split_factors(Z, M):
    return Z[:M], Z[M:]


def nmf_loss(Q, K):
    """``|Q - W C^T|^2`` over the stacked variable ``[W; C]`` of shape (M+N, K)."""
    Q = np.asarray(Q, dtype=float)
    M, N = Q.shape

    def value_at(Z):
        if Z.shape != (M + N, K):
            raise ValueError(f"expected stacked factors of shape {(M + N, K)}")
        W, C = split_factors(Z, M)
        R = W @ C.T - Q
        return float(np.sum(R * R))

    def gradient_at(Z):
        if Z.shape != (M + N, K):
            raise ValueError(f"expected stacked factors of shape {(M + N, K)}")
        W, C = split_factors(Z, M)
        R = W @ C.T - Q
        return 2.0 * np.vstack([R @ C, R.T @ W])

    return SmoothTerm(value_at, gradient_at, identity_map((M + N, K)), "nmf")


def maxnorm_loss(W_adj, K):
    """``<W, X X^T>`` for an N x K factor ``X``."""
    W_adj = np.asarray(W_adj, dtype=float)
    N = W_adj.shape[0]
    if W_adj.shape != (N, N):
        raise ValueError("adjacency matrix must be square")
    S = W_adj + W_adj.T

    def value_at(X):
        if X.shape != (N, K):
            raise ValueError(f"expected X of shape {(N, K)}")
        return float(np.sum(W_adj * (X @ X.T)))

    def gradient_at(X):
        if X.shape != (N, K):
            raise ValueError(f"expected X of shape {(N, K)}")
        return S @ X

    return SmoothTerm(value_at, gradient_at, identity_map((N, K)), "maxnorm")


def tv_dual_loss(y_noisy, mu):
    """``1/2 |div(x) + y/mu|^2`` over dual fields stacked as (rows, cols, 2)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    y = np.asarray(y_noisy, dtype=float)
    shift = y / mu

    def value_at(d):
        r = d + shift
        return 0.5 * float(np.sum(r * r))

    return SmoothTerm(value_at, lambda d: d + shift, divergence_map(y.shape), "tv_dual")


def tv_primal_objective(u, y, mu):
    """Isotropic TV denoising objective ``mu |grad u| + 1/2 |u - y|^2``."""
    g = grad2d(u)
    tv = np.sum(np.hypot(g.r_component, g.c_component))
    return float(mu * tv + 0.5 * np.sum((u - y) ** 2))


def svm_dual_map(D, labels):
    """``x -> [D^T L x ; sum(x)]``; the last entry carries the linear term."""
    D = np.asarray(D, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if not np.all(np.abs(labels) == 1):
        raise ValueError("labels must be -1 or +1")
    n, d = D.shape
    if labels.shape != (n,):
        raise ValueError("one label per row of D")
    DL = D * labels[:, None]

    def apply(x):
        if np.shape(x) != (n,):
            raise ValueError(f"expected x of shape {(n,)}")
        return np.append(DL.T @ x, x.sum())

    def adjoint(z):
        return DL @ z[:-1] + z[-1]

    return LinearMap((n,), (d + 1,), apply, adjoint, name="svm_dual")


def svm_dual_loss(D, labels):
    """``1/2 |D^T L x|^2 - sum(x)``; gradient ``L D D^T L x - 1``."""
    A = svm_dual_map(D, labels)

    def value_at(z):
        w = z[:-1]
        return 0.5 * float(w @ w) - float(z[-1])

    def gradient_at(z):
        g = z.copy()
        g[-1] = -1.0
        return g

    return SmoothTerm(value_at, gradient_at, A, "svm_dual")
