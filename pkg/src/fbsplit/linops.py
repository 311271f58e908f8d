"""Linear maps and the concrete operators used by the test problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class LinearMap:
    """A linear operator given by an apply/adjoint pair.

    ``adjoint`` must satisfy ``Re<apply(u), v> == Re<u, adjoint(v)>`` for the
    real inner product ``Re(vdot(a, b))``.  ``hermitian_domain`` marks maps
    whose inputs are Hermitian matrices (random probes are then drawn from
    that subspace).
    """

    domain_shape: tuple
    range_shape: tuple
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    scalar_field: str = "real"
    hermitian_domain: bool = False
    name: str = ""

    def __call__(self, x):
        return self.apply(x)

    @property
    def is_complex(self):
        return self.scalar_field == "complex"

    def random_domain(self, rng):
        """Draw a Gaussian element of the domain."""
        x = _gaussian(rng, self.domain_shape, self.is_complex)
        if self.hermitian_domain:
            x = 0.5 * (x + x.conj().T)
        return x

    def random_range(self, rng):
        return _gaussian(rng, self.range_shape, self.is_complex and not self.hermitian_domain)


def _gaussian(rng, shape, complex_):
    x = rng.standard_normal(shape)
    if complex_:
        x = x + 1j * rng.standard_normal(shape)
    return x


def _check_shape(x, shape, what):
    if np.shape(x) != tuple(shape):
        raise ValueError(f"{what}: expected shape {tuple(shape)}, got {np.shape(x)}")


def identity_map(shape, field="real"):
    shape = tuple(shape)
    return LinearMap(shape, shape, lambda x: x, lambda y: y, field, name="identity")


def dense_map(matrix, field=None):
    """Matrix-vector product map; the adjoint is the conjugate transpose.

    Inputs may be vectors of length N or matrices with N rows (the map then
    acts column-wise, as in the MMV problem).
    """
    A = np.asarray(matrix)
    if A.ndim != 2:
        raise ValueError("dense_map needs a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if field is None:
        field = "complex" if np.iscomplexobj(A) else "real"
    AH = A.conj().T
    M, N = A.shape

    def apply(x):
        if np.shape(x)[:1] != (N,):
            raise ValueError(f"dense_map apply: leading dimension must be {N}, got {np.shape(x)}")
        return A @ x

    def adjoint(y):
        if np.shape(y)[:1] != (M,):
            raise ValueError(f"dense_map adjoint: leading dimension must be {M}, got {np.shape(y)}")
        return AH @ y

    return LinearMap((N,), (M,), apply, adjoint, field, name="dense")


def dense_block_map(matrix, ncols, field=None):
    """``dense_map`` acting on an N x ``ncols`` matrix variable."""
    base = dense_map(matrix, field)
    (N,), (M,) = base.domain_shape, base.range_shape
    return LinearMap((N, ncols), (M, ncols), base.apply, base.adjoint, base.scalar_field,
                     name="dense_block")


def subsampled_dft_map(row_indices, N):
    """Selected rows of the unitary N-point DFT matrix."""
    rows = np.asarray(row_indices, dtype=int)
    if rows.ndim != 1 or rows.size == 0:
        raise ValueError("row_indices must be a non-empty 1-D list")
    if np.unique(rows).size != rows.size:
        raise ValueError("row_indices contains duplicates")
    if rows.min() < 0 or rows.max() >= N:
        raise ValueError(f"row_indices must lie in [0, {N})")

    def apply(x):
        _check_shape(x, (N,), "subsampled_dft apply")
        return np.fft.fft(x, norm="ortho")[rows]

    def adjoint(y):
        _check_shape(y, (rows.size,), "subsampled_dft adjoint")
        full = np.zeros(N, dtype=complex)
        full[rows] = y
        return np.fft.ifft(full, norm="ortho")

    return LinearMap((N,), (rows.size,), apply, adjoint, "complex", name="subsampled_dft")


@dataclass(frozen=True)
class VectorField2D:
    """Per-pixel 2-vectors (row-direction, column-direction) on an image grid."""

    r_component: np.ndarray
    c_component: np.ndarray

    def __post_init__(self):
        if np.shape(self.r_component) != np.shape(self.c_component):
            raise ValueError("field components must share the image shape")

    @property
    def rows(self):
        return self.r_component.shape[0]

    @property
    def cols(self):
        return self.r_component.shape[1]

    def stack(self):
        """Array of shape (rows, cols, 2); the last axis holds the pixel vector."""
        return np.stack([self.r_component, self.c_component], axis=-1)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ValueError("expected an array of shape (rows, cols, 2)")
        return cls(arr[..., 0], arr[..., 1])


def grad2d(u):
    """Forward differences; differences past the last row/column are zero."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ValueError("grad2d expects a 2-D image")
    gr = np.zeros_like(u)
    gc = np.zeros_like(u)
    gr[:-1, :] = u[1:, :] - u[:-1, :]
    gc[:, :-1] = u[:, 1:] - u[:, :-1]
    return VectorField2D(gr, gc)


def div2d(x):
    """Discrete divergence, the negative adjoint of :func:`grad2d`.

    Accepts a :class:`VectorField2D` or its stacked (rows, cols, 2) array.
    """
    if not isinstance(x, VectorField2D):
        x = VectorField2D.from_array(x)
    xr, xc = x.r_component, x.c_component
    d = np.zeros(xr.shape, dtype=np.result_type(xr, xc, float))
    # row direction: x^r_{i,j} - x^r_{i-1,j}, with x^r on the last row treated as 0
    d[:-1, :] += xr[:-1, :]
    d[1:, :] -= xr[:-1, :]
    d[:, :-1] += xc[:, :-1]
    d[:, 1:] -= xc[:, :-1]
    return d


def gradient_map(shape):
    """``grad2d`` as a LinearMap from images to stacked fields."""
    shape = tuple(shape)
    return LinearMap(shape, shape + (2,), lambda u: grad2d(u).stack(),
                     lambda x: -div2d(x), name="grad2d")


def divergence_map(shape):
    """``div2d`` as a LinearMap from stacked fields to images."""
    shape = tuple(shape)
    return LinearMap(shape + (2,), shape, div2d, lambda u: -grad2d(u).stack(), name="div2d")


class LipschitzEstimateError(RuntimeError):
    pass


def estimate_lipschitz(grad_f, shape=None, rng=None, *, sampler=None, complex_=False,
                       retries=10):
    """Secant estimate ``|grad(x2) - grad(x1)| / |x2 - x1|`` at Gaussian points.

    The estimate never exceeds the true Lipschitz constant.  ``sampler(rng)``
    overrides the default Gaussian draw of the given ``shape``.
    """
    rng = np.random.default_rng() if rng is None else rng
    if sampler is None:
        if shape is None:
            raise ValueError("need a shape or a sampler")
        sampler = lambda r: _gaussian(r, tuple(shape), complex_)  # noqa: E731
    for _ in range(retries + 1):
        x1, x2 = sampler(rng), sampler(rng)
        den = np.linalg.norm(x2 - x1)
        if not np.isfinite(den) or den <= np.finfo(float).tiny * 1e4:
            continue
        num = np.linalg.norm(grad_f(x2) - grad_f(x1))
        L = num / den
        if np.isfinite(L) and L > 0:
            return float(L)
    raise LipschitzEstimateError("could not form a positive Lipschitz estimate "
                                 "(gradient looks constant or non-finite)")
