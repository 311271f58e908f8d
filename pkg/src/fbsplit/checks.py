"""Numerical oracles and invariant checks.

These back the ``selftest`` CLI command and the test-suite.  None of them
share code paths with the operators they check: the prox oracle is a grid
search, gradients are checked by central differences and adjoints by
randomized inner products.
"""

from __future__ import annotations

import itertools

import numpy as np


class OracleBracketError(RuntimeError):
    pass


def _default_points(dim):
    return {1: 2001, 2: 61, 3: 25}[dim]


def prox_oracle(g_value, z, t, grid=None, *, tol=1e-7):
    """Brute-force minimizer of ``t*g(x) + 1/2 |x - z|^2`` for ``dim(z) <= 3``.

    ``g_value`` must accept a batch of points of shape (n, dim) and return n
    finite values.  ``grid`` is a (lo, hi) pair bounding every coordinate; by
    default a box containing the origin and ``z`` with a margin.  The first
    grid is refined by repeated zooming around the best point until the
    spacing drops below ``tol``.  Use :func:`projection_oracle` for
    indicator functions, whose grid minimizers drift along curved boundaries.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    dim = z.size
    if dim > 3:
        raise ValueError("prox_oracle only handles dimension <= 3")
    if grid is None:
        B = 2.0 * max(1.0, float(np.max(np.abs(z)))) + 1.0
        lo, hi = np.full(dim, -B), np.full(dim, B)
    else:
        lo, hi = np.full(dim, float(grid[0])), np.full(dim, float(grid[1]))
    n = _default_points(dim)

    first = True
    while True:
        axes = [np.linspace(lo[i], hi[i], n) for i in range(dim)]
        P = np.array(list(itertools.product(*axes))) if dim > 1 else axes[0][:, None]
        F = 0.5 * np.sum((P - z) ** 2, axis=1) + t * np.asarray(g_value(P), dtype=float)
        if not np.isfinite(F).any():
            raise OracleBracketError("objective is not finite on the grid")
        best = P[int(np.nanargmin(F))]
        h = (hi - lo) / (n - 1)
        if first:
            on_edge = np.isclose(best, lo) | np.isclose(best, hi)
            if np.any(on_edge):
                raise OracleBracketError("grid does not bracket the minimizer")
            first = False
        if np.max(h) < tol:
            return best
        w = 4.0 * h
        lo, hi = best - w, best + w


def _ray_boundary(violation, center, U, R, steps=80):
    """Largest feasible ``r <= R`` along each unit direction (rows of U), by bisection."""
    lo = np.zeros(len(U))
    hi = np.full(len(U), R)
    inside = np.asarray(violation(center + R * U)) <= 0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        ok = np.asarray(violation(center + mid[:, None] * U)) <= 0
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    r = np.where(inside, R, lo)
    return center + r[:, None] * U


def projection_oracle(violation, z, center=None, *, tol=1e-10, n_angles=3601, n_zoom=101):
    """Brute-force Euclidean projection onto ``{x : violation(x) <= 0}`` in 1-D or 2-D.

    The set must be star-shaped about ``center`` (an interior point, default
    the origin).  Boundary points are located by bisection along rays; in 2-D
    the ray angle is then searched on a grid of ``n_angles`` points, refined by
    zoom grids of ``n_zoom`` points around the best angle, which stays
    accurate on curved boundaries.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    dim = z.size
    if dim > 2:
        raise ValueError("projection_oracle only handles dimension <= 2")
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float).ravel()
    if not np.asarray(violation(c[None]))[0] < 0:
        raise ValueError("center must be strictly feasible")
    if np.asarray(violation(z[None]))[0] <= 0:
        return z.copy()
    R = 2.0 * (np.linalg.norm(z) + np.linalg.norm(c)) + 1.0
    if dim == 1:
        P = _ray_boundary(violation, c, np.array([[1.0], [-1.0]]), R)
        return P[int(np.argmin(np.abs(P[:, 0] - z[0])))]
    lo, hi, n = -np.pi, np.pi, n_angles
    while True:
        theta = np.linspace(lo, hi, n)
        P = _ray_boundary(violation, c, np.column_stack([np.cos(theta), np.sin(theta)]), R)
        k = int(np.argmin(np.sum((P - z) ** 2, axis=1)))
        step = (hi - lo) / (n - 1)
        if step < tol:
            return P[k]
        lo, hi, n = theta[k] - 4.0 * step, theta[k] + 4.0 * step, n_zoom


def _rel(a, b, floor=1e-300):
    return abs(a - b) / max(abs(a), abs(b), floor)


def adjoint_error(linear_map, rng, probes=20):
    """Largest relative mismatch of ``Re<Au, v>`` and ``Re<u, A^H v>``."""
    worst = 0.0
    for _ in range(probes):
        u = linear_map.random_domain(rng)
        v = linear_map.random_range(rng)
        Au, Ahv = linear_map.apply(u), linear_map.adjoint(v)
        lhs = np.vdot(Au, v).real
        rhs = np.vdot(u, Ahv).real
        scale = np.linalg.norm(Au) * np.linalg.norm(v) + np.linalg.norm(u) * np.linalg.norm(Ahv)
        worst = max(worst, abs(lhs - rhs) / max(scale, 1e-300))
    return worst


def gradient_error(term, rng, points=10, *, point_sampler=None, h=1e-6):
    """Largest relative error of central differences against the gradient.

    Directional derivatives ``(f(x+hd) - f(x-hd)) / 2h`` are compared with
    ``Re<grad f(x), d>`` along random unit directions ``d``.
    """
    A = term.linear_map
    sampler = point_sampler or A.random_domain
    worst = 0.0
    for _ in range(points):
        x = sampler(rng)
        d = A.random_domain(rng)
        d = d / np.linalg.norm(d)
        step = h * max(1.0, float(np.linalg.norm(x)))
        fd = (term.value(x + step * d) - term.value(x - step * d)) / (2 * step)
        an = float(np.vdot(term.gradient(x), d).real)
        worst = max(worst, _rel(fd, an, 1e-8))
    return worst


def lscon_violations(trace, slack=1e-12):
    """Records whose accepted step breaks the non-monotone descent test."""
    bad = []
    for rec in trace.records:
        if rec.ls_lhs is None:
            continue
        tol = slack * max(1.0, abs(rec.ls_fmax))
        if not rec.ls_lhs < rec.ls_rhs + tol:
            bad.append(rec.iteration)
    return bad


# ---------------------------------------------------------------------------
# selftest suites

def _zero(P):
    return np.zeros(len(P))


def _l1(P):
    return np.sum(np.abs(P), axis=1)


def _l2(P):
    return np.linalg.norm(P, axis=1)


def _suite_prox(rng, n=20):
    from . import prox

    failures = []
    for _ in range(n):
        z = rng.normal(scale=2.0, size=2)
        t = float(rng.uniform(0.05, 2.0))
        cases = {
            "shrink": (_l1, prox.shrink(z, t)),
            "linf": (lambda P: np.max(np.abs(P), axis=1), prox.prox_linf(z, t)),
            "group_rows": (_l2, prox.group_row_shrink(z[None], t)[0]),
            "nuclear": (_l2, prox.prox_nuclear(z[None], t)[0]),
        }
        sets = {
            "l1_ball": (lambda P: _l1(P) - t, None, prox.project_l1_ball(z, t)),
            "unit_rows": (lambda P: _l2(P) - 1.0, None, prox.project_rows_unit_ball(z[None])[0]),
            "box": (lambda P: np.max(np.abs(P - 0.25) - 0.75, axis=1), [0.25, 0.25],
                    prox.project_box(z, -0.5, 1.0)),
            "nonneg": (lambda P: np.max(-P, axis=1), [1.0, 1.0], prox.project_nonneg(z)),
        }
        results = [(name, got, prox_oracle(g, z, t)) for name, (g, got) in cases.items()]
        results += [(name, got, projection_oracle(v, z, c)) for name, (v, c, got) in sets.items()]
        for name, got, want in results:
            if np.max(np.abs(want - got)) > 1e-3:
                failures.append(f"prox {name}: z={z}, t={t}: got {got}, oracle {want}")
    return failures


def _suite_adjoint(rng):
    from . import linops, smooth

    maps = {
        "dense": linops.dense_map(rng.standard_normal((7, 5))),
        "dft": linops.subsampled_dft_map(rng.choice(16, 6, replace=False), 16),
        "grad2d": linops.gradient_map((5, 4)),
        "div2d": linops.divergence_map((3, 6)),
        "lift": smooth.lift_map(rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))),
        "svm": smooth.svm_dual_map(rng.standard_normal((8, 3)), rng.choice([-1.0, 1.0], 8)),
    }
    return [f"adjoint {k}: error {e:.2e}" for k, m in maps.items()
            if (e := adjoint_error(m, rng)) > 1e-10]


def _suite_gradient(rng):
    from . import linops, smooth

    D = rng.standard_normal((9, 3))
    vecs = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    terms = {
        "least_squares": smooth.least_squares(rng.standard_normal((6, 4)), rng.standard_normal(6)),
        "least_squares_dft": smooth.least_squares(
            linops.subsampled_dft_map([0, 3, 5], 8),
            rng.standard_normal(3) + 1j * rng.standard_normal(3)),
        "logit": smooth.logit_loss(rng.standard_normal((6, 4)), rng.integers(0, 2, 6)),
        "masked_quadratic": smooth.masked_quadratic(rng.standard_normal((4, 3)),
                                                    rng.random((4, 3)) < 0.5),
        "phaselift": smooth.phaselift_loss(vecs, rng.random(6)),
        "nmf": smooth.nmf_loss(rng.random((5, 4)), 2),
        "maxnorm": smooth.maxnorm_loss(rng.standard_normal((5, 5)), 2),
        "tv_dual": smooth.tv_dual_loss(rng.random((5, 4)), 0.3),
        "svm_dual": smooth.svm_dual_loss(D, rng.choice([-1.0, 1.0], 9)),
    }
    return [f"gradient {k}: error {e:.2e}" for k, term in terms.items()
            if (e := gradient_error(term, rng)) > 1e-5]


def _suite_linesearch(rng):
    from . import engine, problems

    failures = []
    for name in ("lasso", "bpdn", "tv"):
        kwargs = {"lasso": {"m": 40, "n": 120, "k": 6, "radius": 4.0},
                  "bpdn": {"m": 40, "n": 120, "k": 6},
                  "tv": {"size": 16}}[name]
        problem, _ = problems.generate(name, seed=int(rng.integers(2**31)), **kwargs)
        for variant in engine.VARIANTS:
            res = engine.solve(problem, engine.SolverOptions(variant=variant, max_iters=300),
                               rng=np.random.default_rng(0))
            bad = lscon_violations(res.trace)
            if bad:
                failures.append(f"line search {name}/{variant}: violated at {bad[:5]}")
            if res.trace.status == "nonfinite":
                failures.append(f"line search {name}/{variant}: non-finite")
    return failures


SUITES = {
    "prox-oracle": _suite_prox,
    "adjoint": _suite_adjoint,
    "gradient": _suite_gradient,
    "line-search": _suite_linesearch,
}


def run_selftest(seed=0, log=print):
    """Run every invariant suite; return the list of failure messages."""
    rng = np.random.default_rng(seed)
    failures = []
    for name, suite in SUITES.items():
        found = suite(rng)
        log(f"{name:12s} {'FAIL' if found else 'ok'}")
        for msg in found:
            log("  " + msg)
        failures.extend(found)
    return failures


__all__ = ["prox_oracle", "projection_oracle", "adjoint_error", "gradient_error",
           "lscon_violations", "run_selftest", "OracleBracketError"]
