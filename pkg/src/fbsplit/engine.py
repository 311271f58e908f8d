"""Forward-backward splitting solver.

Three variants share one loop: ``plain`` (constant stepsize, reduced only by
backtracking), ``adaptive`` (spectral stepsizes) and ``accelerated`` (FISTA
with restart).  Every variant runs the non-monotone backtracking line search.
"""

from __future__ import annotations

import csv
import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linops import estimate_lipschitz

VARIANTS = ("plain", "accelerated", "adaptive")
STOP_RULES = ("combined", "relative", "normalized")
TRACE_COLUMNS = ("iter", "objective", "residual", "rel_residual", "norm_residual",
                 "stepsize", "backtracks", "restarted")


class NonFiniteError(ArithmeticError):
    """Raised when a gradient, objective or iterate stops being finite."""


class LineSearchError(RuntimeError):
    """Backtracking hit its halving limit without satisfying the descent test."""


@dataclass(frozen=True)
class Continuation:
    target_mu: float
    eta: float = 0.2

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if not self.target_mu > 0:
            raise ValueError("target_mu must be positive")


@dataclass
class SolverOptions:
    variant: str = "adaptive"
    max_iters: int = 1000
    tol: float = 1e-4
    window: int = 10
    tau0: Optional[float] = None
    eps_r: float = 1e-8
    eps_n: float = 1e-8
    restart: Optional[bool] = None
    continuation: Optional[Continuation] = None
    preconditioner: Optional[np.ndarray] = None
    record_objective: bool = True
    stop_rule: str = "combined"
    max_backtracks: int = 50
    ls_slack: float = 1e-12
    lipschitz_factor: float = 10.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tau0 is not None and not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if self.preconditioner is not None:
            self.preconditioner = np.asarray(self.preconditioner, dtype=float)
            if not np.all(self.preconditioner > 0):
                raise ValueError("preconditioner entries must be positive")
        if self.restart is None:
            self.restart = self.variant == "accelerated"


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    residual: float
    rel_residual: float
    norm_residual: float
    stepsize: float
    backtracks: int
    restarted: bool = False
    # momentum parameter that formed this step's reference point; it is 1 on
    # the first record and on the record after a restart
    alpha: float = 1.0
    smooth_value: float = math.nan
    # both sides of the accepted line-search test, and the window maximum
    ls_lhs: Optional[float] = None
    ls_rhs: Optional[float] = None
    ls_fmax: Optional[float] = None

    def csv_row(self):
        return [self.iteration, repr(self.objective), repr(self.residual),
                repr(self.rel_residual), repr(self.norm_residual), repr(self.stepsize),
                self.backtracks, int(self.restarted)]


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    status: str = "max_iters"

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for rec in self.records:
                w.writerow(rec.csv_row())

    def to_dict(self, wall_time=None):
        rows = [dict(zip(TRACE_COLUMNS, (r.iteration, r.objective, r.residual, r.rel_residual,
                                         r.norm_residual, r.stepsize, r.backtracks,
                                         bool(r.restarted))))
                for r in self.records]
        return {"status": self.status, "wall_time": wall_time, "records": rows}

    def to_json(self, path, wall_time=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(wall_time), fh, indent=1)


def read_trace_csv(path):
    """Load a trace CSV back into a dict of numpy columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and "objective" not in rows[0]:
        raise KeyError(f"{path}: no objective column")
    out = {}
    for col in TRACE_COLUMNS:
        conv = int if col in ("iter", "backtracks", "restarted") else float
        out[col] = np.array([conv(r[col]) for r in rows])
    return out


@dataclass
class SolveResult:
    x: np.ndarray
    trace: SolveTrace
    iterations: int
    wall_time: float
    stages: list = field(default_factory=list)

    @property
    def status(self):
        return self.trace.status

    @property
    def converged(self):
        return self.trace.status == "converged"


# ---------------------------------------------------------------------------
# building blocks

def _rdot(a, b):
    return float(np.vdot(a, b).real)


def fbs_step(problem, x, grad, tau, preconditioner=None):
    """One forward (gradient) and backward (prox) step; returns ``(x_next, x_hat)``."""
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient")
    if preconditioner is None:
        x_hat = x - tau * grad
        return problem.prox.prox_at(x_hat, tau), x_hat
    if not problem.prox.separable:
        raise ValueError(f"diagonal preconditioning needs a separable g, got {problem.prox.name}")
    step = tau * preconditioner
    x_hat = x - step * grad
    return problem.prox.prox_at(x_hat, step), x_hat


def spectral_stepsize(dx, dF, tau_prev, preconditioner=None):
    """Adaptive Barzilai-Borwein stepsize from a secant pair.

    Uses the minimum-residual step when it is more than half the
    steepest-descent step, otherwise ``tau_s - tau_m/2``.  Non-positive or
    non-finite results fall back to ``tau_prev``.
    """
    if preconditioner is None:
        xx, xF, FF = _rdot(dx, dx), _rdot(dx, dF), _rdot(dF, dF)
    else:
        xx = _rdot(dx, dx / preconditioner)
        xF = _rdot(dx, dF)
        FF = _rdot(dF, preconditioner * dF)
    if xx <= 0 or xF <= 0 or FF <= 0:
        return tau_prev
    tau_s = xx / xF
    tau_m = xF / FF
    tau = tau_m if tau_m / tau_s > 0.5 else tau_s - 0.5 * tau_m
    if not (np.isfinite(tau) and tau > 0):
        return tau_prev
    return float(tau)


def fista_update(alpha, x, x_prev):
    """Momentum recurrence; returns ``(alpha_next, y_next)``."""
    alpha_next = (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha)) / 2.0
    return alpha_next, x + ((alpha - 1.0) / alpha_next) * (x - x_prev)


def restart_check(y, x, x_prev):
    """True when the last move points uphill: ``Re<y - x, x - x_prev> >= 0``.

    A zero move never triggers a restart.
    """
    step = x - x_prev
    if not np.any(step):
        return False
    return _rdot(y - x, step) >= 0


def residuals(grad_new, x_hat, x_next, tau, r1=None, eps_r=1e-8, eps_n=1e-8,
              preconditioner=None):
    """Residual norm, relative residual and normalized residual.

    ``r1`` is the first iteration's residual norm (defaults to this one).
    """
    sub = (x_hat - x_next) / tau
    if preconditioner is not None:
        sub = sub / preconditioner
    r = float(np.linalg.norm(grad_new + sub))
    r_rel = r / (max(float(np.linalg.norm(grad_new)), float(np.linalg.norm(sub))) + eps_r)
    r_norm = r / ((r if r1 is None else r1) + eps_n)
    return r, r_rel, r_norm


@dataclass
class StepResult:
    x: np.ndarray
    x_hat: np.ndarray
    z: np.ndarray
    f: float
    tau: float
    backtracks: int
    lhs: float
    rhs: float


def line_search(problem, x_ref, grad_ref, tau, f_max, *, preconditioner=None,
                max_backtracks=50, slack=1e-12):
    """FBS step from ``x_ref`` with non-monotone backtracking.

    The step is accepted once ``f(x+) < f_max + Re<x+ - x_ref, grad_ref> +
    |x+ - x_ref|^2 / (2 tau)`` (norm weighted by the inverse preconditioner
    when one is given); otherwise ``tau`` is halved.  ``slack`` absorbs
    rounding, relative to ``max(1, |f_max|)``.
    """
    smooth = problem.smooth
    tol = slack * max(1.0, abs(f_max))
    for backtracks in range(max_backtracks + 1):
        x_next, x_hat = fbs_step(problem, x_ref, grad_ref, tau, preconditioner)
        z = smooth.linear_map.apply(x_next)
        f_next = smooth.value_at(z)
        dx = x_next - x_ref
        sq = _rdot(dx, dx) if preconditioner is None else _rdot(dx, dx / preconditioner)
        rhs = f_max + _rdot(dx, grad_ref) + sq / (2.0 * tau)
        if f_next < rhs + tol:
            return StepResult(x_next, x_hat, z, f_next, tau, backtracks, f_next, rhs)
        if not np.isfinite(f_next) and not np.all(np.isfinite(x_next)):
            raise NonFiniteError("non-finite iterate during line search")
        tau = tau / 2.0
    raise LineSearchError(f"no acceptable step after {max_backtracks} halvings")


def initial_stepsize(problem, options, rng):
    if options.tau0 is not None:
        return float(options.tau0)
    grad = problem.smooth.gradient
    sampler = problem.random_point
    P = options.preconditioner
    if P is not None:
        root = np.sqrt(P)
        L = estimate_lipschitz(lambda y: root * grad(root * y), rng=rng, sampler=sampler)
    else:
        L = estimate_lipschitz(grad, rng=rng, sampler=sampler)
    return options.lipschitz_factor / L


def _stop_value(rule, r_rel, r_norm):
    if rule == "relative":
        return r_rel
    if rule == "normalized":
        return r_norm
    return min(r_rel, r_norm)


# ---------------------------------------------------------------------------

def solve(problem, options=None, x0=None, rng=None):
    """Minimize ``f(x) + g(x)`` for a composite problem.

    Parameters
    ----------
    problem : CompositeProblem
        Smooth term (``ftilde`` and linear map) plus a prox-capable term.
    options : SolverOptions, optional
    x0 : array, optional
        Starting point; defaults to ``problem.init`` or zeros.
    rng : numpy Generator, optional
        Only used for the Lipschitz estimate behind the default stepsize.

    Returns
    -------
    SolveResult
        Final iterate, per-iteration trace and wall-clock time of the loop.
    """
    opts = options or SolverOptions()
    rng = np.random.default_rng(0) if rng is None else rng
    smooth, prox = problem.smooth, problem.prox
    A = smooth.linear_map
    P = opts.preconditioner
    if P is not None:
        P = np.broadcast_to(P, problem.shape)
    accelerated = opts.variant == "accelerated"
    adaptive = opts.variant == "adaptive"

    x = problem.initial_point() if x0 is None else np.array(x0, copy=True)
    tau = initial_stepsize(problem, opts, rng)

    start = time.perf_counter()
    z = A.apply(x)
    f = smooth.value_at(z)
    grad = A.adjoint(smooth.gradient_at(z))
    window = deque([f], maxlen=opts.window)
    trace = SolveTrace()

    # accelerated state: prediction point y and the previous iterate
    y, grad_y = x, grad
    alpha = 1.0
    # momentum parameter that produced the current prediction point
    alpha_ref = 1.0
    r1 = None

    for k in range(1, opts.max_iters + 1):
        if accelerated:
            x_ref, grad_ref = y, grad_y
        else:
            x_ref, grad_ref = x, grad
        f_max = max(window)
        try:
            step = line_search(problem, x_ref, grad_ref, tau, f_max, preconditioner=P,
                               max_backtracks=opts.max_backtracks, slack=opts.ls_slack)
        except (LineSearchError, NonFiniteError):
            trace.status = "nonfinite"
            break
        x_next, z_next, f_next = step.x, step.z, step.f
        grad_next = A.adjoint(smooth.gradient_at(z_next))
        g_next = prox.value_at(x_next) if opts.record_objective else math.nan
        r, r_rel, r_norm = residuals(grad_next, step.x_hat, x_next, step.tau, r1,
                                     opts.eps_r, opts.eps_n, P)
        if r1 is None:
            r1 = r

        tau_next = step.tau
        if adaptive:
            tau_next = spectral_stepsize(x_next - x, grad_next - grad, step.tau, P)

        restarted = False
        if accelerated:
            if opts.restart and restart_check(y, x_next, x):
                alpha = 1.0
                restarted = True
            alpha_used = alpha
            alpha, y = fista_update(alpha, x_next, x)
            coef = (alpha_used - 1.0) / alpha
            if coef:
                # A is linear: A(y) follows from the two products already formed
                z_y = z_next + coef * (z_next - z)
                f_ref = smooth.value_at(z_y)
                grad_y = A.adjoint(smooth.gradient_at(z_y))
            else:
                f_ref, grad_y = f_next, grad_next
        else:
            alpha_used = 1.0
            f_ref = f_next

        x, z, f, grad = x_next, z_next, f_next, grad_next
        # the window tracks f at the line-search reference point, so a
        # vanishing step always passes the test
        window.append(f_ref)
        tau = tau_next

        trace.records.append(TraceRecord(
            iteration=k, objective=float(f + g_next), residual=r, rel_residual=r_rel,
            norm_residual=r_norm, stepsize=step.tau, backtracks=step.backtracks,
            restarted=restarted, alpha=alpha_ref, smooth_value=float(f),
            ls_lhs=step.lhs, ls_rhs=step.rhs, ls_fmax=f_max))
        alpha_ref = alpha_used

        if not (np.isfinite(f) and np.isfinite(r) and np.all(np.isfinite(x))):
            trace.status = "nonfinite"
            break
        if _stop_value(opts.stop_rule, r_rel, r_norm) < opts.tol:
            trace.status = "converged"
            break
    wall = time.perf_counter() - start
    return SolveResult(x, trace, len(trace.records), wall)


# ---------------------------------------------------------------------------

def continuation_schedule(mu_max, target_mu, eta=0.2):
    """Regularization sequence ``eta*mu_max, eta^2*mu_max, ...`` floored at the target."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if not target_mu > 0:
        raise ValueError("target_mu must be positive")
    mus = [max(eta * mu_max, target_mu)]
    while mus[-1] > target_mu:
        mus.append(max(eta * mus[-1], target_mu))
    return mus


def continuation_solve(problem_family: Callable, options, x0=None, *, mu_max, rng=None):
    """Solve a sequence of problems with decreasing regularization.

    ``problem_family(mu)`` builds the problem for one value of ``mu``; each
    stage is warm-started from the previous solution.  ``mu_max`` is the
    smallest ``mu`` with a zero solution (``|A^T b|_inf`` for BPDN).
    """
    cont = options.continuation
    if cont is None:
        raise ValueError("options.continuation must be set")
    rng = np.random.default_rng(0) if rng is None else rng
    mus = continuation_schedule(mu_max, cont.target_mu, cont.eta)
    first = problem_family(mus[0])
    tau0 = initial_stepsize(first, options, rng)
    stage_opts = SolverOptions(**{**asdict_shallow(options), "tau0": tau0, "continuation": None})
    stages, x, total, wall = [], x0, 0, 0.0
    for mu in mus:
        problem = first if mu == mus[0] else problem_family(mu)
        res = solve(problem, stage_opts, x0=x, rng=rng)
        stages.append((mu, res))
        total += res.iterations
        wall += res.wall_time
        x = res.x
        if res.status == "nonfinite":
            break
    return SolveResult(x, res.trace, total, wall, stages)


def asdict_shallow(obj):
    return {f: getattr(obj, f) for f in obj.__dataclass_fields__}


def column_norm_preconditioner(A):
    """Diagonal ``1/|a_i|^2`` so that ``A diag(sqrt(gamma))`` has unit columns.

    ``A`` is a matrix or a LinearMap with a vector domain.
    """
    if hasattr(A, "apply"):
        (N,) = A.domain_shape
        cols = A.apply(np.eye(N))
    else:
        cols = np.asarray(A)
    norms2 = np.sum(np.abs(cols) ** 2, axis=0)
    if np.any(norms2 == 0):
        raise ValueError("matrix has a zero column")
    return 1.0 / norms2


__all__ = ["VARIANTS", "SolverOptions", "Continuation", "SolveTrace", "SolveResult",
           "TraceRecord", "fbs_step", "spectral_stepsize", "fista_update", "restart_check",
           "line_search", "residuals", "solve", "continuation_solve",
           "continuation_schedule", "column_norm_preconditioner", "read_trace_csv",
           "NonFiniteError", "LineSearchError"]
