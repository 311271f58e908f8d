"""Seeded test-problem generators.

Each problem kind has a data maker (``rng -> dict of arrays``) and a builder
(``data, params -> CompositeProblem``).  Keeping the two apart lets an
instance be written to disk as raw arrays and rebuilt exactly.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import prox as P
from . import smooth as S
from .linops import div2d, subsampled_dft_map


@dataclass(frozen=True)
class CompositeProblem:
    """``ftilde(A x) + g(x)`` plus bookkeeping for the benchmark harness."""

    smooth: S.SmoothTerm
    prox: P.ProxTerm
    shape: tuple
    name: str
    recover: Optional[Callable] = None
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        if tuple(self.smooth.linear_map.domain_shape) != tuple(self.shape):
            raise ValueError(f"{self.name}: smooth term acts on "
                             f"{self.smooth.linear_map.domain_shape}, "
                             f"problem shape is {self.shape}")

    @property
    def is_complex(self):
        return self.smooth.linear_map.is_complex

    def initial_point(self):
        if self.init is not None:
            return np.array(self.init, copy=True)
        return np.zeros(self.shape, dtype=complex if self.is_complex else float)

    def random_point(self, rng):
        return self.smooth.linear_map.random_domain(rng)

    def objective(self, x):
        return self.smooth.value(x) + self.prox.value_at(x)


@dataclass
class InstanceMeta:
    problem: str
    seed: int
    dims: dict
    ground_truth: Optional[np.ndarray] = None
    snr_db: Optional[float] = None
    regularization: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def add_noise_snr(signal, snr_db, rng):
    """Gaussian noise scaled so that ``10 log10(|signal|^2 / |noise|^2) == snr_db``."""
    noise = rng.standard_normal(np.shape(signal))
    noise *= np.linalg.norm(signal) / np.linalg.norm(noise) * 10.0 ** (-snr_db / 20.0)
    return signal + noise, noise


def snr_db(signal, noise):
    return 10.0 * np.log10(np.sum(np.abs(signal) ** 2) / np.sum(np.abs(noise) ** 2))


def _sparse_signs(rng, n, k):
    x = np.zeros(n)
    support = rng.choice(n, k, replace=False)
    x[support] = rng.choice([-1.0, 1.0], k)
    return x


# ---------------------------------------------------------------------------
# sparse regression family

def _make_sparse_ls(rng, m, n=1000, k=20, snr=13.0, column_scale=0.0, variance=None):
    # default variance 1/m gives columns of unit expected norm
    A = rng.standard_normal((m, n)) * np.sqrt(1.0 / m if variance is None else variance)
    if column_scale:
        A *= 10.0 ** rng.uniform(-column_scale, column_scale, n)
    x0 = _sparse_signs(rng, n, k)
    signal = A @ x0
    b, noise = add_noise_snr(signal, snr, rng)
    return {"A": A, "b": b, "x_true": x0, "signal": signal}


def _build_lasso(data, radius=15.0):
    return CompositeProblem(S.least_squares(data["A"], data["b"]), P.l1_ball_term(radius),
                            (data["A"].shape[1],), "lasso")


def _build_bpdn(data, mu=0.1):
    return CompositeProblem(S.least_squares(data["A"], data["b"]), P.l1_term(mu),
                            (data["A"].shape[1],), "bpdn")


def _make_logistic(rng, m=500, n=1000, k=20, variance=4.0):
    A = np.sqrt(variance) * rng.standard_normal((m, n))
    x0 = _sparse_signs(rng, n, k)
    p = S.sigmoid(A @ x0)
    b = (rng.random(m) < p).astype(float)
    return {"A": A, "b": b, "x_true": x0}


def _build_logistic(data, mu=20.0):
    return CompositeProblem(S.logit_loss(data["A"], data["b"]), P.l1_term(mu),
                            (data["A"].shape[1],), "logistic")


def _make_mmv(rng, m=20, n=30, cols=10, nonzero_rows=7, sigma=0.1, variance=1.0):
    A = np.sqrt(variance) * rng.standard_normal((m, n))
    X0 = np.zeros((n, cols))
    rows = rng.choice(n, nonzero_rows, replace=False)
    X0[rows] = rng.standard_normal((nonzero_rows, cols))
    B = A @ X0 + sigma * rng.standard_normal((m, cols))
    return {"A": A, "B": B, "x_true": X0}


def _build_mmv(data, mu=1.0):
    A, B = data["A"], data["B"]
    return CompositeProblem(S.least_squares(A, B), P.group_rows_term(mu),
                            (A.shape[1], B.shape[1]), "mmv")


def _make_democratic(rng, m=500, n=1000):
    rows = np.sort(rng.choice(n, m, replace=False))
    b = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return {"rows": rows, "b": b, "n": np.array(n)}


def _build_democratic(data, mu=300.0):
    A = subsampled_dft_map(data["rows"], int(data["n"]))
    return CompositeProblem(S.least_squares(A, data["b"]), P.linf_term(mu),
                            A.domain_shape, "democratic")


# ---------------------------------------------------------------------------
# matrix problems

def _make_matcomp(rng, m=200, n=1000, rank=5, std=10.0, observed=1.0):
    X = std * rng.standard_normal((m, n))
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    X = (U[:, :rank] * s[:rank]) @ Vh[:rank]
    Y = (rng.random((m, n)) < S.sigmoid(X)).astype(float)
    data = {"Y": Y, "x_true": X}
    if observed < 1.0:
        data["mask"] = rng.random((m, n)) < observed
    return data


def _build_matcomp(data, mu=25.0):
    Y = data["Y"]
    return CompositeProblem(S.logit_loss(None, Y, data.get("mask")), P.nuclear_term(mu),
                            Y.shape, "matcomp")


def _make_phaselift(rng, n=200, m=600, snr=13.0):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    clean = np.abs(a.conj() @ x) ** 2
    b, _ = add_noise_snr(clean, snr, rng) if snr is not None else (clean, None)
    return {"vectors": a, "b": b, "x_true": x}


def phaselift_mu_max(vectors, b):
    """Smallest ``mu`` for which the zero matrix solves the PhaseLift problem."""
    G = 2.0 * S.lift_map(vectors).adjoint(np.asarray(b, dtype=float))
    return float(np.linalg.eigvalsh(G)[-1])


def _build_phaselift(data, mu=15.0, mu_frac=None):
    a, b = data["vectors"], data["b"]
    if mu_frac is not None:
        mu = mu_frac * phaselift_mu_max(a, b)
    N = a.shape[1]
    return CompositeProblem(S.phaselift_loss(a, b), P.psd_nuclear_term(mu), (N, N), "phaselift")


def _make_nmf(rng, m=800, n=200, rank=10, noise_var=1e-2):
    X = rng.random((m, rank))
    Y = rng.random((n, rank))
    Q = X @ Y.T + np.sqrt(noise_var) * rng.standard_normal((m, n))
    init = rng.random((m + n, rank))
    return {"Q": Q, "init": init, "x_true": np.vstack([X, Y])}


def _build_nmf(data):
    Q, init = data["Q"], data["init"]
    K = init.shape[1]
    return CompositeProblem(S.nmf_loss(Q, K), P.nonneg_term(), init.shape, "nmf", init=init)


def two_moons(rng, n_points=1000, noise=0.05):
    """Two interleaved half circles; returns points and 0/1 moon labels."""
    n1 = n_points // 2
    n2 = n_points - n1
    t1 = np.pi * rng.random(n1)
    t2 = np.pi * rng.random(n2)
    upper = np.column_stack([np.cos(t1), np.sin(t1)])
    lower = np.column_stack([1.0 - np.cos(t2), 0.5 - np.sin(t2)])
    pts = np.vstack([upper, lower]) + noise * rng.standard_normal((n_points, 2))
    labels = np.r_[np.zeros(n1), np.ones(n2)]
    return pts, labels


def affinity_weights(points, delta=0.01, sigma=0.1, positive_exponent=False):
    """``W_ij = delta - exp(-|x_i - x_j|^2 / sigma^2)``.

    ``positive_exponent=True`` uses ``exp(+d^2/sigma^2)`` literally, which
    overflows for all but tiny point clouds.
    """
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    sign = 1.0 if positive_exponent else -1.0
    with np.errstate(over="ignore"):
        return delta - np.exp(sign * d2 / sigma ** 2)


def _make_maxnorm(rng, n_points=1000, rank=20, noise=0.05, delta=0.01, sigma=0.1,
                  positive_exponent=False):
    pts, labels = two_moons(rng, n_points, noise)
    W = affinity_weights(pts, delta, sigma, positive_exponent)
    init = rng.standard_normal((n_points, rank))
    init /= np.linalg.norm(init, axis=1, keepdims=True)
    return {"W": W, "points": pts, "labels": labels, "init": init}


def _build_maxnorm(data):
    W, init = data["W"], data["init"]
    return CompositeProblem(S.maxnorm_loss(W, init.shape[1]), P.unit_rows_term(), init.shape,
                            "maxnorm", init=init)


def maxcut_labels(X, rng):
    """Labels ``sign(X r)`` for a random Gaussian ``r``."""
    return np.sign(X @ rng.standard_normal(X.shape[1]))


def cluster_purity(pred, truth):
    pred = np.asarray(pred) > 0
    truth = np.asarray(truth) > 0
    agree = np.mean(pred == truth)
    return float(max(agree, 1.0 - agree))


# ---------------------------------------------------------------------------
# dual problems

# modified Shepp-Logan: intensity, semi-axes a, b, centre x, y, rotation (deg)
_SHEPP_LOGAN = np.array([
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
])


def shepp_logan(size=256):
    """Analytic Shepp-Logan phantom with intensities in [0, 1]."""
    coords = np.linspace(-1.0, 1.0, size)
    X, Y = np.meshgrid(coords, coords[::-1])
    img = np.zeros((size, size))
    for amp, a, b, x0, y0, phi in _SHEPP_LOGAN:
        c, s = np.cos(np.radians(phi)), np.sin(np.radians(phi))
        xr = (X - x0) * c + (Y - y0) * s
        yr = -(X - x0) * s + (Y - y0) * c
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    return np.clip(img, 0.0, 1.0)


def _make_tv(rng, size=256, sigma=0.05):
    clean = shepp_logan(size)
    y = clean + sigma * rng.standard_normal(clean.shape)
    return {"y": y, "x_true": clean}


def _build_tv(data, mu=0.1):
    y = data["y"]
    return CompositeProblem(S.tv_dual_loss(y, mu), P.unit_rows_term(), y.shape + (2,), "tv",
                            recover=lambda x: y + mu * div2d(x))


def _make_svm(rng, n=1000, dim=15):
    labels = rng.choice([-1.0, 1.0], n)
    D = rng.standard_normal((n, dim)) + labels[:, None]
    return {"D": D, "labels": labels}


def _build_svm(data, C=1e-2):
    D, labels = data["D"], data["labels"]
    DL = D * labels[:, None]
    return CompositeProblem(S.svm_dual_loss(D, labels), P.box_term(0.0, C), (D.shape[0],),
                            "svm", recover=lambda x: DL.T @ x)


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class Kind:
    make: Callable
    build: Callable
    data_params: tuple
    build_params: tuple


KINDS = {
    "lasso": Kind(_make_sparse_ls, _build_lasso,
                  ("m", "n", "k", "snr", "column_scale", "variance"), ("radius",)),
    "bpdn": Kind(_make_sparse_ls, _build_bpdn,
                 ("m", "n", "k", "snr", "column_scale", "variance"), ("mu",)),
    "logistic": Kind(_make_logistic, _build_logistic, ("m", "n", "k", "variance"), ("mu",)),
    "mmv": Kind(_make_mmv, _build_mmv,
                ("m", "n", "cols", "nonzero_rows", "sigma", "variance"), ("mu",)),
    "democratic": Kind(_make_democratic, _build_democratic, ("m", "n"), ("mu",)),
    "matcomp": Kind(_make_matcomp, _build_matcomp, ("m", "n", "rank", "std", "observed"),
                    ("mu",)),
    "tv": Kind(_make_tv, _build_tv, ("size", "sigma"), ("mu",)),
    "svm": Kind(_make_svm, _build_svm, ("n", "dim"), ("C",)),
    "phaselift": Kind(_make_phaselift, _build_phaselift, ("n", "m", "snr"), ("mu", "mu_frac")),
    "nmf": Kind(_make_nmf, _build_nmf, ("m", "n", "rank", "noise_var"), ()),
    "maxnorm": Kind(_make_maxnorm, _build_maxnorm,
                    ("n_points", "rank", "noise", "delta", "sigma", "positive_exponent"), ()),
}

KIND_DEFAULTS = {
    "lasso": {"snr": 13.0, "radius": 15.0},
    "bpdn": {"snr": 20.0, "mu": 0.1},
}

# benchmark rows: name -> (kind, full-size overrides)
BENCHMARKS = {
    "lasso100": ("lasso", {"m": 100}),
    "lasso500": ("lasso", {"m": 500}),
    "bpdn100": ("bpdn", {"m": 100}),
    "bpdn500": ("bpdn", {"m": 500}),
    "logistic": ("logistic", {}),
    "mmv": ("mmv", {}),
    "democratic": ("democratic", {}),
    "matcomp": ("matcomp", {}),
    "tv": ("tv", {}),
    "svm": ("svm", {}),
    "phaselift": ("phaselift", {}),
    "nmf": ("nmf", {}),
    "maxnorm": ("maxnorm", {}),
}

DESK_SCALE = {
    "matcomp": {"m": 100, "n": 200, "rank": 3},
    "tv": {"size": 64},
    "phaselift": {"n": 40, "m": 120, "mu_frac": 0.05},
    "maxnorm": {"n_points": 200},
}

# iteration caps used by the benchmark
MAX_ITERS = {"svm": 5000}


def _split_params(kind, params):
    spec = KINDS[kind]
    unknown = set(params) - set(spec.data_params) - set(spec.build_params)
    if unknown:
        raise TypeError(f"{kind}: unknown parameters {sorted(unknown)}")
    data_kw = {k: v for k, v in params.items() if k in spec.data_params}
    build_kw = {k: v for k, v in params.items() if k in spec.build_params}
    return data_kw, build_kw


def generate(kind, seed=0, **params):
    """Build a seeded instance of ``kind``; returns ``(problem, meta)``."""
    if kind not in KINDS:
        raise KeyError(f"unknown problem kind {kind!r}")
    params = {**KIND_DEFAULTS.get(kind, {}), **params}
    data_kw, build_kw = _split_params(kind, params)
    rng = np.random.default_rng(seed)
    data = KINDS[kind].make(rng, **data_kw)
    problem = KINDS[kind].build(data, **build_kw)
    meta = InstanceMeta(kind, seed, _dims(data), data.get("x_true"),
                        params.get("snr"), build_kw, params)
    meta.data = data
    return problem, meta


def benchmark_instance(name, seed=0, desk_scale=False, **overrides):
    if name not in BENCHMARKS:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(BENCHMARKS)}")
    kind, params = BENCHMARKS[name]
    params = dict(params)
    if desk_scale:
        params.update(DESK_SCALE.get(name, {}))
    params.update(overrides)
    problem, meta = generate(kind, seed, **params)
    return problem, meta


def _dims(data):
    return {k: list(np.shape(v)) for k, v in data.items() if np.ndim(v) > 0}


def gen_lasso(m=100, seed=0, **kw):
    return generate("lasso", seed, m=m, **kw)


def gen_bpdn(m=100, seed=0, **kw):
    return generate("bpdn", seed, m=m, **kw)


def gen_logistic(seed=0, **kw):
    return generate("logistic", seed, **kw)


def gen_mmv(seed=0, **kw):
    return generate("mmv", seed, **kw)


def gen_democratic(seed=0, **kw):
    return generate("democratic", seed, **kw)


def gen_matrix_completion(seed=0, **kw):
    return generate("matcomp", seed, **kw)


def gen_tv_denoise(seed=0, **kw):
    return generate("tv", seed, **kw)


def gen_svm(seed=0, **kw):
    return generate("svm", seed, **kw)


def gen_phaselift(seed=0, **kw):
    return generate("phaselift", seed, **kw)


def gen_nmf(seed=0, **kw):
    return generate("nmf", seed, **kw)


def gen_maxnorm(seed=0, **kw):
    return generate("maxnorm", seed, **kw)


def derive_seed(master_seed, problem, trial):
    """Independent per-(problem, trial) seed, stable across runs and platforms."""
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(problem.encode()), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# instance bundles: JSON header + .npz arrays

def dump_instance(meta, path):
    """Write ``<path>.json`` and ``<path>.npz`` describing an instance."""
    path = Path(path)
    data = meta.data
    np.savez(path.with_suffix(".npz"), **data)
    header = {
        "format": "fbsplit-instance/1",
        "problem": meta.problem,
        "seed": meta.seed,
        "params": meta.params,
        "regularization": meta.regularization,
        "snr_db": meta.snr_db,
        "dims": meta.dims,
        "arrays": {k: {"shape": list(np.shape(v)), "dtype": str(np.asarray(v).dtype)}
                   for k, v in data.items()},
        "array_file": path.with_suffix(".npz").name,
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))
    return path.with_suffix(".json")


def load_instance(path):
    """Rebuild ``(problem, meta)`` from a bundle written by :func:`dump_instance`."""
    path = Path(path).with_suffix(".json")
    header = json.loads(path.read_text())
    kind = header["problem"]
    with np.load(path.parent / header["array_file"]) as npz:
        data = {k: npz[k] for k in npz.files}
    _, build_kw = _split_params(kind, header["params"])
    problem = KINDS[kind].build(data, **build_kw)
    meta = InstanceMeta(kind, header["seed"], header["dims"], data.get("x_true"),
                        header["snr_db"], header["regularization"], header["params"])
    meta.data = data
    return problem, meta
