import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fbsplit import prox
from fbsplit.checks import OracleBracketError, projection_oracle, prox_oracle
from fbsplit.smooth import HermitianError

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)
thresholds = st.floats(0.0, 10.0)


def l1(P):
    return np.sum(np.abs(P), axis=1)


def l2(P):
    return np.linalg.norm(P, axis=1)


# --- oracles themselves ---------------------------------------------------

def test_prox_oracle_recovers_quadratic_minimizer():
    # t*g(x) = t/2 |x|^2 has prox z / (1 + t)
    z = np.array([1.5, -0.7])
    got = prox_oracle(lambda P: 0.5 * np.sum(P**2, axis=1), z, 0.5)
    np.testing.assert_allclose(got, z / 1.5, atol=1e-6)


def test_prox_oracle_rejects_unbracketed_grid():
    with pytest.raises(OracleBracketError):
        prox_oracle(lambda P: -10.0 * P[:, 0], np.array([0.0]), 1.0, grid=(-1, 1))


def test_projection_oracle_disk_far_point():
    z = np.array([6.6, 0.45])
    got = projection_oracle(lambda P: l2(P) - 1.0, z)
    np.testing.assert_allclose(got, z / np.linalg.norm(z), atol=1e-8)


def test_projection_oracle_feasible_point_is_fixed():
    z = np.array([0.1, -0.2])
    np.testing.assert_array_equal(projection_oracle(lambda P: l2(P) - 1.0, z), z)


# --- closed forms against brute force ---------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_separable_and_norm_proxes_match_oracle(seed):
    rng = np.random.default_rng(seed)
    for dim in (1, 2):
        z = rng.normal(scale=2.0, size=dim)
        t = rng.uniform(0.05, 2.0)
        pairs = [(l1, prox.shrink(z, t)),
                 (lambda P: np.max(np.abs(P), axis=1), prox.prox_linf(z, t)),
                 (l2, prox.group_row_shrink(z[None], t)[0]),
                 (l2, prox.prox_nuclear(z[None], t)[0])]
        for g, got in pairs:
            np.testing.assert_allclose(got, prox_oracle(g, z, t), atol=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_projections_match_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    for dim in (1, 2):
        z = rng.normal(scale=2.0, size=dim)
        r = rng.uniform(0.2, 2.0)
        c = np.full(dim, 0.25)
        cases = [(lambda P: l1(P) - r, None, prox.project_l1_ball(z, r)),
                 (lambda P: l2(P) - 1.0, None, prox.project_rows_unit_ball(z[None])[0]),
                 (lambda P: np.max(np.abs(P - 0.25) - 0.75, axis=1), c,
                  prox.project_box(z, -0.5, 1.0)),
                 (lambda P: np.max(-P, axis=1), c + 0.75, prox.project_nonneg(z))]
        for viol, center, got in cases:
            np.testing.assert_allclose(got, projection_oracle(viol, z, center), atol=1e-3)


def test_psd_nuclear_scalar_matches_oracle():
    for z in (-1.3, 0.2, 2.7):
        want = prox_oracle(lambda P: np.where(P[:, 0] >= 0, P[:, 0], np.inf),
                           np.array([z]), 0.5)
        got = prox.prox_psd_nuclear(np.array([[z]]), 0.5)
        assert got[0, 0] == pytest.approx(want[0], abs=1e-3)


# --- worked examples -------------------------------------------------------

def test_shrink_example():
    np.testing.assert_allclose(prox.shrink(np.array([3.0, -0.5, -2.0]), 1.0), [2.0, 0.0, -1.0])


def test_shrink_complex_keeps_phase():
    z = np.array([3 + 4j, 0.1j])
    np.testing.assert_allclose(prox.shrink(z, 1.0), [(3 + 4j) * 4 / 5, 0.0])


def test_l1_ball_example():
    np.testing.assert_allclose(prox.project_l1_ball(np.array([3.0, 1.0]), 2.0), [2.0, 0.0])


def test_linf_example():
    # |x|_inf prox pulls the largest magnitudes down to a common level
    np.testing.assert_allclose(prox.prox_linf(np.array([3.0, -1.0]), 1.0), [2.0, -1.0])
    np.testing.assert_allclose(prox.prox_linf(np.array([3.0, -3.0]), 1.0), [2.5, -2.5])


def test_nuclear_on_diagonal():
    Z = np.diag([3.0, 1.0, 0.5])
    np.testing.assert_allclose(prox.prox_nuclear(Z, 1.0), np.diag([2.0, 0.0, 0.0]), atol=1e-12)


def test_psd_nuclear_drops_negative_eigenvalues(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    Z = Q @ np.diag([3.0, 0.5, -1.0, -4.0]) @ Q.T
    got = prox.prox_psd_nuclear(Z, 1.0)
    np.testing.assert_allclose(np.linalg.eigvalsh(got), [0, 0, 0, 2.0], atol=1e-12)


def test_psd_nuclear_rejects_non_hermitian():
    with pytest.raises(HermitianError):
        prox.prox_psd_nuclear(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.1)


def test_unit_rows_on_tv_field(rng):
    Z = rng.normal(scale=3.0, size=(4, 5, 2))
    out = prox.project_rows_unit_ball(Z)
    assert np.all(np.linalg.norm(out, axis=-1) <= 1 + 1e-12)


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        prox.shrink(np.ones(2), -1.0)
    with pytest.raises(ValueError):
        prox.project_l1_ball(np.ones(2), 0.0)
    with pytest.raises(ValueError):
        prox.project_box(np.ones(2), 1.0, 0.0)


# --- properties ------------------------------------------------------------

@given(vectors, thresholds)
def test_shrink_optimality(z, t):
    x = prox.shrink(z, t)
    nz = x != 0
    # subgradient inclusion: (z - x)/t in t*d|x|
    np.testing.assert_allclose(z[nz] - x[nz], t * np.sign(x[nz]), atol=1e-9)
    assert np.all(np.abs(z[~nz]) <= t + 1e-12)


@given(vectors, st.floats(0.01, 20.0))
def test_l1_ball_feasible_and_idempotent(z, r):
    x = prox.project_l1_ball(z, r)
    assert np.sum(np.abs(x)) <= r * (1 + 1e-9)
    np.testing.assert_allclose(prox.project_l1_ball(x, r), x, atol=1e-9)


@given(vectors, vectors, st.floats(0.01, 20.0))
def test_l1_ball_nonexpansive(a, b, r):
    n = min(a.size, b.size)
    a, b = a[:n], b[:n]
    pa, pb = prox.project_l1_ball(a, r), prox.project_l1_ball(b, r)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9


@given(vectors, st.floats(0.01, 10.0))
def test_moreau_decomposition_linf(z, t):
    np.testing.assert_allclose(prox.prox_linf(z, t) + prox.project_l1_ball(z, t), z, atol=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite),
       thresholds)
def test_group_shrink_row_norms(Z, t):
    out = prox.group_row_shrink(Z, t)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1),
                               np.maximum(np.linalg.norm(Z, axis=1) - t, 0), atol=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite),
       thresholds)
def test_nuclear_shrinks_singular_values(Z, t):
    s = np.linalg.svd(Z, compute_uv=False)
    got = np.linalg.svd(prox.prox_nuclear(Z, t), compute_uv=False)
    want = np.maximum(s - t, 0)
    np.testing.assert_allclose(np.sort(got)[::-1][:want.size], want, atol=1e-8 * (1 + s.max()))


@given(vectors, st.floats(-5, 5), st.floats(0, 5))
def test_box_projection(z, lo, width):
    hi = lo + width
    x = prox.project_box(z, lo, hi)
    assert np.all((x >= lo) & (x <= hi))
    inside = (z >= lo) & (z <= hi)
    np.testing.assert_array_equal(x[inside], z[inside])


@given(vectors)
def test_nonneg_projection(z):
    x = prox.project_nonneg(z)
    assert np.all(x >= 0)
    assert np.dot(x - z, x) == pytest.approx(0.0, abs=1e-9)


# --- prox terms ------------------------------------------------------------

def test_terms_values_and_feasibility():
    assert prox.l1_term(2.0).value_at(np.array([1.0, -2.0])) == 6.0
    assert prox.l1_ball_term(1.0).value_at(np.array([2.0, 0.0])) == np.inf
    assert prox.box_term(0.0, 1.0).value_at(np.array([0.5, 1.0])) == 0.0
    assert prox.nonneg_term().value_at(np.array([-1.0])) == np.inf
    assert prox.unit_rows_term().value_at(np.ones((2, 2)) * 0.5) == 0.0
    assert prox.psd_nuclear_term(1.0).value_at(np.diag([1.0, -1.0])) == np.inf
    assert prox.psd_nuclear_term(2.0).value_at(np.diag([1.0, 3.0])) == pytest.approx(8.0)


def test_term_prox_scales_threshold():
    term = prox.l1_term(0.5)
    np.testing.assert_allclose(term.prox_at(np.array([2.0]), 2.0), [1.0])
    assert term.separable and not prox.linf_term(1.0).separable
