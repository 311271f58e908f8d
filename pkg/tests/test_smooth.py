import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fbsplit import linops, smooth
from fbsplit.checks import gradient_error


def central_diff(f, x, h=1e-6):
    """Full finite-difference gradient of a real function of a real array."""
    g = np.zeros_like(x, dtype=float)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x, dtype=float)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_least_squares_value_and_gradient(rng):
    A = rng.standard_normal((5, 3))
    b = rng.standard_normal(5)
    term = smooth.least_squares(A, b)
    x = rng.standard_normal(3)
    assert term.value(x) == pytest.approx(0.5 * np.sum((A @ x - b) ** 2))
    np.testing.assert_allclose(term.gradient(x), central_diff(term.value, x), atol=1e-6)


def test_least_squares_mmv_acts_columnwise(rng):
    A = rng.standard_normal((4, 3))
    B = rng.standard_normal((4, 2))
    term = smooth.least_squares(A, B)
    X = rng.standard_normal((3, 2))
    np.testing.assert_allclose(term.gradient(X), A.T @ (A @ X - B))


def test_least_squares_shape_mismatch():
    with pytest.raises(ValueError):
        smooth.least_squares(np.ones((3, 2)), np.ones(4))


@given(arrays(np.float64, 8, elements=st.floats(-800, 800)))
def test_softplus_and_sigmoid_are_stable(z):
    sp = smooth.softplus(z)
    s = smooth.sigmoid(z)
    assert np.all(np.isfinite(sp)) and np.all((s >= 0) & (s <= 1))
    assert np.all(sp >= np.maximum(z, 0))


def test_softplus_reference_values():
    np.testing.assert_allclose(smooth.softplus([0.0, 1.0, -30.0]),
                               [np.log(2), np.log1p(np.e), np.exp(-30.0)], rtol=1e-12)


def test_logit_gradient_matches_differences(rng):
    A = rng.standard_normal((6, 4))
    b = rng.integers(0, 2, 6)
    term = smooth.logit_loss(A, b)
    x = rng.standard_normal(4)
    np.testing.assert_allclose(term.gradient(x), central_diff(term.value, x), atol=1e-6)


def test_logit_mask_ignores_unobserved(rng):
    b = rng.integers(0, 2, (3, 3)).astype(float)
    mask = np.eye(3, dtype=bool)
    term = smooth.logit_loss(None, b, mask)
    X = rng.standard_normal((3, 3))
    X2 = X + 100.0 * ~mask
    assert term.value(X) == pytest.approx(term.value(X2))


def test_logit_rejects_non_binary():
    with pytest.raises(ValueError):
        smooth.logit_loss(np.eye(2), [0.5, 1.0])


def test_masked_quadratic(rng):
    Y = rng.standard_normal((3, 4))
    mask = rng.random((3, 4)) < 0.5
    term = smooth.masked_quadratic(Y, mask)
    X = rng.standard_normal((3, 4))
    assert term.value(X) == pytest.approx(np.sum(mask * (X - Y) ** 2))
    np.testing.assert_allclose(term.gradient(X), central_diff(term.value, X), atol=1e-6)


def test_hermitian_part_rejects_asymmetric():
    with pytest.raises(smooth.HermitianError):
        smooth.hermitian_part(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(smooth.HermitianError):
        smooth.hermitian_part(np.ones(3))


def test_lift_map_rank_one(rng):
    a = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    X = np.outer(v, v.conj())
    np.testing.assert_allclose(smooth.lift_map(a).apply(X), np.abs(a.conj() @ v) ** 2)


def test_nmf_gradient(rng):
    Q = rng.random((4, 3))
    term = smooth.nmf_loss(Q, 2)
    Z = rng.random((7, 2))
    np.testing.assert_allclose(term.gradient(Z), central_diff(term.value, Z), atol=1e-5)
    with pytest.raises(ValueError):
        term.value(np.ones((6, 2)))


def test_maxnorm_gradient_non_symmetric_weights(rng):
    W = rng.standard_normal((5, 5))
    term = smooth.maxnorm_loss(W, 2)
    X = rng.standard_normal((5, 2))
    np.testing.assert_allclose(term.gradient(X), central_diff(term.value, X), atol=1e-5)


def test_tv_dual_recovers_primal_at_zero():
    y = np.arange(6.0).reshape(2, 3)
    term = smooth.tv_dual_loss(y, 2.0)
    assert term.value(np.zeros((2, 3, 2))) == pytest.approx(0.5 * np.sum((y / 2) ** 2))
    with pytest.raises(ValueError):
        smooth.tv_dual_loss(y, 0.0)


def test_tv_primal_objective_constant_image():
    assert smooth.tv_primal_objective(np.ones((3, 3)), np.ones((3, 3)), 1.0) == 0.0


def test_svm_dual_value(rng):
    D = rng.standard_normal((6, 2))
    lab = rng.choice([-1.0, 1.0], 6)
    term = smooth.svm_dual_loss(D, lab)
    x = rng.random(6)
    w = D.T @ (lab * x)
    assert term.value(x) == pytest.approx(0.5 * w @ w - x.sum())
    np.testing.assert_allclose(term.gradient(x), central_diff(term.value, x), atol=1e-6)
    with pytest.raises(ValueError):
        smooth.svm_dual_map(D, np.zeros(6))


@pytest.mark.parametrize("build", [
    lambda r: smooth.least_squares(linops.subsampled_dft_map([0, 3], 6),
                                   r.standard_normal(2) + 1j * r.standard_normal(2)),
    lambda r: smooth.phaselift_loss(r.standard_normal((5, 3)) + 1j * r.standard_normal((5, 3)),
                                    r.random(5)),
    lambda r: smooth.tv_dual_loss(r.random((4, 3)), 0.5),
])
def test_gradients_by_directional_differences(build, rng):
    assert gradient_error(build(rng), rng) < 1e-5
