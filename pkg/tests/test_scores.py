"""Unit tests for the closed-form score family."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deconfscores import scores
from deconfscores.dgp import generate_coefficients
from deconfscores.errors import DegenerateFamily, InvalidInput, NullSpaceEmpty

W_GRID = [round(k / 10, 1) for k in range(-10, 11)]


def _family(c, p=10, seed=0):
    coeffs = generate_coefficients(p, range(p), c, seed)
    return scores.normalize_and_align(coeffs.alpha, coeffs.beta)


def test_normalize_orthogonal_case():
    fam = scores.normalize_and_align([2.0, 0.0], [0.0, -3.0])
    np.testing.assert_allclose(fam.alpha, [1.0, 0.0])
    np.testing.assert_allclose(fam.beta, [0.0, -1.0])
    assert fam.c == pytest.approx(0.0, abs=1e-15)
    assert fam.degenerate == scores.Degeneracy.OK


def test_normalize_sign_flip_then_collinear():
    fam = scores.normalize_and_align([1.0, 0.0], [-1.0, 0.0])
    np.testing.assert_allclose(fam.beta, [1.0, 0.0])
    assert fam.c == pytest.approx(1.0)
    assert fam.degenerate == scores.Degeneracy.NEAR_COLLINEAR


def test_normalize_near_zero_flag():
    fam = scores.normalize_and_align([1.0, 0.0], [1e-12, 0.0],
                                     zero_threshold=1e-10)
    assert fam.degenerate == scores.Degeneracy.NEAR_ZERO_COEFFICIENTS


def test_orthocomplement_three_dims():
    fam = scores.normalize_and_align([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    n = scores.sample_orthocomplement(fam, 0)
    assert abs(abs(n[2]) - 1.0) < 1e-12
    assert abs(n[0]) < 1e-12 and abs(n[1]) < 1e-12


def test_orthocomplement_orthogonality_and_determinism():
    fam = _family(0.6, p=30)
    n1 = scores.sample_orthocomplement(fam, 5)
    n2 = scores.sample_orthocomplement(fam, 5)
    np.testing.assert_array_equal(n1, n2)
    assert abs(n1 @ fam.alpha) < 1e-10
    assert abs(n1 @ fam.beta) < 1e-10
    assert np.linalg.norm(n1) == pytest.approx(1.0, abs=1e-12)


def test_orthocomplement_sphere_uniformity():
    fam = _family(0.75, p=1000)
    draws = np.array([scores.sample_orthocomplement(fam, s)
                      for s in range(10_000)])
    assert np.max(np.abs(draws.mean(axis=0))) < 4 / np.sqrt(10_000)


def test_orthocomplement_null_space_empty():
    fam = scores.normalize_and_align([1.0, 0.0], [0.0, 1.0])
    with pytest.raises(NullSpaceEmpty):
        scores.sample_orthocomplement(fam, 0)


@pytest.mark.parametrize("c", [0.0, 0.25, 0.5, 0.75, 0.95])
def test_hyperbola_exactness_over_grid(c):
    fam = _family(c)
    ortho = scores.sample_orthocomplement(fam, 1)
    for w in W_GRID:
        sc = scores.gamma_from_w(fam, ortho, w)
        assert abs(np.linalg.norm(sc.gamma) - 1.0) < 1e-12
        assert abs(scores.hyperbola_residual(sc.gamma, fam.alpha,
                                             fam.beta)) < 1e-12
        # the (w1, w2) pair sits on the defining hyperbola
        assert abs((1 + fam.c) * sc.w1 ** 2
                   - (1 - fam.c) * sc.w2 ** 2 - 2 * fam.c) < 1e-12


@pytest.mark.parametrize("c", [0.0, 0.25, 0.5, 0.75, 0.95])
def test_endpoints_exact(c):
    fam = _family(c)
    ortho = scores.sample_orthocomplement(fam, 1)
    hi = scores.gamma_from_w(fam, ortho, 1.0)
    lo = scores.gamma_from_w(fam, ortho, -1.0)
    np.testing.assert_allclose(hi.gamma, fam.beta, atol=1e-12)
    np.testing.assert_allclose(lo.gamma, fam.alpha, atol=1e-12)


def test_equiangular_at_zero():
    fam = _family(0.75)
    ortho = scores.sample_orthocomplement(fam, 1)
    sc = scores.gamma_from_w(fam, ortho, 0.0)
    a = fam.alpha @ sc.gamma
    b = fam.beta @ sc.gamma
    assert abs(a - b) < 1e-12
    assert a == pytest.approx(np.sqrt(0.75), abs=1e-12)


def test_coordinate_map_lipschitz():
    for c in (0.0, 0.5, 0.99):
        fam = _family(c)
        ortho = scores.sample_orthocomplement(fam, 1)
        gammas = np.array([scores.gamma_from_w(fam, ortho, w).gamma
                           for w in W_GRID])
        steps = np.linalg.norm(np.diff(gammas, axis=0), axis=1)
        assert np.max(steps) / 0.1 < 10.0


def test_hyperbola_residual_examples():
    fam = _family(0.75)
    assert scores.hyperbola_residual(fam.alpha, fam.alpha,
                                     fam.beta) == pytest.approx(0.0,
                                                                abs=1e-12)
    u1 = fam.alpha + fam.beta
    u1 /= np.linalg.norm(u1)
    res = scores.hyperbola_residual(u1, fam.alpha, fam.beta)
    assert res == pytest.approx(0.125, abs=1e-12)


def test_gamma_from_w_degenerate_raises():
    fam = scores.normalize_and_align([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(DegenerateFamily):
        scores.gamma_from_w(fam, None, 0.5)


def test_gamma_collapses_to_alpha_when_collinear():
    fam = scores.normalize_and_align([1.0, 0.0, 0.0], [1.0, 1e-14, 0.0])
    assert fam.degenerate == scores.Degeneracy.NEAR_COLLINEAR
    sc = scores.gamma_from_w(fam, None, 0.3)
    np.testing.assert_allclose(sc.gamma, fam.alpha)


def test_project_score():
    np.testing.assert_allclose(
        scores.project_score([0.6, 0.8], [[1.0, 2.0]]), [2.2])
    X = np.arange(12.0).reshape(4, 3)
    np.testing.assert_allclose(scores.project_score([1.0, 0.0, 0.0], X),
                               X[:, 0])
    with pytest.raises(InvalidInput):
        scores.project_score([1.0, 0.0], X)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(-1.0, 1.0), st.integers(0, 50))
def test_gamma_invariants_random(c, w, seed):
    fam = _family(c, seed=seed)
    ortho = scores.sample_orthocomplement(fam, seed + 1)
    sc = scores.gamma_from_w(fam, ortho, w)
    assert abs(np.linalg.norm(sc.gamma) - 1.0) < 1e-12
    assert abs(scores.hyperbola_residual(sc.gamma, fam.alpha,
                                         fam.beta)) < 1e-12
    assert abs(sc.ortho @ fam.alpha) < 1e-10
    assert abs(sc.ortho @ fam.beta) < 1e-10
