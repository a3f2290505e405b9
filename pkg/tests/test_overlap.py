"""Unit tests for the overlap-divergence analytics and Monte Carlo oracles."""

import math

import numpy as np
import pytest
import scipy.special

from deconfscores import overlap
from deconfscores.dgp import DGPConfig, generate_coefficients
from deconfscores.errors import InvalidInput, InvalidLink
from deconfscores.scores import (gamma_from_w, normalize_and_align,
                                 sample_orthocomplement)

B_GRID = [k / 10 for k in range(11)]


def test_owens_t_examples():
    assert overlap.owens_t(1.3, 0.0) == 0.0
    assert overlap.owens_t(0.0, 1.0) == pytest.approx(1 / 8, abs=1e-12)
    assert overlap.owens_t(0.0, 1 / math.sqrt(3)) == pytest.approx(
        1 / 12, abs=1e-12)
    assert overlap.owens_t(0.7, -0.4) == pytest.approx(
        -overlap.owens_t(0.7, 0.4), abs=1e-14)


def test_owens_t_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h = rng.uniform(-3, 3)
        a = rng.uniform(-5, 5)
        assert overlap.owens_t(h, a) == pytest.approx(
            float(scipy.special.owens_t(h, a)), abs=1e-10)


def test_indicator_closed_form_values():
    assert overlap.overlap_divergence_indicator(0.0, 0.0) == pytest.approx(
        1.0, abs=1e-10)
    assert overlap.overlap_divergence_indicator(
        0.0, math.sqrt(0.5)) == pytest.approx(4 / 3, abs=1e-10)
    assert overlap.overlap_divergence_indicator(0.0, 1.0) == pytest.approx(
        2.0, abs=1e-10)


def test_relu_closed_form_values():
    assert overlap.overlap_divergence_relu(0.0) == pytest.approx(1.0,
                                                                 abs=1e-12)
    assert overlap.overlap_divergence_relu(1.0) == pytest.approx(math.pi,
                                                                 abs=1e-12)
    expected = math.sqrt(0.75) + math.pi / 4 + 0.5 * math.asin(0.5)
    assert overlap.overlap_divergence_relu(
        math.sqrt(0.5)) == pytest.approx(expected, abs=1e-10)
    assert expected == pytest.approx(1.9132234, abs=1e-6)


def test_exp_tilt_closed_form():
    assert overlap.overlap_divergence_exp_tilt(1.0, 0.5) == pytest.approx(
        math.exp(0.25), abs=1e-12)


@pytest.mark.parametrize("link,closed", [
    (overlap.LinkSpec.indicator(0.0),
     lambda b: overlap.overlap_divergence_indicator(0.0, b)),
    (overlap.LinkSpec.indicator(0.7),
     lambda b: overlap.overlap_divergence_indicator(0.7, b)),
    (overlap.LinkSpec.relu(), overlap.overlap_divergence_relu),
    (overlap.LinkSpec.exp_tilt(1.0),
     lambda b: overlap.overlap_divergence_exp_tilt(1.0, b)),
])
def test_quadrature_matches_closed_forms(link, closed):
    for b in B_GRID:
        quad = overlap.overlap_divergence_quadrature(b, link)
        assert quad == pytest.approx(closed(b), abs=1e-6)


def test_quadrature_at_zero_is_one():
    for link in (overlap.LinkSpec.logistic(), overlap.LinkSpec.relu(),
                 overlap.LinkSpec.exp_tilt(0.7),
                 overlap.LinkSpec.indicator(-0.3)):
        assert overlap.overlap_divergence_quadrature(
            0.0, link) == pytest.approx(1.0, abs=1e-9)


def test_a6_logistic_at_zero_is_one():
    pi1 = overlap.link_mean(overlap.LinkSpec.logistic())
    link = overlap.LinkSpec.logistic(overlap.Assumption.A6_PROPENSITY)
    assert overlap.overlap_divergence_quadrature(
        0.0, link, pi1=pi1) == pytest.approx(1.0, abs=1e-8)


def test_symmetry_in_b():
    for link in (overlap.LinkSpec.relu(), overlap.LinkSpec.exp_tilt(1.0),
                 overlap.LinkSpec.indicator(0.2)):
        for b in (0.3, 0.8):
            assert overlap.overlap_divergence_quadrature(b, link) == \
                overlap.overlap_divergence_quadrature(-b, link)


def test_monotonic_in_b_all_links():
    pi1 = overlap.link_mean(overlap.LinkSpec.logistic())
    cases = [
        (overlap.LinkSpec.logistic(overlap.Assumption.A6_PROPENSITY), pi1),
        (overlap.LinkSpec.exp_tilt(1.0), None),
        (overlap.LinkSpec.indicator(0.0), None),
        (overlap.LinkSpec.relu(), None),
    ]
    for link, lp in cases:
        vals = [overlap.overlap_divergence_quadrature(b, link, pi1=lp)
                for b in B_GRID]
        assert np.all(np.diff(vals) > 1e-9)


def test_a6_requires_logistic():
    with pytest.raises(InvalidLink):
        overlap.LinkSpec(overlap.LinkKind.RELU,
                         overlap.Assumption.A6_PROPENSITY)


def _family_75(seed=0, p=5):
    coeffs = generate_coefficients(p, range(p), 0.75, seed)
    return normalize_and_align(coeffs.alpha, coeffs.beta)


def test_bias_oracle_zero_on_family_members():
    fam = _family_75()
    ortho = sample_orthocomplement(fam, 1)
    mc = overlap.McConfig(samples=200_000, seed=0)
    for w in (-1.0, 0.0, 1.0):
        sc = gamma_from_w(fam, ortho, w)
        val, se = overlap.confounding_bias_oracle(
            fam.alpha, fam.beta, sc.gamma, overlap.LinkSpec.identity(),
            overlap.LinkSpec.logistic(), mc)
        assert abs(val) < 4 * se


def test_bias_oracle_constant_m_is_zero():
    fam = _family_75()
    u1 = fam.alpha + fam.beta
    u1 /= np.linalg.norm(u1)
    val, se = overlap.confounding_bias_oracle(
        fam.alpha, fam.beta, u1, overlap.LinkSpec.exp_tilt(0.0),
        overlap.LinkSpec.logistic(), overlap.McConfig(samples=100_000,
                                                      seed=0))
    assert abs(val) < 4 * se


def test_bias_oracle_detects_non_member():
    fam = _family_75()
    u1 = fam.alpha + fam.beta
    u1 /= np.linalg.norm(u1)
    val, se = overlap.confounding_bias_oracle(
        fam.alpha, fam.beta, u1, overlap.LinkSpec.identity(),
        overlap.LinkSpec.logistic(), overlap.McConfig(samples=1_000_000,
                                                      seed=0))
    assert abs(val) > 6 * se


def test_divergence_gap_identity_exp_tilt():
    fam = _family_75()
    ortho = sample_orthocomplement(fam, 2)
    mc = overlap.McConfig(samples=200_000, seed=0)
    link = overlap.LinkSpec.exp_tilt(1.0)
    for b, expected_lhs in ((0.0, math.e - 1),
                            (0.5, math.e - math.exp(0.25)),
                            (1.0, 0.0)):
        gamma = b * fam.beta + math.sqrt(1 - b * b) * ortho
        lhs, rhs, se = overlap.divergence_gap_check(fam.beta, gamma, link, mc=mc)
        assert lhs == pytest.approx(expected_lhs, abs=1e-8)
        assert abs(lhs - rhs) < 4 * se + 1e-12
        assert lhs > -1e-9


def test_bias_bounded_by_divergence_gap():
    # |bias| <= sqrt(E[Var(m0 | phi)]) * sqrt(divergence gap) for the
    # identity outcome link, where E[Var(m0 | phi)] = 1 - (alpha.gamma)^2
    fam = _family_75()
    ortho = sample_orthocomplement(fam, 3)
    mc = overlap.McConfig(samples=200_000, seed=1)
    link = overlap.LinkSpec.exp_tilt(1.0)
    for w in (-0.5, 0.0, 0.5):
        sc = gamma_from_w(fam, ortho, w)
        val, se = overlap.confounding_bias_oracle(
            fam.alpha, fam.beta, sc.gamma, overlap.LinkSpec.identity(),
            link, mc)
        lhs, _, _ = overlap.divergence_gap_check(fam.beta, sc.gamma, link, mc=mc)
        ra = fam.alpha @ sc.gamma
        bound = math.sqrt(max(1 - ra * ra, 0.0)) * math.sqrt(max(lhs, 0.0))
        assert abs(val) <= bound + 4 * se + 1e-9


def test_efficiency_bound_randomized():
    val, se = overlap.efficiency_bound_gaussian(
        DGPConfig(s_T=0.0, s_Y=0.0), None,
        overlap.McConfig(samples=100_000, seed=0))
    assert abs(val - 4.0) < 4 * se + 1e-9
    # representation-free under randomization
    coeffs = generate_coefficients(DGPConfig().p, range(20), 0.75, 0)
    val_g, se_g = overlap.efficiency_bound_gaussian(
        DGPConfig(s_T=0.0, s_Y=0.0), coeffs.alpha,
        overlap.McConfig(samples=100_000, seed=0))
    assert abs(val_g - val) < 4 * (se + se_g) + 1e-9


def test_efficiency_bound_divergence_lower_bound():
    # V_eff >= O(phi) / (1 - pi1) for the propensity-based divergence
    from scipy.special import expit
    gh_x, gh_w = overlap._gh_nodes(128)
    for s_T in (1.0, 4.0):
        cfg = DGPConfig(s_T=s_T, s_Y=1.0)
        coeffs = generate_coefficients(cfg.p, cfg.support, cfg.K, cfg.seed)
        fam = normalize_and_align(coeffs.alpha, coeffs.beta)
        ortho = sample_orthocomplement(fam, 1)
        pi1 = float(gh_w @ expit(s_T * gh_x))
        link = overlap.LinkSpec.logistic(overlap.Assumption.A6_PROPENSITY,
                                         scale=s_T)
        mc = overlap.McConfig(samples=100_000, seed=0)
        for w in (-1.0, 0.0, 1.0):
            sc = gamma_from_w(fam, ortho, w)
            v, se = overlap.efficiency_bound_gaussian(cfg, sc.gamma, mc)
            b = abs(fam.beta @ sc.gamma)
            o = overlap.overlap_divergence_quadrature(b, link, pi1=pi1)
            assert v >= o / (1 - pi1) - 4 * se


def test_empirical_divergence_identical_samples():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(100_000)
    val = overlap.overlap_divergence_empirical(z, z)
    assert 0.95 <= val <= 1.05


def test_empirical_divergence_disjoint_samples():
    val = overlap.overlap_divergence_empirical(
        np.linspace(0, 1, 100), np.linspace(10, 11, 100))
    assert val == np.inf


def test_empirical_divergence_exp_tilt_design():
    # control: phi ~ N(0,1); treated tilted by exp(s z) with s=1, i.e.
    # phi ~ N(1,1); the squared-ratio mean is e
    rng = np.random.default_rng(1)
    ctrl = rng.standard_normal(1_000_000)
    trt = rng.standard_normal(1_000_000) + 1.0
    val = overlap.overlap_divergence_empirical(ctrl, trt, bins=50)
    assert val == pytest.approx(math.e, rel=0.1)


def test_empirical_divergence_empty_rejected():
    with pytest.raises(InvalidInput):
        overlap.overlap_divergence_empirical(np.array([]), np.ones(3))


def test_mc_config_validation():
    with pytest.raises(InvalidInput):
        overlap.McConfig(samples=10)
    with pytest.raises(InvalidInput):
        overlap.QuadratureConfig(outer_nodes=4)
