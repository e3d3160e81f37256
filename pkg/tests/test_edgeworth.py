"""Coefficient formulas, the corrected CDF/PDF pair, and quantile inversion."""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from spikedge import (
    EdgeworthCoefficients,
    SpikeContext,
    centering_rho,
    coefficients,
    coefficients_single_spike,
    cornish_fisher_quantile,
    correction_poly_p1,
    cross_spike_A,
    edgeworth_cdf,
    edgeworth_pdf,
    kappa2,
    kappa3,
    monotonicity_defect,
    mu_g,
    population_moments,
    r_statistic,
    sigma_sq,
    tilde_kappa2,
    tilde_kappa3,
    tilde_sigma_sq,
)

GAUSS = population_moments("gaussian")
GA12 = population_moments("std_ga12")
CHI1 = population_moments("std_chi1")
UNIFORM = population_moments("uniform_sqrt3")


def ctx_single(l=4.0, gamma=0.1, n=200):
    return SpikeContext(l_k=l, all_spikes=(l,), k=0, gamma_n=gamma, n=n)


def flat_coeffs(**overrides):
    """A bundle whose correction vanishes unless overridden."""
    base = dict(rho=4.0, sigma_sq=30.0, tilde_sigma_sq=30.0,
                kappa2=1.0, kappa3=0.0, mu=0.0, a_cross=0.0)
    base.update(overrides)
    return EdgeworthCoefficients(**base)


def test_centering_rho_values():
    assert centering_rho(4.0, 0.1) == pytest.approx(4.0 + 0.4 / 3.0, rel=1e-15)
    assert centering_rho(7.0, 0.0) == 7.0
    assert centering_rho(2.0, 1.0) == pytest.approx(4.0, rel=1e-15)
    with pytest.raises(ValueError):
        centering_rho(1.0, 0.1)


def test_sigma_sq_values():
    assert sigma_sq(4.0, 0.1) == pytest.approx(32.0 * (1.0 - 0.1 / 9.0), rel=1e-14)
    assert sigma_sq(3.0, 0.0) == 18.0
    # Exactly critical: gamma = (l-1)^2 = 0.25 makes the variance vanish.
    assert sigma_sq(1.5, 0.25) == 0.0


def test_tilde_sigma_sq_reduces_to_sigma_sq_without_kurtosis():
    assert tilde_sigma_sq(4.0, 0.1, 0.0) == pytest.approx(sigma_sq(4.0, 0.1), rel=1e-15)


def test_tilde_sigma_sq_hand_value():
    # sigma^2 + pi sigma^4 / (4 l^2) at l=4, gamma=0.1, pi=6.
    s2 = 32.0 * (1.0 - 0.1 / 9.0)
    want = s2 + 6.0 * s2 * s2 / 64.0
    assert tilde_sigma_sq(4.0, 0.1, 6.0) == pytest.approx(want, rel=1e-14)
    assert tilde_sigma_sq(4.0, 0.1, 6.0) == pytest.approx(125.52296296296296, rel=1e-13)


def test_tilde_sigma_sq_rejects_subcritical_spike():
    with pytest.raises(ValueError):
        tilde_sigma_sq(1.2, 0.9, 0.0)


def test_tilde_kappa2_values():
    assert tilde_kappa2(0.0, 1.0) == 2.0
    assert tilde_kappa2(6.0, 1.0) == 8.0
    assert tilde_kappa2(-1.2, 1.0) == pytest.approx(0.8, rel=1e-15)
    assert tilde_kappa2(6.0, 0.5) == 5.0


def test_tilde_kappa3_values():
    assert tilde_kappa3(GAUSS, 1.0, 1.0, 1.0) == 8.0
    assert tilde_kappa3(GA12, 1.0, 1.0, 1.0) == 240.0
    assert tilde_kappa3(CHI1, 1.0, 1.0, 1.0) == 712.0
    assert tilde_kappa3(UNIFORM, 1.0, 1.0, 1.0) == pytest.approx(16.0 / 35.0, rel=1e-14)
    # s3sq != s6 activates the skewness-square term.
    got = tilde_kappa3(GA12, 0.5, 0.25, 0.5)
    want = (265.0 - 90.0 - 15.0) * 0.25 + 12.0 * 6.0 * 0.5 + 10.0 * 4.0 * 0.25 + 8.0
    assert got == pytest.approx(want, rel=1e-14)


def test_kappa2_hand_value():
    # 2 (3/4)^2 / 8.9 at l=4, gamma=0.1.
    assert kappa2(ctx_single(), 2.0) == pytest.approx(0.12640449438202248, rel=1e-14)
    assert kappa2(ctx_single(), 0.0) == 0.0


def test_kappa3_hand_value():
    # 8 (3/4)^3 (27 + 0.1) / 8.9^3 at l=4, gamma=0.1.
    assert kappa3(ctx_single(), 8.0) == pytest.approx(0.12973974742151784, rel=1e-14)


def test_mu_g_values():
    assert mu_g(4.0, 0.1, 0.0) == pytest.approx(0.9 / (79.21 * 3.0), rel=1e-13)
    assert mu_g(4.0, 0.1, 6.0) == pytest.approx(-0.003318841352227895, rel=1e-13)
    assert mu_g(4.0, 0.0, 6.0) == 0.0
    with pytest.raises(ValueError):
        mu_g(1.0 + np.sqrt(0.1), 0.1, 0.0)  # on the singular locus


def test_cross_spike_A_two_spike_values():
    ctx0 = SpikeContext(l_k=6.0, all_spikes=(6.0, 4.0), k=0, gamma_n=0.2, n=100)
    ctx1 = SpikeContext(l_k=4.0, all_spikes=(6.0, 4.0), k=1, gamma_n=0.2, n=100)
    assert cross_spike_A(ctx0) == pytest.approx((5.0 / 24.8) * 1.5, rel=1e-14)
    assert cross_spike_A(ctx1) == pytest.approx((3.0 / 8.8) * (-2.5), rel=1e-14)


def test_cross_spike_A_single_spike_is_zero():
    assert cross_spike_A(ctx_single()) == 0.0


def test_cross_spike_A_rejects_coincident_spikes():
    ctx = SpikeContext(l_k=4.0, all_spikes=(4.0, 4.0), k=0, gamma_n=0.2, n=100)
    with pytest.raises(ValueError):
        cross_spike_A(ctx)


def test_spike_context_validations():
    with pytest.raises(ValueError):
        SpikeContext(l_k=0.9, all_spikes=(0.9,), k=0, gamma_n=0.1, n=100)
    with pytest.raises(ValueError):
        SpikeContext(l_k=4.0, all_spikes=(5.0,), k=0, gamma_n=0.1, n=100)
    with pytest.raises(IndexError):
        SpikeContext(l_k=4.0, all_spikes=(4.0,), k=1, gamma_n=0.1, n=100)
    with pytest.raises(ValueError):
        SpikeContext(l_k=4.0, all_spikes=(4.0,), k=0, gamma_n=9.0, n=100)


def test_coefficients_single_and_multi_routes_agree_at_r_equal_one():
    for moments in (GAUSS, GA12, CHI1):
        for l, g in [(4.0, 0.1), (2.5, 0.3), (8.0, 0.2)]:
            a = coefficients(SpikeContext(l_k=l, all_spikes=(l,), k=0, gamma_n=g, n=150), moments)
            b = coefficients_single_spike(l, g, moments)
            assert a == b


def test_coefficients_assembles_all_pieces():
    ctx = SpikeContext(l_k=6.0, all_spikes=(6.0, 4.0), k=0, gamma_n=0.2, n=100)
    c = coefficients(ctx, GA12)
    assert c.rho == pytest.approx(centering_rho(6.0, 0.2), rel=1e-15)
    assert c.sigma_sq == pytest.approx(sigma_sq(6.0, 0.2), rel=1e-15)
    assert c.tilde_sigma_sq == pytest.approx(tilde_sigma_sq(6.0, 0.2, 6.0), rel=1e-15)
    assert c.kappa2 == pytest.approx(kappa2(ctx, tilde_kappa2(6.0, 1.0)), rel=1e-15)
    assert c.kappa3 == pytest.approx(kappa3(ctx, tilde_kappa3(GA12, 1.0, 1.0, 1.0)), rel=1e-15)
    assert c.mu == pytest.approx(mu_g(6.0, 0.2, 6.0), rel=1e-15)
    assert c.a_cross == pytest.approx(cross_spike_A(ctx), rel=1e-15)


def test_correction_poly_hand_value_and_symmetry():
    c = coefficients(ctx_single(), GAUSS)
    assert correction_poly_p1(0.0, c) == pytest.approx(0.4704945607943595, rel=1e-12)
    # Even polynomial: only x^2 enters.
    assert correction_poly_p1(1.3, c) == pytest.approx(correction_poly_p1(-1.3, c), rel=1e-14)


def test_correction_poly_rejects_nonpositive_kappa2():
    with pytest.raises(ValueError):
        correction_poly_p1(0.0, flat_coeffs(kappa2=0.0))


@given(
    scale=st.floats(0.2, 5.0),
    x=st.floats(-4.0, 4.0),
)
def test_correction_poly_depends_on_cumulants_through_two_ratios(scale, x):
    # With mu + A = 0, scaling kappa3 by t and kappa2 by t^(2/3) fixes
    # kappa2^{-3/2} kappa3 and so fixes p1.
    base = flat_coeffs(kappa2=0.7, kappa3=1.1)
    scaled = flat_coeffs(kappa2=0.7 * scale ** (2.0 / 3.0), kappa3=1.1 * scale)
    assert correction_poly_p1(x, scaled) == pytest.approx(
        correction_poly_p1(x, base), rel=1e-9, abs=1e-12
    )


def test_edgeworth_cdf_reduces_to_normal_when_correction_vanishes():
    x = np.linspace(-4.0, 4.0, 33)
    assert np.abs(edgeworth_cdf(x, flat_coeffs(), 200) - stats.norm.cdf(x)).max() < 1e-15
    assert np.abs(edgeworth_pdf(x, flat_coeffs(), 200) - stats.norm.pdf(x)).max() < 1e-15


def test_edgeworth_cdf_equals_normal_plus_correction_identically():
    c = coefficients(ctx_single(), GA12)
    x = np.linspace(-6.0, 6.0, 97)
    want = stats.norm.cdf(x) + correction_poly_p1(x, c) * stats.norm.pdf(x) / np.sqrt(200)
    got = edgeworth_cdf(x, c, 200)
    inside = (want >= 0.0) & (want <= 1.0)
    assert np.abs(got[inside] - want[inside]).max() < 1e-14


@given(x=st.floats(-37.0, 37.0, allow_nan=False))
@settings(max_examples=200)
def test_edgeworth_cdf_stays_in_unit_interval(x):
    c = coefficients(ctx_single(l=2.2, gamma=0.3, n=50), CHI1)
    v = edgeworth_cdf(x, c, 50)
    assert 0.0 <= v <= 1.0


def test_edgeworth_cdf_limits():
    c = coefficients(ctx_single(), GA12)
    assert edgeworth_cdf(-40.0, c, 200) == 0.0
    assert edgeworth_cdf(40.0, c, 200) == 1.0


def test_edgeworth_pdf_integrates_to_one():
    for moments, l, g, n in [(GAUSS, 4.0, 0.1, 200), (GA12, 4.0, 0.1, 100), (CHI1, 2.5, 0.3, 100)]:
        c = coefficients_single_spike(l, g, moments)
        total, err = integrate.quad(lambda t: edgeworth_pdf(t, c, n), -10.0, 10.0)
        assert abs(total - 1.0) < 1e-6


def test_edgeworth_pdf_is_the_cdf_derivative():
    # Range chosen inside the unclamped stretch of the corrected CDF.
    c = coefficients(ctx_single(), GAUSS)
    x = np.linspace(-2.5, 3.5, 41)
    h = 1e-6
    numeric = (np.asarray(edgeworth_cdf(x + h, c, 200)) - np.asarray(edgeworth_cdf(x - h, c, 200))) / (2 * h)
    assert np.abs(numeric - edgeworth_pdf(x, c, 200)).max() < 1e-6


def test_cdf_monotone_for_every_density_study_configuration():
    from spikedge import ExperimentSpec, Identity, build_model, oracle_coefficients

    for setting in range(1, 10):
        for tag in sorted({"gaussian", "uniform_sqrt3", "std_chi1", "std_ga12"}):
            spec = ExperimentSpec(kind="Density", dist=tag, n=200, p=20,
                                  reps=1, seed=0, setting=setting)
            model = build_model(spec.spikes, spec.bulk_dim, spec.rotation,
                                np.random.default_rng(7))
            for c in oracle_coefficients(spec, model):
                assert monotonicity_defect(c, spec.n) == 0.0


def test_monotonicity_defect_detects_a_decreasing_stretch():
    # Large kappa3 at tiny n forces the correction to overwhelm the base CDF.
    bad = flat_coeffs(kappa2=0.05, kappa3=5.0)
    assert monotonicity_defect(bad, 1) > 0.0


def test_cornish_fisher_reduces_to_normal_quantile():
    for a in (0.05, 0.5, 0.95):
        assert cornish_fisher_quantile(a, flat_coeffs(), 200) == pytest.approx(
            stats.norm.ppf(a), abs=1e-14
        )


def test_cornish_fisher_median_shift_is_minus_p1_at_zero():
    c = coefficients(ctx_single(), GA12)
    want = -correction_poly_p1(0.0, c) / np.sqrt(200)
    assert cornish_fisher_quantile(0.5, c, 200) == pytest.approx(want, rel=1e-14)


def test_cornish_fisher_approximately_inverts_the_cdf():
    # One-term inversion leaves an O(1/n) residual.
    c = coefficients(ctx_single(), GA12)
    n = 400
    for a in (0.05, 0.25, 0.5, 0.75, 0.95):
        e = cornish_fisher_quantile(a, c, n)
        assert abs(edgeworth_cdf(e, c, n) - a) < 6.0 / n


def test_cornish_fisher_rejects_degenerate_levels():
    c = flat_coeffs()
    for a in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            cornish_fisher_quantile(a, c, 100)


def test_r_statistic_centers_and_scales():
    c = coefficients(ctx_single(), GAUSS)
    assert r_statistic(c.rho, c, 200) == 0.0
    shifted = c.rho + np.sqrt(c.tilde_sigma_sq) / np.sqrt(200)
    assert r_statistic(shifted, c, 200) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        r_statistic(4.0, flat_coeffs(tilde_sigma_sq=0.0), 200)


@given(
    l=st.floats(1.5, 20.0),
    g=st.floats(0.01, 0.45),
)
@settings(max_examples=150)
def test_rho_is_increasing_past_criticality(l, g):
    # Supercritical region only: rho is monotone there, so quantile roots are unique.
    if (l - 1.0) ** 2 <= g + 1e-6:
        return
    eps = 1e-5
    assert centering_rho(l + eps, g) > centering_rho(l, g)
