"""Normal-form machinery: mollifier case table, S1, drift, variance."""

import numpy as np
import pytest

from randtwist import (
    DiffusionPrediction,
    E1_series,
    E2_field,
    E3_series,
    GeneratingFunction,
    MapFamily,
    TrigPoly,
    apply_generator,
    averaged_potential,
    bump,
    default_gamma,
    drift_b,
    gamma_max,
    ir_drift_variance,
    mollifier,
    resonance_set,
    resonant_harmonics,
    solve_homological,
    variance_sigma2,
)

COS = TrigPoly.cosine(1)
SIN = TrigPoly.sine(1)
NCOS = TrigPoly.cosine(1, -1.0)
THETA_256 = np.arange(256) / 256.0
OFF_RESONANCE_R = [0.17, 0.305, 0.44, 0.619, 0.83]


def fam_of(vm, vp, **kw):
    return MapFamily(epsilon=0.01, u=(vm, vp), v=(vm, vp), **kw)


# ----------------------------------------------------------------------
# bump and mollifier
# ----------------------------------------------------------------------

def test_bump_plateaus_and_midpoint():
    assert bump(0.0) == 1.0
    assert bump(1.0) == 1.0
    assert bump(2.0) == 0.0
    assert bump(3.0) == 0.0
    # quotient construction is symmetric about x = 1.5
    assert bump(1.5) == pytest.approx(0.5, abs=1e-14)


def test_bump_monotone_on_transition_band():
    xs = np.linspace(1.0, 2.0, 101)
    assert np.all(np.diff(bump(xs)) <= 1e-15)


def test_mollifier_one_on_resonance():
    assert mollifier(2, 0.5, 0.02, pq=(1, 2), d=2) == 1.0


def test_mollifier_zero_for_nonresonant_harmonic():
    # k = 1 is not a multiple of q = 2, so it stays off near 1/2
    assert mollifier(1, 0.5 + 0.003, 0.02, pq=(1, 2), d=2) == 0.0


def test_mollifier_zero_beyond_three_gamma():
    assert mollifier(2, 0.5 + 5 * 0.02, 0.02, pq=(1, 2), d=2) == 0.0


def test_mollifier_even_in_k_and_periodic_in_r():
    assert mollifier(-2, 0.513, 0.02) == mollifier(2, 0.513, 0.02)
    assert mollifier(1, 1.2, 0.05) == pytest.approx(
        mollifier(1, 0.2, 0.05), abs=1e-13
    )


def test_mollifier_rejects_bad_arguments():
    with pytest.raises(ValueError):
        mollifier(0, 0.3, 0.05)
    with pytest.raises(ValueError):
        mollifier(1, 0.3, -0.01)
    # case-table assertion refuses gamma above the validated cap
    with pytest.raises(ValueError, match="validated range"):
        mollifier(1, 0.3, 0.2, pq=(0, 1), d=1)


def test_gamma_caps():
    assert gamma_max(1) == 0.15
    assert gamma_max(2) == pytest.approx(1.0 / ((np.pi + 3.0) * 4.0))
    assert default_gamma(1) == 0.05
    assert default_gamma(2) == 0.025
    # for large degree the case-table cap binds before 0.05/d does
    assert default_gamma(8) == pytest.approx(0.8 * gamma_max(8))
    with pytest.raises(ValueError):
        default_gamma(0)


def test_resonance_bookkeeping():
    assert resonance_set(2) == [(0, 1), (1, 1), (1, 2)]
    assert resonant_harmonics(1, 2, 4) == [-4, -2, 2, 4]
    with pytest.raises(ValueError):
        resonant_harmonics(2, 4, 4)


# ----------------------------------------------------------------------
# generating function
# ----------------------------------------------------------------------

def test_s1_coefficient_matches_closed_form():
    # Ev = cos 2 pi theta, so Ev^1 = 1/2; off resonance the mollifier is 0
    fam = fam_of(COS, COS)
    S1 = solve_homological(fam, 0.05)
    hand = 1j * 0.5 / (2 * np.pi * (1 - np.exp(2j * np.pi * 0.3)))
    assert S1.coeff(1, 0.3) == hand


def test_s1_structural_zeros_and_hermitian():
    S1 = solve_homological(fam_of(SIN, COS), 0.05)
    assert S1.coeff(0, 0.37) == 0
    assert S1.coeff(2, 0.37) == 0  # beyond the family degree
    assert np.conj(S1.coeff(1, 0.37)) == S1.coeff(-1, 0.37)


def test_s1_finite_and_zero_at_resonance():
    # at r = 0 the denominator vanishes but the mollifier has already
    # killed the numerator, so the coefficient is exactly zero
    S1 = solve_homological(fam_of(SIN, COS), 0.05)
    assert S1.coeff(1, 0.0) == 0


def test_s1_zero_for_zero_average():
    fam = fam_of(NCOS, COS)  # Ev = 0
    S1 = solve_homological(fam, 0.05)
    assert S1.coeff(1, 0.31) == 0
    assert np.max(np.abs(S1.eval(THETA_256, 0.31))) == 0.0


def test_solve_homological_requires_zero_mean():
    shifted = TrigPoly.hermitian({0: 0.25, 1: 0.25})
    with pytest.raises(ValueError, match="zero-average"):
        solve_homological(fam_of(SIN, shifted), 0.05)


def test_local_window_guard():
    fam = fam_of(SIN, COS)
    gf = solve_homological(fam, 0.05, pq=(1, 2))
    assert gf.window == 0.5  # 0.5 / d^2 with d = 1
    gf.coeff(1, 0.52)  # inside: fine
    with pytest.raises(ValueError, match="local window"):
        gf.coeff(1, 1.12)
    with pytest.raises(ValueError, match="not reduced"):
        GeneratingFunction(fam=fam, gamma=0.05, pq=(2, 4))


# ----------------------------------------------------------------------
# cohomological identity
# ----------------------------------------------------------------------

def test_residual_vanishes_off_resonance(cos_sin_family):
    S1 = solve_homological(cos_sin_family, 0.05)
    for r in OFF_RESONANCE_R:
        raw = S1.residual(THETA_256, r, compensated=False)
        assert np.max(np.abs(raw)) < 1e-11


def test_residual_equals_averaged_potential_in_collar(cos_sin_family):
    # inside the collar the correction switches off and the identity
    # leaves exactly the resonant average behind
    S1 = solve_homological(cos_sin_family, 0.05)
    r = 0.025  # gamma / 2 from the 0/1 resonance
    raw = S1.residual(THETA_256, r, compensated=False)
    avg = averaged_potential(cos_sin_family, 0, 1)
    assert np.max(np.abs(raw - avg(THETA_256, r))) < 1e-11
    assert np.max(np.abs(S1.residual(THETA_256, r))) < 1e-11


def test_spec_cosine_example_residual():
    fam = fam_of(COS, COS)
    S1 = solve_homological(fam, 0.05)
    res = S1.residual(THETA_256, 0.3)
    assert np.max(np.abs(res)) < 1e-12


# ----------------------------------------------------------------------
# averaged potential
# ----------------------------------------------------------------------

def test_averaged_potential_keeps_resonant_harmonics():
    vp = TrigPoly.hermitian({1: 0.15, 2: 0.125})
    vm = TrigPoly.hermitian({1: 0.05, 2: 0.025})
    fam = fam_of(vm, vp)
    kept = averaged_potential(fam, 1, 2)
    assert set(kept.coeffs) == {-2, 2}
    assert kept.coeff(2, 0.0) == pytest.approx(0.075)


def test_averaged_potential_q1_returns_mean_free_part():
    fam = fam_of(SIN, COS)
    full = averaged_potential(fam, 0, 1)
    ev = fam.mean_v()
    grid = THETA_256
    assert np.max(np.abs(full(grid, 0.2) - ev(grid, 0.2))) < 1e-14


def test_averaged_potential_vanishes_for_large_q():
    fam = fam_of(SIN, COS)
    assert averaged_potential(fam, 1, 3).is_zero


def test_averaged_potential_rejects_unreduced():
    with pytest.raises(ValueError):
        averaged_potential(fam_of(SIN, COS), 2, 4)


# ----------------------------------------------------------------------
# drift
# ----------------------------------------------------------------------

def test_drift_zero_for_area_preserving(cos_sin_family):
    b = drift_b(cos_sin_family, 0.05, np.array(OFF_RESONANCE_R))
    assert np.max(np.abs(b)) < 1e-10


def test_drift_zero_for_zero_average():
    fam = fam_of(NCOS, COS)
    assert drift_b(fam, 0.05, 0.37) == 0.0


def test_drift_matches_quadrature_oracle():
    # u is not amplitude-constrained, so the 2 cos term is admissible
    u_plus = TrigPoly.cosine(1, 2.0)
    fam = MapFamily(epsilon=0.01, u=(SIN, u_plus), v=(SIN, COS))
    gamma = 0.02
    b = drift_b(fam, gamma, 0.37)
    S1 = solve_homological(fam, gamma)
    ev_r = fam.mean_v().dr()
    eu_minus_ev = fam.mean_u() - fam.mean_v()
    theta = np.arange(4096) / 4096.0
    integrand = ev_r(theta, 0.37) * S1.eval(theta, 0.37, dtheta=1) - S1.eval(
        theta, 0.37, dtheta=2
    ) * eu_minus_ev(theta, 0.37)
    assert b == pytest.approx(np.mean(integrand), abs=1e-9)


def test_drift_quadrature_with_r_dependent_v():
    # c_1(r) = 0.2 + 0.1 r makes the d_r Ev pairing term active
    vp = TrigPoly({1: [0.1, 0.05], -1: [0.1, 0.05]})
    u_plus = TrigPoly.cosine(1, 2.0)
    fam = MapFamily(epsilon=0.01, u=(SIN, u_plus), v=(SIN, vp))
    gamma = 0.02
    b = drift_b(fam, gamma, 0.37)
    S1 = solve_homological(fam, gamma)
    ev_r = fam.mean_v().dr()
    eu_minus_ev = fam.mean_u() - fam.mean_v()
    theta = np.arange(4096) / 4096.0
    integrand = ev_r(theta, 0.37) * S1.eval(theta, 0.37, dtheta=1) - S1.eval(
        theta, 0.37, dtheta=2
    ) * eu_minus_ev(theta, 0.37)
    assert b == pytest.approx(np.mean(integrand), abs=1e-9)


def test_drift_invariant_to_constant_in_u():
    vp = TrigPoly({1: [0.1, 0.05], -1: [0.1, 0.05]})
    u_plus = TrigPoly.cosine(1, 2.0)
    u_shifted = u_plus + TrigPoly.hermitian({0: 3.0})
    fam_a = MapFamily(epsilon=0.01, u=(SIN, u_plus), v=(SIN, vp))
    fam_b = MapFamily(epsilon=0.01, u=(SIN, u_shifted), v=(SIN, vp))
    assert drift_b(fam_a, 0.02, 0.37) == pytest.approx(
        drift_b(fam_b, 0.02, 0.37), abs=1e-13
    )


def test_drift_collar_guard(cos_sin_family):
    with pytest.raises(ValueError, match="3\\*gamma"):
        drift_b(cos_sin_family, 0.05, 0.01)
    # the globally mollified field still evaluates on request
    assert drift_b(cos_sin_family, 0.05, 0.01, guard=False) == 0.0


# ----------------------------------------------------------------------
# variance
# ----------------------------------------------------------------------

def test_variance_cos_sin(cos_sin_family):
    assert variance_sigma2(cos_sin_family, 0.3) == pytest.approx(0.25, abs=1e-12)


def test_variance_zero_for_identical_potentials():
    assert variance_sigma2(fam_of(COS, COS), 0.5) == 0.0


def test_variance_single_full_harmonic(odd_cos_family):
    # oscillation is exactly cos 2 pi theta, so sigma^2 = int cos^2 = 1/2
    assert variance_sigma2(odd_cos_family, 0.1) == pytest.approx(0.5, abs=1e-12)


def test_variance_matches_quadrature(cos_sin_family):
    theta = np.arange(4096) / 4096.0
    vm, vp = cos_sin_family.v
    quad = 0.25 * np.mean((vp(theta, 0.3) - vm(theta, 0.3)) ** 2)
    assert variance_sigma2(cos_sin_family, 0.3) == pytest.approx(quad, abs=1e-10)


# ----------------------------------------------------------------------
# imaginary-rational averages
# ----------------------------------------------------------------------

def test_ir_direct_sum_oracle(cos_sin_family):
    theta = np.arange(64) / 64.0
    _, s_ir = ir_drift_variance(cos_sin_family, 1, 5, theta)
    vbar = cos_sin_family.osc_v()
    oracle = sum(vbar(theta + k / 5.0, 0.2) ** 2 for k in range(5)) / 5.0
    assert np.max(np.abs(s_ir - oracle)) < 1e-14
    # degree-1 squares carry harmonics up to 2 < 5, so the cyclic
    # average is constant and equal to the Parseval variance
    assert np.ptp(s_ir) < 1e-14
    assert np.mean(s_ir) == pytest.approx(
        variance_sigma2(cos_sin_family, 0.2), abs=1e-12
    )


def test_ir_theta_average_is_parseval_variance():
    vp = TrigPoly.hermitian({1: 0.125, 4: 0.125})
    vm = TrigPoly.hermitian({1: 0.125j, 4: 0.125j})
    fam = fam_of(vm, vp)
    theta = np.arange(512) / 512.0
    _, s_ir = ir_drift_variance(fam, 1, 5, theta)
    assert np.mean(s_ir) == pytest.approx(variance_sigma2(fam, 0.2), abs=1e-12)


def test_ir_only_multiples_of_q_survive():
    # degree-4 potentials make products with harmonics up to 8, and the
    # cyclic average over 5 translates keeps exactly k in {0, 5}
    vp = TrigPoly.hermitian({1: 0.125, 4: 0.125})
    vm = TrigPoly.hermitian({1: 0.125j, 4: 0.125j})
    fam = fam_of(vm, vp)
    theta = np.arange(512) / 512.0
    b_ir, s_ir = ir_drift_variance(fam, 1, 5, theta)
    for table in (b_ir, s_ir):
        spectrum = np.abs(np.fft.rfft(table)) / len(table)
        live = {k for k in range(len(spectrum)) if spectrum[k] > 1e-13}
        assert live <= {0, 5, 10}
        assert 5 in live  # the test has teeth: k = 5 genuinely survives


def test_ir_rejects_low_order_q(cos_sin_family):
    with pytest.raises(ValueError, match="q > degree"):
        ir_drift_variance(cos_sin_family, 0, 1, np.array([0.0]))


# ----------------------------------------------------------------------
# E-fields and series
# ----------------------------------------------------------------------

def test_e2_zero_case(odd_cos_family):
    theta = np.arange(64) / 64.0
    assert np.max(np.abs(E2_field(odd_cos_family, 0.05, theta, 0.37))) == 0.0


def test_e2_integral_matches_fourier_pairing(cos_sin_family):
    theta = np.arange(8192) / 8192.0
    e2 = E2_field(cos_sin_family, 0.05, theta, 0.37)
    S1 = solve_homological(cos_sin_family, 0.05)
    ev = cos_sin_family.mean_v()
    pairing = sum(
        ev.coeff(k, 0.37) * (2j * np.pi * (-k)) * S1.coeff(-k, 0.37)
        for k in (-1, 1)
    )
    assert np.mean(e2) == pytest.approx(pairing.real, abs=1e-12)
    assert abs(pairing.imag) < 1e-14


def test_e2_additive_in_w(cos_sin_family):
    theta = np.arange(64) / 64.0
    fam_w = MapFamily(
        epsilon=0.01,
        u=(SIN, COS),
        v=(SIN, COS),
        w=(COS, COS),
        area_preserving=True,
    )
    diff = E2_field(fam_w, 0.05, theta, 0.37) - E2_field(
        cos_sin_family, 0.05, theta, 0.37
    )
    assert np.max(np.abs(diff - COS(theta, 0.0))) < 1e-14


def test_e1_series_values():
    vp = TrigPoly({1: [0.1, 0.05], -1: [0.1, 0.05]})
    e1 = E1_series(fam_of(vp, vp))
    expected = -1j * 0.05 / (2 * np.pi)
    assert np.allclose(e1.coeffs[1], expected)
    assert np.allclose(e1.coeffs[-1], np.conj(expected))


def test_e1_series_zero_for_r_independent(cos_sin_family):
    assert E1_series(cos_sin_family).is_zero


def test_e3_series_drops_resonant_harmonics():
    vp = TrigPoly({1: [0.1, 0.05], -1: [0.1, 0.05], 2: 0.1, -2: 0.1})
    fam = fam_of(vp, vp)
    e3 = E3_series(fam, 1, 2)
    assert set(e3.coeffs) == {-1, 1}
    assert np.allclose(e3.coeffs[1], -1j * 0.05 / (2 * np.pi))


# ----------------------------------------------------------------------
# diffusion generator
# ----------------------------------------------------------------------

def test_generator_on_quadratic(cos_sin_family):
    pred = DiffusionPrediction.totally_irrational(cos_sin_family)
    af = apply_generator(
        pred, lambda r: r * r, 0.37, df=lambda r: 2 * r, d2f=lambda r: 2.0
    )
    assert af == pytest.approx(0.25, abs=1e-12)


def test_generator_linear_returns_drift(cos_sin_family):
    pred = DiffusionPrediction.totally_irrational(cos_sin_family)
    assert apply_generator(pred, lambda r: r, 0.37) == pytest.approx(
        0.0, abs=1e-12
    )


def test_generator_constant_is_zero(cos_sin_family):
    pred = DiffusionPrediction.totally_irrational(cos_sin_family)
    assert apply_generator(pred, lambda r: 1.0, 0.37) == 0.0


def test_generator_central_differences(cos_sin_family):
    pred = DiffusionPrediction.totally_irrational(cos_sin_family)
    af = apply_generator(pred, lambda r: r * r, 0.37)
    assert af == pytest.approx(0.25, abs=1e-6)
