"""Composite dynamics near p/q: pendulum energy, level-set graph, drift fields.

The strongest checks here enumerate all 2^q symbol blocks of the one-block
composite system and confirm the energy-increment identity

    H1 - H0 = sqrt(eps) R0 v_q + eps F + eps G + O(eps^(3/2))

closes with the implemented F and G, for q up to 3 and r-dependent
potentials.
"""

import itertools
import json
import math

import numpy as np
import pytest

from randtwist import MapFamily, TrigPoly
from randtwist.normal_form import averaged_potential, variance_sigma2
from randtwist.resonance import (
    composite_map,
    critical_points,
    hamiltonian_H,
    reeb_graph,
    rr_drift_variance,
    tz_variance,
)

TWO_PI = 2.0 * math.pi
COS = TrigPoly.cosine(1)
SIN = TrigPoly.sine(1)
NCOS = TrigPoly.cosine(1, -1.0)
# two-harmonic pair for the 1/2 resonance: mean 0.5 cos(4 pi t), vbar 0.3 cos
VP2 = TrigPoly.cosine(2, 0.5) + TrigPoly.cosine(1, 0.3)
VM2 = TrigPoly.cosine(2, 0.5) + TrigPoly.cosine(1, -0.3)
# r-dependent pair for the 1/3 resonance: vbar = (0.3 + 0.05 r) cos
VP3 = TrigPoly.cosine(3, 0.4) + TrigPoly.hermitian({1: [0.15, 0.025]})
VM3 = TrigPoly.cosine(3, 0.4) + TrigPoly.hermitian({1: [-0.15, -0.025]})

THETA = np.linspace(0.0, 1.0, 13)


def cos_frame(eps=1e-4):
    fam = MapFamily(epsilon=eps, u=(COS, COS), v=(COS, COS))
    return composite_map(fam, 0, 1)


def cs_frame(eps=1e-4):
    fam = MapFamily(epsilon=eps, u=(SIN, COS), v=(SIN, COS),
                    area_preserving=True)
    return composite_map(fam, 0, 1)


def odd_frame(eps=1e-4):
    fam = MapFamily(epsilon=eps, u=(NCOS, COS), v=(NCOS, COS))
    return composite_map(fam, 0, 1)


def half_frame(eps=1e-4):
    fam = MapFamily(epsilon=eps, u=(VM2, VP2), v=(VM2, VP2))
    return composite_map(fam, 1, 2)


def third_frame(eps=1e-4):
    fam = MapFamily(epsilon=eps, u=(VM3, VP3), v=(VM3, VP3))
    return composite_map(fam, 1, 3)


# ----------------------------------------------------------------------
# frame construction and composite potentials
# ----------------------------------------------------------------------

def test_frame_rejects_unreduced_resonance():
    fam = MapFamily(epsilon=1e-4, u=(VM2, VP2), v=(VM2, VP2))
    with pytest.raises(ValueError, match="not reduced"):
        composite_map(fam, 2, 4)


def test_frame_rejects_q_beyond_degree():
    fam = MapFamily(epsilon=1e-4, u=(NCOS, COS), v=(NCOS, COS))
    with pytest.raises(ValueError, match="degree"):
        composite_map(fam, 1, 2)


def test_single_step_frame_is_the_averaged_potential():
    fr = cos_frame()
    g = averaged_potential(fr.fam, 0, 1)
    assert np.allclose(fr.mean_v_q(THETA), g(THETA, 0.0), atol=1e-15)
    # one-symbol fluctuating sum is omega times the half-difference
    vbar = fr.fam.osc_v()
    got = fr.osc_v_q(THETA, 0.0, np.array([-1.0]))
    assert np.allclose(got, -vbar(THETA, 0.0), atol=1e-15)


def test_two_translate_fluctuating_sum():
    fr = half_frame()
    vbar = fr.fam.osc_v()
    rhat = 0.003
    r = 0.5 + rhat
    manual = vbar(THETA, r) - vbar(THETA + r, r)
    got = fr.osc_v_q(THETA, rhat, np.array([1.0, -1.0]))
    assert np.allclose(got, manual, atol=1e-15)


def test_mean_composite_collapses_to_q_copies():
    # resonant harmonics are multiples of q, so the q translates coincide
    fr = half_frame()
    g = averaged_potential(fr.fam, 1, 2)
    assert np.allclose(fr.mean_v_q(THETA), 2.0 * g(THETA, 0.5), atol=1e-14)


def test_fluctuating_sums_average_to_zero():
    fr = half_frame()
    acc_v = np.zeros_like(THETA)
    acc_g = np.zeros_like(THETA)
    for om in itertools.product([-1.0, 1.0], repeat=2):
        om = np.array(om)
        acc_v = acc_v + fr.osc_v_q(THETA, 0.01, om)
        acc_g = acc_g + fr.g_field(THETA, 0.4, om)
    assert np.max(np.abs(acc_v)) < 1e-14
    assert np.max(np.abs(acc_g)) < 1e-14


def test_block_length_is_enforced():
    fr = half_frame()
    with pytest.raises(ValueError, match="length q = 2"):
        fr.osc_v_q(0.1, 0.0, np.array([1.0]))
    with pytest.raises(ValueError, match="length q = 2"):
        fr.osc_u_q(0.1, np.array([1.0, 1.0, -1.0]))


# ----------------------------------------------------------------------
# pendulum Hamiltonian
# ----------------------------------------------------------------------

def test_hamiltonian_free_rotor():
    fr = odd_frame()  # E v = 0
    assert hamiltonian_H(fr, 0.37, 0.8) == 0.5 * 0.8**2
    assert np.all(fr.potential_V(THETA) == 0.0)


def test_hamiltonian_empty_integral_at_theta_zero():
    assert hamiltonian_H(cos_frame(), 0.0, 0.8) == pytest.approx(0.32, abs=1e-15)


def test_hamiltonian_cosine_closed_form():
    fr = cos_frame()
    want = 0.5 * 0.7**2 - math.sin(TWO_PI * 0.3) / TWO_PI
    assert hamiltonian_H(fr, 0.3, 0.7) == pytest.approx(want, abs=1e-14)
    v = fr.potential_V(THETA)
    assert np.allclose(v, np.sin(TWO_PI * THETA) / TWO_PI, atol=1e-15)


# ----------------------------------------------------------------------
# critical points
# ----------------------------------------------------------------------

def test_critical_points_of_cosine_potential():
    pts = critical_points(cos_frame())
    assert len(pts) == 2
    (t0, k0, h0), (t1, k1, h1) = pts
    # V = sin(2 pi t)/(2 pi): maximum at 1/4 is the focus, minimum the saddle
    assert k0 == "focus" and t0 == pytest.approx(0.25, abs=1e-9)
    assert h0 == pytest.approx(-1.0 / TWO_PI, abs=1e-9)
    assert k1 == "saddle" and t1 == pytest.approx(0.75, abs=1e-9)
    assert h1 == pytest.approx(+1.0 / TWO_PI, abs=1e-9)


def test_critical_points_need_a_potential():
    with pytest.raises(ValueError, match="vanishes identically"):
        critical_points(odd_frame())


def test_critical_points_reject_degenerate_zeros():
    s3 = TrigPoly.sine(1, 0.75) + TrigPoly.sine(3, -0.25)  # sin^3, triple zero
    fam = MapFamily(epsilon=1e-4, u=(s3, s3), v=(s3, s3))
    with pytest.raises(ValueError, match="degenerate critical point"):
        critical_points(composite_map(fam, 0, 1))


def test_double_well_counts():
    dw = TrigPoly.cosine(2, 0.5) + TrigPoly.cosine(1, 0.15)
    fam = MapFamily(epsilon=1e-4, u=(dw, dw), v=(dw, dw))
    pts = critical_points(composite_map(fam, 0, 1))
    kinds = [k for _, k, _ in pts]
    assert kinds == ["focus", "saddle", "focus", "saddle"]
    levels = [h for _, _, h in pts]
    assert len(set(np.round(levels, 9))) == 4  # all four levels distinct


# ----------------------------------------------------------------------
# level-set graph
# ----------------------------------------------------------------------

def test_reeb_single_well():
    g = reeb_graph(cos_frame(), grid=512)
    assert g.n_internal_vertices == 2
    assert (g.n_foci, g.n_saddles, g.n_boundary) == (1, 1, 2)
    assert len(g.edges) == 3  # oval plus upper and lower rotation bands
    assert g.validate()


def test_reeb_double_well():
    dw = TrigPoly.cosine(2, 0.5) + TrigPoly.cosine(1, 0.15)
    fam = MapFamily(epsilon=1e-4, u=(dw, dw), v=(dw, dw))
    g = reeb_graph(composite_map(fam, 0, 1), grid=512)
    assert (g.n_foci, g.n_saddles, g.n_boundary) == (2, 2, 2)
    assert len(g.edges) == 5
    assert g.validate()


def test_reeb_stable_under_grid_doubling():
    for frame in (cos_frame(),):
        a = reeb_graph(frame, grid=512)
        b = reeb_graph(frame, grid=1024)
        assert (a.n_foci, a.n_saddles, a.n_boundary, len(a.edges)) == (
            b.n_foci, b.n_saddles, b.n_boundary, len(b.edges))


def test_reeb_degenerate_potential_gives_two_bands():
    # v carries no q=2 harmonic (u does), so the averaged potential at 1/2
    # vanishes and the level sets are circles in two disjoint bands
    c2 = TrigPoly.cosine(2)
    fam = MapFamily(epsilon=1e-4, u=(c2, c2), v=(NCOS, COS))
    g = reeb_graph(composite_map(fam, 1, 2), grid=256)
    assert [v["type"] for v in g.vertices].count("degenerate") == 2
    assert g.n_internal_vertices == 0
    assert len(g.edges) == 2
    assert g.validate()


def test_reeb_serialization():
    g = reeb_graph(cos_frame(), grid=512)
    d = json.loads(g.to_json())
    assert sorted(d.keys()) == ["edges", "grid", "k3", "vertices"]
    assert len(d["edges"]) == 3
    dot = g.to_dot()
    assert dot.startswith("graph reeb {") and dot.endswith("}")
    assert dot.count(" -- ") == 3


def test_reeb_edge_seeds_sit_on_their_edges():
    frame = cos_frame()
    g = reeb_graph(frame, grid=512)
    slop = 4 * 2.0 * g.k3 / g.grid
    for e in g.edges:
        th, big_r = e["seed_point"]
        h = hamiltonian_H(frame, th, big_r)
        assert e["h_min"] - slop <= h <= e["h_max"] + slop


# ----------------------------------------------------------------------
# energy-increment identity over one composite block
# ----------------------------------------------------------------------

def _composite_block(frame, theta, R, eps, omega):
    """One step of the normal-form block system (second-order terms zero)."""
    se = math.sqrt(eps)
    rhat = R * se
    th1 = (theta + frame.q * rhat
           + eps * (frame.mean_u_q(theta) + frame.osc_u_q(theta, omega))) % 1.0
    R1 = R + se * (frame.mean_v_q(theta, rhat)
                   + frame.osc_v_q(theta, rhat, omega))
    return float(th1), float(R1)


def _worst_identity_residual(frame, eps):
    pts = [(0.37, 0.5), (0.11, -0.8), (0.63, 0.2)]
    worst = 0.0
    for th0, r0 in pts:
        b = float(rr_drift_variance(frame, th0, r0)[0])
        for om in itertools.product([-1.0, 1.0], repeat=frame.q):
            om = np.array(om)
            th1, r1 = _composite_block(frame, th0, r0, eps, om)
            d_h = (hamiltonian_H(frame, th1, r1, epsilon=eps)
                   - hamiltonian_H(frame, th0, r0, epsilon=eps))
            mart = math.sqrt(eps) * r0 * float(
                frame.osc_v_q(th0, r0 * math.sqrt(eps), om))
            g = float(frame.g_field(th0, r0, om))
            worst = max(worst, abs(d_h - mart - eps * (b + g)))
    return worst


@pytest.mark.parametrize("make,min_slope", [
    (cos_frame, 1.25),
    (cs_frame, 1.25),
    (half_frame, 1.25),
    (third_frame, 1.1),  # larger prefactor; rate still approaches 3/2
])
def test_energy_increment_identity_closes(make, min_slope):
    eps_grid = [1e-3, 1e-4, 1e-5]
    resid = [_worst_identity_residual(make(e), e) for e in eps_grid]
    slope = np.polyfit(np.log(eps_grid), np.log(resid), 1)[0]
    assert slope > min_slope


def test_block_mean_and_variance_match_drift_fields():
    eps = 1e-5
    se = math.sqrt(eps)
    for make in (cs_frame, half_frame):
        fr = make(eps)
        th0, r0 = 0.37, 0.5
        d_h = []
        for om in itertools.product([-1.0, 1.0], repeat=fr.q):
            th1, r1 = _composite_block(fr, th0, r0, eps, np.array(om))
            d_h.append(hamiltonian_H(fr, th1, r1, epsilon=eps)
                       - hamiltonian_H(fr, th0, r0, epsilon=eps))
        b, s2 = rr_drift_variance(fr, th0, r0)
        assert np.mean(d_h) / eps == pytest.approx(float(b), abs=5e-3)
        assert np.var(d_h) / eps == pytest.approx(float(s2), abs=1e-3)


def test_drift_field_regression_values():
    assert float(rr_drift_variance(cs_frame(), 0.37, 0.5)[0]) == pytest.approx(
        0.804593013, abs=1e-8)
    assert float(rr_drift_variance(cos_frame(), 0.37, 0.5)[0]) == pytest.approx(
        0.338228251, abs=1e-8)
    b2, s2 = rr_drift_variance(half_frame(), 0.37, 0.5)
    assert float(b2) == pytest.approx(-3.110887966, abs=1e-8)
    assert float(s2) == pytest.approx(0.021087213, abs=1e-9)
    b3, s3 = rr_drift_variance(third_frame(), 0.37, 0.5)
    assert float(b3) == pytest.approx(5.424419030, abs=1e-8)
    assert float(s3) == pytest.approx(0.037604167, abs=1e-9)


def test_energy_is_an_approximate_first_integral():
    # deterministic (symbol-averaged) composite steps change H by O(eps),
    # with the eps-coefficient under the calibrated field bounds
    eps = 1e-4
    fr = half_frame(eps)
    grid = np.linspace(0.0, 1.0, 512, endpoint=False)
    f_max = float(np.max(np.abs(rr_drift_variance(fr, grid, 1.0)[0])))
    g_max = max(
        float(np.max(np.abs(fr.g_field(grid, 1.0, np.array(om)))))
        for om in itertools.product([-1.0, 1.0], repeat=2)
    )
    th, big_r = 0.37, 0.5
    se = math.sqrt(eps)
    h_prev = hamiltonian_H(fr, th, big_r)
    worst = 0.0
    for _ in range(1000):
        th1 = (th + fr.q * big_r * se + eps * fr.mean_u_q(th)) % 1.0
        r1 = big_r + se * fr.mean_v_q(th, big_r * se)
        assert abs(r1) <= fr.k1  # stays in the resonant window throughout
        h = hamiltonian_H(fr, float(th1), float(r1))
        worst = max(worst, abs(h - h_prev))
        th, big_r, h_prev = float(th1), float(r1), h
    assert worst <= eps * (f_max + g_max)


# ----------------------------------------------------------------------
# drift and variance fields
# ----------------------------------------------------------------------

def test_rr_fields_for_symbol_odd_family():
    fr = odd_frame()
    b0, s0 = rr_drift_variance(fr, THETA, 0.0)
    assert np.array_equal(np.asarray(s0), np.zeros_like(THETA))
    assert np.allclose(b0, 0.5 * np.cos(TWO_PI * THETA) ** 2, atol=1e-15)
    b8, s8 = rr_drift_variance(fr, THETA, 0.8)
    assert np.allclose(s8, 0.64 * np.cos(TWO_PI * THETA) ** 2, atol=1e-15)
    # every E-potential term carries the mean, which vanishes here
    assert np.array_equal(np.asarray(b8), np.asarray(b0))


def test_rr_fields_reject_large_R():
    with pytest.raises(ValueError, match="K1"):
        rr_drift_variance(odd_frame(), 0.1, 1.5)


def test_tz_variance_single_translate():
    fr = odd_frame()
    got = tz_variance(fr, THETA, 0.03)
    assert np.allclose(got, np.cos(TWO_PI * THETA) ** 2, atol=1e-15)


def test_tz_variance_zero_potential():
    z = TrigPoly.zero()
    fam = MapFamily(epsilon=1e-4, u=(NCOS, COS), v=(z, z))
    fr = composite_map(fam, 0, 1)
    assert np.all(tz_variance(fr, THETA, 0.03) == 0.0)


def test_tz_variance_annulus_is_enforced():
    fr = odd_frame()
    with pytest.raises(ValueError, match="annulus"):
        tz_variance(fr, 0.1, 0.5)  # beyond gamma
    with pytest.raises(ValueError, match="annulus"):
        tz_variance(fr, 0.1, 0.005)  # inside the resonant core


def test_tz_theta_average_matches_resonant_variance():
    fam = MapFamily(epsilon=1e-6, u=(VM2, VP2), v=(VM2, VP2))
    fr = composite_map(fam, 1, 2)
    thg = (np.arange(4096) + 0.5) / 4096
    avg = float(tz_variance(fr, thg, 0.51).mean())
    assert avg == pytest.approx(2.0 * float(variance_sigma2(fam, 0.5)), abs=1e-12)
