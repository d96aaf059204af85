import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankpert import (CONVERGES, DIVERGES, build_operator_spec, check_subspace_hypotheses,
                      coefficient_rule, diagonal_rule, finite_spec, section3_spec)
from rankpert.contour import (Arc, ContourCurve, CurveError, arc_integrals, build_gamma, circle,
                              condition_iii_series, curve_from_doc, curve_inverse_distance,
                              normalize_to_upper_disc, polyline, rectangle,
                              segment_inverse_distance)

from oracles import (ARC_X03_LAM, CHORD_VALUES, CIRCLE_LAM3, chord_closed_form, polyline_brute,
                     winding_brute)


@pytest.mark.parametrize("key", sorted(CHORD_VALUES, key=str))
def test_chord_frozen_values(key):
    lam, x = key
    assert segment_inverse_distance(lam, x) == pytest.approx(CHORD_VALUES[key], rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3), x=st.floats(-0.99, 0.99))
def test_chord_matches_mpmath_closed_form(re, im, x):
    lam = complex(re, im)
    if abs(re - x) < 1e-6:
        return
    assert segment_inverse_distance(lam, x) == pytest.approx(chord_closed_form(lam, x), rel=1e-11)


def test_chord_far_point():
    # chord length 2 at x = 0, so the integral is about 2/|lam|
    for lam in (1e6, 1e6j, -7e5 + 7e5j):
        assert segment_inverse_distance(lam, 0.0) == pytest.approx(2 / abs(lam), rel=1e-2)


def test_chord_near_foot_matches_closed_form():
    for lam in (0.3 + 1e-9 + 0.2j, 0.3 - 1e-7 - 0.9j, 0.3 + 1e-4 + 0.95j):
        assert segment_inverse_distance(lam, 0.3) == pytest.approx(chord_closed_form(lam, 0.3), rel=1e-9)


def test_pole_on_chord():
    with pytest.raises(CurveError):
        segment_inverse_distance(0.2 + 0.1j, 0.2)
    with pytest.raises(ValueError):
        segment_inverse_distance(0.5, 1.0)


def test_arc_values():
    th = math.acos(0.3)
    arc = Arc(0j, 1.0, -th, th)
    assert float(arc_integrals(arc, np.array([0.2 + 0.1j]))[0]) == pytest.approx(ARC_X03_LAM, rel=1e-12)
    # at the centre every arc point is at distance 1: value = arc length
    assert float(arc_integrals(Arc(0j, 1.0, -math.pi / 2, math.pi / 2), np.array([0j]))[0]) == \
        pytest.approx(math.pi, rel=1e-14)
    assert curve_inverse_distance(circle(0, 1), 3) == pytest.approx(CIRCLE_LAM3, rel=1e-12)


def test_arc_near_point_uses_adaptive_path():
    th = math.acos(0.3)
    arc = Arc(0j, 1.0, -th, th)
    lam = np.array([1.0 + 1e-6, 0.9 + 0.2j, 5.0])
    got = arc_integrals(arc, lam)
    from scipy.integrate import quad
    for g, l in zip(got, lam):
        ref = quad(lambda t: 1 / abs(l - np.exp(1j * t)), -th, th, points=[0], epsabs=0,
                   epsrel=1e-13, limit=500)[0]
        assert g == pytest.approx(ref, rel=1e-10)


def test_polyline_brute_force():
    pts = [0, 2, 2 + 1j, 0.5 + 1.5j]
    lam = 1.1 + 0.4j
    got = curve_inverse_distance(polyline(pts), lam)
    assert got == pytest.approx(polyline_brute(pts, lam), abs=1e-8)


def test_gamma_geometry():
    g = build_gamma(0.0)
    assert g.length == pytest.approx(2 + math.pi, rel=1e-15)
    g = build_gamma(Fraction(3, 5))
    assert g.x_cut == Fraction(3, 5)
    seg = g.pieces[1]
    assert abs(seg.start - (0.6 + 0.8j)) < 1e-15 and abs(seg.end - (0.6 - 0.8j)) < 1e-15
    with pytest.raises(ValueError):
        build_gamma(1.2)
    with pytest.raises(ValueError):
        build_gamma(0.0, side="left")


def test_gamma_sides_and_winding():
    plus, minus = build_gamma(0.2, "plus"), build_gamma(0.2, "minus")
    for z in (0.5 + 0.1j, 0.8j + 0.3, -0.4j + 0.6):
        assert plus.winding(z) == 1 and minus.winding(z) == 0
    for z in (-0.5 + 0.1j, 0.1 - 0.3j):
        assert plus.winding(z) == 0 and minus.winding(z) == 1
    assert plus.winding(2) == minus.winding(2) == 0
    with pytest.raises(CurveError):
        plus.winding(0.2)


def test_winding_matches_brute_force():
    pts = [0, 2, 2 + 1j, 1 + 0.2j, 0.5 + 1.5j]
    curve = polyline(pts)
    for z in (1.5 + 0.3j, 0.5 + 0.8j, 1 + 0.6j, 3j, -1):
        assert curve.winding(z) == winding_brute(pts, z)


@settings(max_examples=100, deadline=None)
@given(re=st.floats(-1.5, 1.5), im=st.floats(-1.5, 1.5), x=st.floats(-0.9, 0.9))
def test_mirror_symmetry(re, im, x):
    g = build_gamma(x)
    lam = complex(re, im)
    if float(g.distance(lam)) < 1e-6:
        return
    a = curve_inverse_distance(g, lam)
    b = curve_inverse_distance(g, lam.conjugate())
    assert a == pytest.approx(b, rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(phi=st.floats(0, 2 * math.pi), r=st.floats(1.05, 5), dr=st.floats(0.1, 5))
def test_radial_monotonicity_outside_disc(phi, r, dr):
    g = build_gamma(0.1)
    u = complex(math.cos(phi), math.sin(phi))
    assert curve_inverse_distance(g, (r + dr) * u) < curve_inverse_distance(g, r * u)


def test_curve_docs():
    c = curve_from_doc({"type": "gamma", "x": 0.25, "side": "minus"})
    assert c.side == "minus" and c.x_cut == 0.25
    r = curve_from_doc({"type": "rectangle", "box": [0, 1, 0, 1]})
    assert r.length == pytest.approx(4)
    with pytest.raises(ValueError):
        curve_from_doc({"type": "spiral"})
    with pytest.raises(ValueError, match="not closed"):
        ContourCurve((Arc(0j, 1, 0, 1),))


def test_rectangle_orientation_positive():
    assert rectangle(-1, 1, -1, 1).winding(0) == 1


def test_normalization_real_interval():
    spec = finite_spec([-1, 0, 1], [[1, 1, 1]], [[1, 2, 3]])
    nspec, amap = normalize_to_upper_disc(spec)
    assert amap.s == Fraction(4, 5) and amap.t == 0.4j
    np.testing.assert_allclose(nspec.diag.values(1, 4), [-0.8 + 0.4j, 0.4j, 0.8 + 0.4j], atol=1e-15)
    # u scaled by s, v untouched: T' = s T + t
    np.testing.assert_allclose(nspec.perturbations[0][0].values(1, 4), [0.8] * 3)
    np.testing.assert_allclose(nspec.perturbations[0][1].values(1, 4), [1, 2, 3])
    assert amap.inverse(amap.forward(0.3 + 0.1j)) == pytest.approx(0.3 + 0.1j)
    assert amap.forward_x(Fraction(1, 2)) == Fraction(2, 5)


def test_normalization_identity_when_already_inside():
    spec = finite_spec([0.1 + 0.3j, -0.2 + 0.5j], [[1, 1]], [[1, 1]])
    nspec, amap = normalize_to_upper_disc(spec)
    assert amap.is_identity and nspec is spec


def test_normalization_wide_box():
    spec = finite_spec([-10, 10, 3j, -5j], [[1] * 4], [[1] * 4])
    nspec, amap = normalize_to_upper_disc(spec)
    xmin, xmax, ymin, ymax = nspec.diag.box
    corners = [complex(a, b) for a in (xmin, xmax) for b in (ymin, ymax)]
    assert ymin >= 0.05 - 1e-12 and max(abs(c) for c in corners) <= 0.9 + 1e-12


def test_condition_iii_finite():
    spec = finite_spec([0.2 + 0.3j, 0.6 + 0.2j], [[1, 2]], [[1, 1]])
    v = condition_iii_series(spec, build_gamma(Fraction(1, 2)))
    assert v.verdict == CONVERGES and v.tail_bound == 0
    g = build_gamma(Fraction(1, 2))
    exact = (curve_inverse_distance(g, 0.2 + 0.3j) ** 2 * 1
             + curve_inverse_distance(g, 0.6 + 0.2j) ** 2 * 4)
    assert v.partial_sum == pytest.approx(exact, rel=1e-13)


def test_condition_iii_rule_spec_converges():
    alpha = coefficient_rule("power", {"exponent": 1.5})
    spec = build_operator_spec(diagonal_rule("dyadic_section3"), [(alpha, alpha)])
    nspec, amap = normalize_to_upper_disc(spec)
    g = build_gamma(amap.forward_x(Fraction(1, 3)))
    v = condition_iii_series(nspec, g, tol=1e-6)
    assert v.verdict == CONVERGES and math.isfinite(v.tail_bound)


def test_condition_iii_needs_chord():
    with pytest.raises(ValueError):
        condition_iii_series(finite_spec([0.5j], [[1]], [[1]]), circle(0, 1))


def test_condition_iii_pole():
    spec = finite_spec([0.5 + 0.2j], [[1]], [[1]])
    with pytest.raises(CurveError):
        condition_iii_series(spec, build_gamma(Fraction(1, 2)))


def test_hypotheses_two_by_two(toy_spec):
    rep = check_subspace_hypotheses(toy_spec, Fraction(1, 2))
    assert rep.condition_i
    assert rep.overall == "satisfied-at-samples"
    assert rep.condition_iii.verdict == CONVERGES


def test_hypotheses_divergent_abscissa_is_inconclusive():
    rep = check_subspace_hypotheses(section3_spec(), Fraction(1, 3))
    assert rep.overall == "inconclusive"


def test_hypotheses_root_on_curve():
    # plant an eigenvalue of T on the chord: 1 + f(z) = 0 at z = 0.5 + 0.1j
    z = 0.5 + 0.1j
    lam = np.array([0.1 + 0.3j, 0.8 + 0.3j])
    f = np.sum(1 / (lam - z))
    spec = finite_spec(lam, [[1, 1]], [[-1 / np.conj(f)] * 2])
    nspec, amap = normalize_to_upper_disc(spec)
    assert amap.is_identity
    rep = check_subspace_hypotheses(spec, Fraction(1, 2))
    assert rep.overall == "violated"


def test_hypothesis_report_doc(toy_spec):
    doc = check_subspace_hypotheses(toy_spec, Fraction(1, 2)).to_doc()
    json.dumps(doc, allow_nan=False)
    assert doc["overall"] == "satisfied-at-samples"


def test_divergent_relevant_point_matches_series():
    from rankpert import relevant_set_series
    assert relevant_set_series(section3_spec(), Fraction(0)).verdict == DIVERGES
