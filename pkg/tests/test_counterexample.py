import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rankpert.counterexample import (chain_sum_lower, chain_threshold_level, dyadic_r,
                                     first_level, gamma_coeff, growth_table, k0, level_values,
                                     lower_bound_growth, lower_bound_increment, phi_partial,
                                     verify_l2_vs_divergence)

from oracles import SECTION3_R


def test_first_values():
    assert [dyadic_r(n) for n in range(1, 8)] == [Fraction(s) for s in SECTION3_R]
    with pytest.raises(ValueError):
        dyadic_r(0)


@pytest.mark.parametrize("m", range(0, 12))
def test_level_start(m):
    # first point of level m sits at -1 + 2^-m
    assert dyadic_r(1 << m) == Fraction(-1) + Fraction(1, 1 << m)


def test_values_distinct_and_inside():
    seen = np.concatenate([level_values(m) for m in range(21)])
    assert seen.size == (1 << 21) - 1
    assert np.unique(seen).size == seen.size
    assert seen.min() > -1 and seen.max() < 1


def test_level_values_match_exact():
    for m in range(8):
        exact = [dyadic_r(n) for n in range(1 << m, 1 << (m + 1))]
        assert [Fraction(v) for v in level_values(m)] == exact


def test_gamma_small_levels():
    assert gamma_coeff(0) == gamma_coeff(1) == 0.0
    assert gamma_coeff(2) == pytest.approx(1 / (2 * math.sqrt(2) * math.log(2)), rel=1e-15)
    with pytest.raises(ValueError):
        gamma_coeff(-1)


def test_l2_report():
    rep = verify_l2_vs_divergence(30)
    assert len(rep["rows"]) == 31
    last = rep["rows"][-1]
    assert last["l2_partial"] <= rep["l2_certified_bound"]
    increments = [r["weighted_increment"] for r in rep["rows"][2:]]
    np.testing.assert_allclose(increments, [1 / math.log(m) ** 2 for m in range(2, 31)], rtol=1e-14)
    lvl = rep["weighted_threshold_level"]
    assert sum(1 / math.log(m) ** 2 for m in range(2, lvl + 1)) >= 10
    assert sum(1 / math.log(m) ** 2 for m in range(2, lvl)) < 10
    with pytest.raises(ValueError):
        verify_l2_vs_divergence(2)


def _phi_oracle(x, levels):
    """Level sums with exact rationals for the abscissas, float weights."""
    total = 0.0
    for m in range(2, levels + 1):
        g2 = gamma_coeff(m) ** 2
        total += g2 * math.fsum(1 / abs(float(dyadic_r(n) - Fraction(x)))
                                for n in range(1 << m, 1 << (m + 1)))
    return total


@pytest.mark.parametrize("x", [0.0, 0.3, -0.77, 0.999999])
def test_phi_against_oracle_and_bound(x):
    w = phi_partial(x, 12)
    assert w.partial_sum == pytest.approx(_phi_oracle(x, 12), rel=1e-12)
    assert all(r["phi_partial"] >= r["lower_bound"] for r in w.rows)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-0.995, 0.995))
def test_phi_symmetric_in_x(x):
    a, b = phi_partial(x, 14), phi_partial(-x, 14)
    assert a.partial_sum == pytest.approx(b.partial_sum, rel=1e-12)
    assert a.lower_bound == b.lower_bound


def test_phi_near_edge_needs_depth():
    w = phi_partial(0.999999, 12)
    assert w.first_level == 20 and w.status == "insufficient depth"
    assert w.lower_bound == 0.0


def test_phi_exact_hit():
    w = phi_partial(0.25, 10)
    assert w.status.startswith("exact hit")
    with pytest.raises(ValueError):
        phi_partial(1.0, 5)


def test_partial_sums_monotone():
    w = phi_partial(0.1, 20)
    ps = [r["phi_partial"] for r in w.rows]
    assert all(b >= a for a, b in zip(ps, ps[1:]))


@settings(max_examples=60, deadline=None)
@given(num=st.integers(-999, 999), m=st.integers(2, 14))
def test_k0_brackets(num, m):
    x = Fraction(num, 1000)
    if m < first_level(x):
        return
    y = -abs(x)
    k = k0(m, x)
    base = 1 << m
    assert 1 <= k < base
    assert dyadic_r(base + k - 1) <= y < dyadic_r(base + k)


def test_first_level_examples():
    assert first_level(0) == 1
    assert first_level(Fraction(1, 2)) == 2
    assert first_level(0.9) == 4


def test_lower_bound_increments():
    assert lower_bound_increment(1) == 0
    assert lower_bound_increment(3) == pytest.approx(math.log(2) * 2 / (6 * math.log(3) ** 2))


def test_chain_integral_bound_is_below_sum():
    for a, b in ((3, 10), (5, 200), (40, 4000)):
        direct = math.fsum(lower_bound_increment(m) for m in range(a, b + 1))
        assert chain_sum_lower(a, b) <= direct
    assert chain_sum_lower(10, 9) == 0.0


def test_chain_threshold_level_reaches_target():
    L = chain_threshold_level(0.0, 2.0)
    assert math.fsum(lower_bound_increment(m) for m in range(3, L + 1)) >= 2.0


def test_lower_bound_growth():
    g = lower_bound_growth(3.0)
    assert g["level"] == 80 and g["value"] > 3.0
    assert lower_bound_growth(1e9, max_level=50)["level"] is None


def test_growth_table_rows():
    rows = growth_table(0.0, 20)
    assert len(rows) == 21
    assert [r[0] for r in rows] == list(range(21))
