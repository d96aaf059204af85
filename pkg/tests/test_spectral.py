import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from rankpert import (CONVERGES, DIVERGES, build_operator_spec, coefficient_rule,
                      corollary_witness_search, diagonal_rule, exceptional_cover_measure,
                      find_eigenvalues, finite_spec, ionascu_eigen_test, relevant_set_sample,
                      section3_spec, truncate)
from rankpert.spectral import sample_points, union_length, worker_count

from oracles import GOLDEN_ROOTS, dense_eigs_off


def matched_error(got, ref):
    C = np.abs(got[:, None] - ref[None, :])
    r, c = linear_sum_assignment(C)
    return float(C[r, c].max())


@pytest.mark.parametrize("root", GOLDEN_ROOTS)
def test_ionascu_accepts_golden_roots(toy_spec, root):
    assert ionascu_eigen_test(toy_spec, root).is_eigen == "yes"


def test_ionascu_rejects_non_root(toy_spec):
    assert ionascu_eigen_test(toy_spec, 0.5).is_eigen == "no"


def test_ionascu_diagonal_point_fails_first_condition(toy_spec):
    v = ionascu_eigen_test(toy_spec, 1.0)
    assert not v.cond_not_in_lambda and v.is_eigen == "no"


def test_two_by_two_roots(toy_spec):
    rep = find_eigenvalues(toy_spec, region=(-1, 4, -1, 1))
    roots = np.sort_complex(rep.roots)
    assert roots.size == 2
    np.testing.assert_allclose(roots, GOLDEN_ROOTS, atol=1e-10)


def test_dim50_geometric_matches_dense():
    rng = np.random.default_rng(11)
    n = 50
    lam = np.sort(rng.uniform(-1, 1, n)) + 1j * rng.uniform(-0.5, 0.5, n)
    alpha = 0.8 ** np.arange(n)
    beta = 0.7 ** np.arange(n) * (1 + 0.5j)
    spec = finite_spec(lam, [alpha], [beta])
    ref = dense_eigs_off(lam, alpha[None, :], beta[None, :], clearance=1e-3)
    got = find_eigenvalues(spec).roots
    got = got[np.min(np.abs(got[:, None] - lam[None, :]), axis=1) > 1e-3]
    assert got.size == ref.size > 0
    assert matched_error(got, ref) <= 1e-8


def test_disjoint_supports_give_no_roots():
    spec = finite_spec([0, 1, 2, 3], [[1, 1, 0, 0]], [[0, 0, 1, 1]])
    rep = find_eigenvalues(spec)
    assert rep.roots.size == 0
    # T is then a diagonal matrix plus a nilpotent part: sigma(T) = Lambda
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(truncate(spec, 4)).real), [0, 1, 2, 3])


def test_rule_spec_agrees_with_large_truncation():
    alpha = coefficient_rule("geometric", {"ratio": 0.6})
    spec = build_operator_spec(diagonal_rule("power", {"exponent": 1}), [(alpha, alpha)])
    rep = find_eigenvalues(spec, tol=1e-10)
    ev = np.linalg.eigvals(truncate(spec, 400))
    # eigenvalues of the truncation that stay clear of the diagonal envelope
    far = ev[np.array([spec.diag.box_distance(complex(z)) for z in ev]) > 1e-2]
    assert far.size >= 1 and rep.roots.size == far.size
    assert matched_error(rep.roots, far) <= 1e-8


def test_outer_winding_equals_cell_total(toy_spec):
    rep = find_eigenvalues(toy_spec, region=(-1, 4, -1, 1))
    assert rep.outer_winding == rep.cell_winding_total == 2


def test_empty_region(toy_spec):
    rep = find_eigenvalues(toy_spec, region=(1, 1, 0, 1))
    assert rep.roots.size == 0 and rep.notes == ["empty region"]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_adjoint_roots_are_conjugates(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 15))
    spec = finite_spec(rng.normal(size=n) + 1j * rng.normal(size=n),
                       [rng.normal(size=n) + 1j * rng.normal(size=n)],
                       [rng.normal(size=n) + 1j * rng.normal(size=n)])
    a = find_eigenvalues(spec).roots
    b = find_eigenvalues(spec.adjoint()).roots
    assert a.size == b.size
    if a.size:
        assert matched_error(a, np.conj(b)) <= 1e-8


def test_relevant_set_sample_inside_and_outside():
    spec = section3_spec()
    inside = relevant_set_sample(spec, interval=(-1, 1), num_samples=50)
    assert inside.decisive == 0 or inside.hit_fraction == 0.0
    outside = relevant_set_sample(spec, interval=(1.5, 3), num_samples=100)
    assert outside.decisive == 100 and outside.hit_fraction == 1.0


def test_relevant_set_sample_geometric_dyadic():
    alpha = coefficient_rule("geometric", {"ratio": 0.5})
    spec = build_operator_spec(diagonal_rule("dyadic_section3"), [(alpha, alpha)])
    s = relevant_set_sample(spec, num_samples=200)
    assert s.hit_fraction == 1.0 and s.decisive == 200


def test_sample_points_avoid_dyadic_rationals():
    for x in sample_points(-1, 1, 200, seed=3):
        assert -1 < x < 1
        d = x.denominator
        assert d & (d - 1) != 0


def test_union_length_examples():
    assert union_length(np.array([0.0, 1.0]), np.array([2.0, 3.0])) == 3.0
    assert union_length(np.array([0.0, 5.0]), np.array([1.0, 6.0])) == 2.0
    assert union_length(np.array([]), np.array([])) == 0.0


def test_cover_geometric_bound():
    alpha = coefficient_rule("geometric", {"ratio": math.sqrt(0.5)})
    spec = build_operator_spec(diagonal_rule("dyadic_section3"), [(alpha, alpha)])
    cm = exceptional_cover_measure(spec, 0.1, terms=4000)
    # |alpha_n|^2 = 2^-n, so 2 delta sum_n 2^-n = 0.2
    assert cm.certified_bound == pytest.approx(0.2, rel=1e-9)
    assert cm.holds


def test_cover_halving_delta():
    alpha = coefficient_rule("power", {"exponent": 1.0})
    spec = build_operator_spec(diagonal_rule("dyadic_section3"), [(alpha, alpha)])
    big = exceptional_cover_measure(spec, 0.02, terms=20000)
    small = exceptional_cover_measure(spec, 0.01, terms=20000)
    assert small.certified_bound == pytest.approx(big.certified_bound / 2, rel=1e-9)
    assert small.measured_union <= big.measured_union
    assert small.holds and big.holds


def test_cover_rejects_nonpositive_delta(toy_spec):
    with pytest.raises(ValueError):
        exceptional_cover_measure(toy_spec, 0.0)


def test_witness_search_power_decay():
    alpha = coefficient_rule("power", {"exponent": 1.5})
    spec = build_operator_spec(diagonal_rule("dyadic_section3"), [(alpha, alpha)])
    w = corollary_witness_search(spec, num_samples=32)
    assert w.pair is not None and w.pair[0] < w.pair[1]


def test_witness_search_finite_spec(toy_spec):
    w = corollary_witness_search(toy_spec, num_samples=8)
    assert w.pair is not None
    assert 0 < w.pair[0] < w.pair[1] < 1


def test_witness_search_dyadic_finds_nothing():
    w = corollary_witness_search(section3_spec(), num_samples=16)
    assert w.pair is None
    assert all(v != CONVERGES for _, v, _ in w.log)
    assert any(v == DIVERGES for _, v, _ in w.log)


def test_worker_env(monkeypatch):
    monkeypatch.setenv("RANKPERT_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("RANKPERT_WORKERS", "junk")
    assert worker_count() == 1
    monkeypatch.setenv("RANKPERT_WORKERS", "2")
    s = relevant_set_sample(section3_spec(), interval=(1.5, 3), num_samples=10)
    assert s.hit_fraction == 1.0
