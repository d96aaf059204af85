import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from rankpert import (ContractError, coefficient_rule, build_operator_spec, diagonal_rule,
                      finite_spec, ms_star_identity_check, quasisimilar_pair, riesz_projection,
                      section3_spec, truncate)
from rankpert.contour import circle, rectangle
from rankpert.truncation import (best_rotation, dense_eigendecomposition, flagged_pairs,
                                 invariance_report, matrix_from_doc, matrix_to_doc)

from conftest import random_finite_spec
from oracles import GOLDEN_ROOTS


def test_dense_eigendecomposition_golden():
    pairs = dense_eigendecomposition(np.array([[1.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose([z for z, _, _ in pairs], GOLDEN_ROOTS, atol=1e-15)
    assert all(r <= 1e-15 for _, _, r in pairs)
    assert flagged_pairs(pairs) == []


def test_dense_cap_and_shape():
    with pytest.raises(ValueError, match="cap"):
        dense_eigendecomposition(np.eye(5), cap=4)
    with pytest.raises(ValueError):
        dense_eigendecomposition(np.ones((2, 3)))


def test_projection_of_diagonal():
    P = riesz_projection(np.diag([0.0, 3.0]), circle(0, 1))
    np.testing.assert_allclose(P.matrix, np.diag([1, 0]), atol=1e-13)
    assert P.rank_estimate == 1 and P.enclosed_count == 1


def test_rank_one_projection_formula():
    T = np.array([[1.0, 2.0], [0.0, 3.0]])
    # eigenvalue 1: right vector v, left vector w
    v = np.array([1.0, 0.0])
    w = np.array([1.0, -1.0])
    expected = np.outer(v, w.conj()) / (w.conj() @ v)
    P = riesz_projection(T, circle(1, 1))
    np.testing.assert_allclose(P.matrix, expected, atol=1e-12)


def test_full_enclosure_is_identity(toy_spec):
    T = truncate(toy_spec, 2)
    P = riesz_projection(T, circle(1.5, 3))
    np.testing.assert_allclose(P.matrix, np.eye(2), atol=1e-12)


def test_curve_through_eigenvalue_is_rejected():
    with pytest.raises(ContractError, match="eigenvalue 1"):
        riesz_projection(np.diag([1.0, 5.0]), rectangle(1, 2, -1, 1))


def test_invariance_report_flags_random_projection():
    rng = np.random.default_rng(0)
    T = truncate(random_finite_spec(rng, max_dim=20, min_dim=10), 10)
    X = rng.normal(size=(10, 3))
    P = X @ np.linalg.pinv(X)        # orthogonal projection onto a random 3-space
    rep = invariance_report(T, P)
    assert rep.idempotency_defect <= 1e-12
    assert rep.invariance_defect > 1e-2
    assert max(rep.commutant_defects) > 1e-2
    assert rep.rank_estimate == 3 and not rep.trivial


@pytest.mark.parametrize("which", [0, 1])
def test_invariance_report_trivial(which):
    T = np.array([[1.0, 2.0], [0.5, -1.0]])
    rep = invariance_report(T, np.eye(2) * which)
    assert rep.trivial and rep.note == "trivial subspace"
    assert rep.invariance_defect == 0.0


def test_invariance_report_spectral_projection():
    T = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 1.0], [0.0, 0.0, 4.0]])
    P = riesz_projection(T, circle(1.5, 1)).matrix
    rep = invariance_report(T, P)
    assert rep.invariance_defect <= 1e-12 and max(rep.commutant_defects) <= 1e-12


def test_recompute_matches_stored():
    rng = np.random.default_rng(2)
    spec = random_finite_spec(rng, max_dim=30, min_dim=10)
    T = truncate(spec, spec.length)
    ev = np.linalg.eigvals(T)
    r = 1.2 * float(np.max(np.abs(ev))) + 1
    P = riesz_projection(T, rectangle(-r, r, -r, r))
    idem, inv = P.recompute(T)
    assert abs(idem - P.idempotency_defect) <= 1e-14
    assert abs(inv - P.invariance_defect) <= 1e-14


def test_quasisim_two_by_two(toy_spec):
    q = quasisimilar_pair(toy_spec, 0.5 + 0.5j, 2)
    assert max(q.intertwining_defects) <= 1e-13
    assert q.sqrt_check <= 1e-15


def test_quasisim_rank_two_dim50():
    rng = np.random.default_rng(7)
    n = 50
    spec = finite_spec(rng.normal(size=n) + 1j * rng.normal(size=n),
                       rng.normal(size=(2, n)), rng.normal(size=(2, n)))
    q = quasisimilar_pair(spec, 0.3 + 0.2j, n)
    assert max(q.intertwining_defects) <= 1e-12


def test_quasisim_rejects_diagonal_point():
    spec = finite_spec([0, 1, 2], [[1, 1, 1]], [[1, 1, 1]])
    with pytest.raises(ContractError, match="lambda_3"):
        quasisimilar_pair(spec, 2, 3)


def test_quasisim_spectra_agree():
    rng = np.random.default_rng(9)
    spec = random_finite_spec(rng, max_dim=25, min_dim=10)
    xi0 = 0.7 + 0.4j
    q = quasisimilar_pair(spec, xi0, spec.length)
    a = np.sort_complex(np.linalg.eigvals(q.T_shifted))
    b = np.sort_complex(np.linalg.eigvals(q.T_tilde))
    C = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(C)
    assert C[r, c].max() <= 1e-8
    # T_shifted is the rotated T - xi0
    T = truncate(spec, spec.length)
    np.testing.assert_allclose(q.T_shifted, q.rotation * (T - xi0 * np.eye(len(T))), atol=1e-12)


def test_best_rotation_keeps_clear_of_cut():
    lam = np.array([-1.0, -1j, 1j * 0.5 - 2])
    theta, ang = best_rotation(lam)
    assert ang > 0.5
    assert np.all(np.abs(np.angle(np.exp(1j * theta) * lam)) < np.pi - 0.5)


def test_ms_star_examples(toy_spec):
    assert ms_star_identity_check(toy_spec, 0.5 + 0.5j, 2).defect <= 1e-13
    spec = finite_spec([0.1, 0.5j, -1 + 0.2j], [[1, 2, 0], [0, 1, 1], [1, 0, 1]],
                       [[1, 0, 1j], [2, 1, 0], [0, 1, 1]])
    chk = ms_star_identity_check(spec, 0.3 - 0.4j, 3)
    assert chk.verdict == "ok" and chk.M_T.shape == (3, 3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_quasisim_rule_truncations(seed):
    rng = np.random.default_rng(seed)
    alpha = coefficient_rule("geometric", {"ratio": float(rng.uniform(0.3, 0.9))})
    spec = build_operator_spec(diagonal_rule("power", {"exponent": 1.0}), [(alpha, alpha)])
    xi0 = complex(rng.uniform(-2, 2), rng.uniform(0.05, 1))
    q = quasisimilar_pair(spec, xi0, int(rng.integers(3, 80)))
    assert max(q.intertwining_defects) <= 1e-12


def test_quasisim_dyadic_truncation():
    q = quasisimilar_pair(section3_spec(), 0.1 + 0.3j, 63)
    assert max(q.intertwining_defects) <= 1e-12


def test_matrix_doc_round_trip():
    M = np.array([[1 + 2j, -0.1], [3e-300j, np.pi]])
    again = matrix_from_doc(matrix_to_doc(M))
    assert again.tobytes() == M.tobytes()
