"""Spectral analysis toolkit for diagonal operators with finite-rank perturbations."""

__version__ = "0.1.0"

from .sequences import (CoefficientSequence, DiagonalSequence, FiniteCoefficients,
                        FiniteDiagonal, RuleCoefficients, RuleDiagonal, SpecError,
                        coefficient_rule, diagonal_rule)
from .operator import (OperatorSpec, ROClassification, build_operator_spec, classify_ro,
                       finite_spec, spec_from_doc, spec_from_json, truncate)
from .series import (CONVERGES, DIVERGES, INCONCLUSIVE, PoleError, SeriesValue,
                     check_summability, eval_borel, eval_borel_matrix, ionascu_range_series,
                     log_square_series, relevant_set_series, theorem_region_membership)
from .spectral import (SpectrumReport, corollary_witness_search, exceptional_cover_measure,
                       find_eigenvalues, ionascu_eigen_test, relevant_set_sample)
from .contour import (ContourCurve, CurveError, build_gamma, check_subspace_hypotheses,
                      condition_iii_series, curve_inverse_distance, normalize_to_upper_disc,
                      segment_inverse_distance)
from .truncation import (ContractError, dense_eigendecomposition, invariance_report,
                         ms_star_identity_check, quasisimilar_pair, riesz_projection)
from .counterexample import (DivergenceWitness, dyadic_r, gamma_coeff, growth_table,
                             lower_bound_growth, phi_partial, section3_spec)
