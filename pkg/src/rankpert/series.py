"""Certified evaluation of the scalar series attached to T.

Every routine sums in ascending index order, in chunks, with a compensated
(``math.fsum``) reduction of chunk sums.  After each chunk the remaining tail is
bounded with the coefficient majorants only; no extrapolation is used.  A value
is ``converges-certified`` exactly when such a bound is finite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .operator import OperatorSpec
from .sequences import INF, CoefficientSequence, as_fraction

CONVERGES = "converges-certified"
DIVERGES = "diverges-certified"
INCONCLUSIVE = "inconclusive"

DEFAULT_TOL = 1e-10
DEFAULT_BUDGET = 10 ** 8
DIVERGENCE_THRESHOLD = 1e6
FIRST_CHUNK = 1024
MAX_CHUNK = 1 << 20
GIVE_UP = 1 << 16


class PoleError(ValueError):
    """The evaluation point is a pole of the series."""


@dataclass
class SeriesValue:
    partial_sum: complex
    terms_used: int
    tail_bound: float
    verdict: str
    witness: dict = field(default_factory=dict)
    breakdown: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict == CONVERGES

    def contains(self, value: complex) -> bool:
        return abs(value - self.partial_sum) <= self.tail_bound

    def to_doc(self) -> dict:
        z = complex(self.partial_sum)
        return {"partial_sum": [z.real, z.imag], "terms_used": int(self.terms_used),
                "tail_bound": self.tail_bound if math.isfinite(self.tail_bound) else "unknown",
                "verdict": self.verdict, "witness": _jsonable(self.witness),
                "breakdown": [b.to_doc() if isinstance(b, SeriesValue) else _jsonable(b)
                              for b in self.breakdown]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def accumulate(terms: Callable[[int, int], np.ndarray], tail: Callable[[int], float],
               length: Optional[int], tol: float = DEFAULT_TOL,
               budget: int = DEFAULT_BUDGET, min_terms: int = 0,
               max_terms: Optional[int] = None, give_up: int = GIVE_UP) -> SeriesValue:
    """Sum terms(start, stop) chunk by chunk until tail(M) <= tol.

    Stops at the finite length, at ``max_terms``, when the budget is spent, or
    once M >= give_up while no finite tail bound is available (more terms
    cannot turn the verdict into a certificate).
    """
    limit = budget if max_terms is None else min(budget, max_terms)
    if length is not None:
        limit = min(limit, length)
    re_parts, im_parts = [], []
    M, chunk, t = 0, FIRST_CHUNK, INF
    # the tolerance may be out of reach even with the whole budget
    t_final = tail(limit) if length is None or limit < length else 0.0
    unreachable = False
    while True:
        stop = min(M + chunk, limit)
        if stop > M:
            s = complex(np.sum(terms(M + 1, stop + 1)))
            re_parts.append(s.real)
            im_parts.append(s.imag)
            M = stop
        if length is not None and M >= length:
            t = 0.0
            break
        t = tail(M)
        if (t <= tol and M >= min_terms) or M >= limit:
            break
        if M >= give_up and (not math.isfinite(t) or t_final > tol):
            unreachable = math.isfinite(t)
            break
        chunk = min(chunk * 2, MAX_CHUNK)
    total = complex(math.fsum(re_parts), math.fsum(im_parts))
    verdict = CONVERGES if math.isfinite(t) else INCONCLUSIVE
    witness = {}
    if unreachable:
        witness = {"note": "tolerance unreachable within budget",
                   "tail_at_budget": float(t_final)}
    return SeriesValue(total, M, float(t), verdict, witness)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num/den with 0/0 := 0 (zero coefficients contribute nothing)."""
    out = np.zeros(np.broadcast(num, den).shape, dtype=np.result_type(num, den, float))
    nz = num != 0
    out[nz] = num[nz] / den[nz]
    return out


# ---------------------------------------------------------------------------
# Borel series
# ---------------------------------------------------------------------------


def _check_pole(spec: OperatorSpec, z: complex):
    hits = spec.diag.hits(z)
    if hits:
        raise PoleError(f"z = {z} equals lambda_{hits[0]}")


def _borel_tail(spec, a: CoefficientSequence, b: CoefficientSequence, z: complex, power: int):
    """Tail bound of sum |a_n b_n| / |lambda_n - z|^power."""
    diag = spec.diag
    dist = diag.box_distance(z)
    bounds = []
    if dist > 0:
        bounds.append(lambda M: math.sqrt(a.tail_moment(2, 0, M) * b.tail_moment(2, 0, M))
                      / dist ** power)
    x = as_fraction(z.real)
    sep = diag.re_separation(x)
    if sep is not None:
        c, j = sep
        hit_idx = [n for n in diag.re_hits(x)]

        def sep_tail(M):
            jj = j * power
            base = c ** power * math.sqrt(a.tail_moment(2, jj, M) * b.tail_moment(2, jj, M))
            for n in hit_idx:
                if n > M:
                    lam = diag.values(n, n + 1)[0]
                    d = abs(lam - z)
                    num = abs(a.values(n, n + 1)[0] * b.values(n, n + 1)[0])
                    if num:
                        base += INF if d == 0 else num / d ** power
            return base
        bounds.append(sep_tail)
    if not bounds:
        return lambda M: INF
    return lambda M: min(f(M) for f in bounds)


def borel_entry(spec: OperatorSpec, i: int, j: int, z: complex, tol: float = DEFAULT_TOL,
                budget: int = DEFAULT_BUDGET, power: int = 1, **kw) -> SeriesValue:
    """sum_n alpha_n^(i) conj(beta_n^(j)) / (lambda_n - z)^power."""
    z = complex(z)
    _check_pole(spec, z)
    a = spec.perturbations[i][0]
    b = spec.perturbations[j][1]

    def terms(start, stop):
        lam = spec.diag.values(start, stop)
        num = a.values(start, stop) * np.conj(b.values(start, stop))
        return _safe_div(num, (lam - z) ** power)

    return accumulate(terms, _borel_tail(spec, a, b, z, power), spec.length, tol, budget, **kw)


def eval_borel(spec: OperatorSpec, z: complex, tol: float = DEFAULT_TOL,
               budget: int = DEFAULT_BUDGET, **kw) -> SeriesValue:
    """f_T(z) = sum alpha_n conj(beta_n) / (lambda_n - z) for rank one."""
    if spec.rank != 1:
        raise ValueError("eval_borel needs a rank-one spec; use eval_borel_matrix")
    return borel_entry(spec, 0, 0, z, tol, budget, **kw)


def eval_borel_derivative(spec: OperatorSpec, z: complex, tol: float = DEFAULT_TOL,
                          budget: int = DEFAULT_BUDGET) -> SeriesValue:
    """f_T'(z) = sum alpha_n conj(beta_n) / (lambda_n - z)^2."""
    return borel_entry(spec, 0, 0, z, tol, budget, power=2)


@dataclass
class BorelMatrixValue:
    entries: np.ndarray
    entry_values: list
    determinant: complex
    det_error_bound: float

    @property
    def matrix(self) -> np.ndarray:
        return np.eye(self.entries.shape[0]) + self.entries

    @property
    def certified(self) -> bool:
        return all(v.certified for row in self.entry_values for v in row)

    def to_doc(self):
        return {"entries": [[[complex(e).real, complex(e).imag] for e in row] for row in self.entries],
                "determinant": [self.determinant.real, self.determinant.imag],
                "det_error_bound": self.det_error_bound if math.isfinite(self.det_error_bound) else "unknown",
                "entry_values": [[v.to_doc() for v in row] for row in self.entry_values]}


def small_det(Mx: np.ndarray) -> complex:
    n = Mx.shape[0]
    if n == 1:
        return complex(Mx[0, 0])
    if n == 2:
        return complex(Mx[0, 0] * Mx[1, 1] - Mx[0, 1] * Mx[1, 0])
    return complex(np.linalg.det(Mx))


def _adjugate(Mx: np.ndarray) -> np.ndarray:
    n = Mx.shape[0]
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    adj = np.empty_like(Mx, dtype=complex)
    for r in range(n):
        for c in range(n):
            minor = np.delete(np.delete(Mx, r, axis=0), c, axis=1)
            adj[c, r] = (-1) ** (r + c) * small_det(minor)
    return adj


def eval_borel_matrix(spec: OperatorSpec, z: complex, tol: float = DEFAULT_TOL,
                      budget: int = DEFAULT_BUDGET) -> BorelMatrixValue:
    """M_T(z) = I + (f^(i,j)(z)) with det and a first-order error bound."""
    N = spec.rank
    vals = [[borel_entry(spec, i, j, z, tol, budget) for j in range(N)] for i in range(N)]
    F = np.array([[v.partial_sum for v in row] for row in vals], dtype=complex)
    tails = np.array([[v.tail_bound for v in row] for row in vals])
    Mx = np.eye(N) + F
    det = 1 + F[0, 0] if N == 1 else small_det(Mx)
    if np.all(np.isfinite(tails)):
        # d det / d M_ij = adj(M)_ji
        err = float(np.sum(np.abs(_adjugate(Mx)).T * tails))
    else:
        err = INF
    return BorelMatrixValue(F, vals, complex(det), err)


# ---------------------------------------------------------------------------
# weighted l2 series in lambda and Re lambda
# ---------------------------------------------------------------------------


def _aggregate(parts: list, witness: Optional[dict] = None) -> SeriesValue:
    verdicts = [p.verdict for p in parts]
    if DIVERGES in verdicts:
        verdict = DIVERGES
    elif all(v == CONVERGES for v in verdicts):
        verdict = CONVERGES
    else:
        verdict = INCONCLUSIVE
    total = complex(math.fsum(p.partial_sum.real for p in parts),
                    math.fsum(p.partial_sum.imag for p in parts))
    tail = math.fsum(p.tail_bound for p in parts) if all(
        math.isfinite(p.tail_bound) for p in parts) else INF
    return SeriesValue(total, max(p.terms_used for p in parts), tail, verdict,
                       witness or {}, parts)


def _range_one(spec, a, z, tol, budget) -> SeriesValue:
    def terms(start, stop):
        lam = spec.diag.values(start, stop)
        return _safe_div(np.abs(a.values(start, stop)) ** 2, np.abs(lam - z) ** 2)

    return accumulate(terms, _borel_tail(spec, a, a, z, 2), spec.length, tol, budget)


def ionascu_range_series(spec: OperatorSpec, z: complex, tol: float = DEFAULT_TOL,
                         budget: int = DEFAULT_BUDGET) -> SeriesValue:
    """sum |alpha_n^(k)|^2 / |z - lambda_n|^2 for each u_k (u_k in ran(D - z))."""
    z = complex(z)
    _check_pole(spec, z)
    parts = [_range_one(spec, u, z, tol, budget) for u, _ in spec.perturbations]
    out = _aggregate(parts)
    worst = max(range(len(parts)), key=lambda k: parts[k].tail_bound)
    out.witness = {**out.witness, "max_tail_sequence": f"u_{worst + 1}"}
    return out


def _section3_frame(spec: OperatorSpec, seq: CoefficientSequence, x: Fraction):
    """x in the frame of the bare dyadic diagonal, or None if the data are not of that shape."""
    from .sequences import AffineDiagonal, ConjugateDiagonal
    diag = spec.diag
    scale = Fraction(1)
    while True:
        if isinstance(diag, ConjugateDiagonal):
            diag = diag.inner
        elif isinstance(diag, AffineDiagonal):
            x = diag._back(x)
            scale *= diag.s
            diag = diag.inner
        else:
            break
    if diag.name == "dyadic_section3" and diag.kind == "rule-generated" and seq.name == "dyadic_section3":
        return x, float(scale)
    return None


def _relevant_one(spec: OperatorSpec, seq: CoefficientSequence, label: str, x: Fraction,
                  tol: float, budget: int) -> SeriesValue:
    xf = float(x)
    for n in spec.diag.re_hits(x):
        c = seq.values(n, n + 1)[0]
        if c != 0:
            return SeriesValue(INF, n, INF, DIVERGES,
                               {"sequence": label, "pole_index": n,
                                "reason": f"x = Re lambda_{n} with nonzero coefficient"})
    frame = _section3_frame(spec, seq, x)
    if frame is not None and -1 < float(frame[0]) < 1:
        return _section3_divergence(spec, seq, label, frame[0], budget, frame[1])

    def terms(start, stop):
        lam = spec.diag.values(start, stop)
        return _safe_div(np.abs(seq.values(start, stop)) ** 2, np.abs(lam.real - xf))

    sep = spec.diag.re_separation(x)
    if sep is None:
        tail = lambda M: INF
    else:
        c, j = sep
        tail = lambda M: c * seq.tail_moment(2, j, M)
    out = accumulate(terms, tail, spec.length, tol, budget)
    out.witness = {**out.witness, "sequence": label}
    if sep is not None:
        out.witness["separation"] = {"c": sep[0], "j": sep[1]}
    return out


def _section3_divergence(spec, seq, label, x, budget, s=1.0) -> SeriesValue:
    """Lower-bound chain in the dyadic frame; an affine scale s divides |Re lambda - x| by 1/s."""
    from . import counterexample as cx

    xf = float(x)
    if not -1 < xf < 1:
        return SeriesValue(0j, 0, INF, INCONCLUSIVE, {"sequence": label, "reason": "x outside (-1, 1)"})
    scale_sq = abs(seq.values(4, 5)[0] / cx.gamma_coeff(2)) ** 2 / s
    levels = min(16, max(int(math.log2(max(budget, 2))) - 1, 2))
    w = cx.phi_partial(xf, levels)
    level = cx.chain_threshold_level(x, DIVERGENCE_THRESHOLD, scale_sq)
    return SeriesValue(scale_sq * w.partial_sum, (1 << (levels + 1)) - 1, INF, DIVERGES,
                       {"sequence": label,
                        "reason": "dyadic lower-bound chain sum_m ln2 gamma_m^2 2^(m-1)(m-1) diverges",
                        "partial_lower_bound": scale_sq * w.lower_bound,
                        "first_level": w.first_level,
                        "threshold": DIVERGENCE_THRESHOLD,
                        "threshold_level": level})


def relevant_set_series(spec: OperatorSpec, x, tol: float = DEFAULT_TOL,
                        budget: int = DEFAULT_BUDGET) -> SeriesValue:
    """sum_k sum_n (|alpha_n^(k)|^2 + |beta_n^(k)|^2) / |Re lambda_n - x|.

    ``x`` may be a float or an exact ``Fraction``; separation bounds for
    rule-generated diagonals are computed from the exact value.
    """
    x = as_fraction(x)
    parts = []
    for k, (u, v) in enumerate(spec.perturbations, start=1):
        parts.append(_relevant_one(spec, u, f"u_{k}", x, tol, budget))
        parts.append(_relevant_one(spec, v, f"v_{k}", x, tol, budget))
    return _aggregate(parts, {"x": float(x)})


def log_square_series(spec: OperatorSpec, x, tol: float = DEFAULT_TOL,
                      budget: int = DEFAULT_BUDGET, k: int = 0) -> SeriesValue:
    """sum_n (log|Re lambda_n - x|)^2 |alpha_n^(k)|^2."""
    x = as_fraction(x)
    xf = float(x)
    seq = spec.perturbations[k][0]
    for n in spec.diag.re_hits(x):
        if seq.values(n, n + 1)[0] != 0:
            raise PoleError(f"x = Re lambda_{n} with nonzero coefficient")

    def terms(start, stop):
        lam = spec.diag.values(start, stop)
        a2 = np.abs(seq.values(start, stop)) ** 2
        out = np.zeros(a2.shape)
        nz = a2 != 0
        out[nz] = np.log(np.abs(lam.real[nz] - xf)) ** 2 * a2[nz]
        return out

    xmin, xmax = spec.diag.box[0], spec.diag.box[1]
    far = max(abs(xmax - xf), abs(xf - xmin), 1.0)
    near = spec.diag.re_distance(xf)
    if near >= 1:
        # every |Re lambda_n - x| lies in [near, far], both >= 1
        tail = lambda M: math.log(far) ** 2 * seq.tail_moment(2, 0, M)
        witness = {"bound": "uniform separation", "log_far": math.log(far)}
    else:
        sep = spec.diag.re_separation(x)
        if sep is None:
            tail = lambda M: INF
            witness = {}
        else:
            c, j = sep
            # (log y)^2 <= (16/e^2) sqrt(y) for y >= 1, with y = c n^j >= 1/|Re lambda_n - x|
            kappa = 16 / math.e ** 2 * math.sqrt(max(c, 1.0))
            tail = lambda M: (math.log(far) ** 2 * seq.tail_moment(2, 0, M)
                              + kappa * seq.tail_moment(2, j / 2, M))
            witness = {"separation": {"c": c, "j": j}, "log_far": math.log(far)}
    out = accumulate(terms, tail, spec.length, tol, budget)
    out.witness = {**out.witness, **witness}
    return out


# ---------------------------------------------------------------------------
# summability conditions
# ---------------------------------------------------------------------------

CONDITIONS = ("FJKP-2/3", "FX-1", "GG-either", "LOG")


@dataclass
class SummabilityReport:
    condition: str
    verdict: str
    witness: dict
    parts: list = field(default_factory=list)

    def to_doc(self):
        return {"condition": self.condition, "verdict": self.verdict,
                "witness": _jsonable(self.witness),
                "parts": [p.to_doc() for p in self.parts]}


def _g(kind, p):
    if kind == "pow":
        return lambda a: a ** p
    return lambda a: a * a * np.log(1.0 / a)


def sequence_sum(seq: CoefficientSequence, kind: str, p: float = 2.0, label: str = "",
                 prefix: int = 100000) -> SeriesValue:
    """sum_{c_n != 0} |c_n|^p (kind='pow') or |c_n|^2 log(1/|c_n|) (kind='log')."""
    g = _g(kind, p)

    def terms(start, stop):
        a = np.abs(seq.values(start, stop))
        out = np.zeros(a.shape)
        nz = a > 0
        out[nz] = g(a[nz])
        return out

    if seq.kind == "finite-list":
        out = accumulate(terms, lambda M: 0.0, seq.length)
        out.witness = {"sequence": label, "note": "finite support"}
        return out
    verdict = seq.converges(kind, p)
    if kind == "pow":
        tail = lambda M: seq.tail_moment(p, 0, M)
    else:
        tail = _log_tail(seq)
    out = accumulate(terms, tail, None, DEFAULT_TOL, prefix)
    out.witness = {"sequence": label, "rule": seq.name}
    if verdict is True:
        if not math.isfinite(out.tail_bound):
            out.verdict = CONVERGES
            out.witness["note"] = "analytic criterion; explicit tail bound unavailable"
    elif verdict is False:
        out.verdict = DIVERGES
        out.tail_bound = INF
        out.witness["lower_bound"] = ("integral test on the exact rule: partial sums dominate "
                                      "a divergent integral of the envelope")
        out.witness["threshold"] = DIVERGENCE_THRESHOLD
        n_thr = _terms_to_threshold(seq, kind, p)
        if n_thr is not None:
            out.witness["log10_terms_to_threshold"] = n_thr
    else:
        out.verdict = CONVERGES if math.isfinite(out.tail_bound) else INCONCLUSIVE
    return out


def _log_tail(seq):
    # t^2 log(1/t) <= t^(2-e)/(e*eps) for 0 < t <= 1
    def tail(M):
        best = INF
        for eps in (0.5, 0.25, 0.1, 0.05, 0.01):
            t = seq.tail_moment(2 - eps, 0, M)
            if math.isfinite(t):
                best = min(best, t / (math.e * eps))
        return best
    return tail


def _terms_to_threshold(seq, kind, p) -> Optional[float]:
    """log10 of the index where the integral lower bound passes the threshold (power rules)."""
    if seq.name != "power" or kind != "pow":
        return None
    s = float(seq.params["exponent"])
    C = abs(complex(seq.params.get("scale", 1.0))) if not isinstance(
        seq.params.get("scale"), list) else abs(complex(*seq.params["scale"]))
    a = p * s
    target = DIVERGENCE_THRESHOLD / C ** p
    # int_1^{N+1} x^{-a} dx >= target
    if a == 1:
        return target / math.log(10)
    return math.log10(target * (1 - a) + 1) / (1 - a)


def _combine(parts, mode="all") -> str:
    v = [p.verdict for p in parts]
    if mode == "any":
        if CONVERGES in v:
            return CONVERGES
        if all(x == DIVERGES for x in v):
            return DIVERGES
        return INCONCLUSIVE
    if DIVERGES in v:
        return DIVERGES
    if all(x == CONVERGES for x in v):
        return CONVERGES
    return INCONCLUSIVE


def check_summability(spec: OperatorSpec, condition) -> SummabilityReport:
    """Verdict for one of FJKP-2/3, FX-1, GG-either, LOG or ('PQ', p, q).

    For rank N every u_k and v_k is checked; zero coefficients are skipped, so
    the LOG summand vanishes off the support.
    """
    if isinstance(condition, (tuple, list)) and condition[0] == "PQ":
        _, p, q = condition
        name = f"PQ({p},{q})"
        parts = []
        for k, (u, v) in enumerate(spec.perturbations, start=1):
            parts += [sequence_sum(u, "pow", p, f"u_{k}"), sequence_sum(v, "pow", q, f"v_{k}")]
        return SummabilityReport(name, _combine(parts), {"p": p, "q": q}, parts)
    if condition == "LOG":
        parts = []
        for k, (u, v) in enumerate(spec.perturbations, start=1):
            parts += [sequence_sum(u, "log", 2, f"u_{k}"), sequence_sum(v, "log", 2, f"v_{k}")]
        return SummabilityReport("LOG", _combine(parts), {}, parts)
    if condition in ("FJKP-2/3", "FX-1"):
        p = 2 / 3 if condition == "FJKP-2/3" else 1.0
        parts = []
        for k, (u, v) in enumerate(spec.perturbations, start=1):
            parts += [sequence_sum(u, "pow", p, f"u_{k}"), sequence_sum(v, "pow", p, f"v_{k}")]
        return SummabilityReport(condition, _combine(parts), {"p": p}, parts)
    if condition == "GG-either":
        per_k, parts = [], []
        for k, (u, v) in enumerate(spec.perturbations, start=1):
            pu, pv = sequence_sum(u, "pow", 1.0, f"u_{k}"), sequence_sum(v, "pow", 1.0, f"v_{k}")
            parts += [pu, pv]
            per_k.append(SeriesValue(0, 0, INF, _combine([pu, pv], "any")))
        return SummabilityReport("GG-either", _combine(per_k), {"p": 1.0}, parts)
    raise ValueError(f"unknown condition {condition!r}")


REGION_ORDER = ("FJKP", "FX", "GG", "MAIN", "UNCOVERED")


def theorem_region_membership(p: float, q: float) -> str:
    """Strongest theorem covering sum |alpha|^p + |beta|^q < inf."""
    if not (0 < p <= 2 and 0 < q <= 2):
        raise ValueError(f"(p, q) = ({p}, {q}) outside (0, 2] x (0, 2]")
    if p <= 2 / 3 and q <= 2 / 3:
        return "FJKP"
    if p <= 1 and q <= 1:
        return "FX"
    if (q <= 1) or (p <= 1):
        return "GG"
    if (p == 2 and q > 1) or (q == 2 and p > 1):
        return "UNCOVERED"
    return "MAIN"
