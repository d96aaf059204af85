"""Dyadic sequence r_n with level coefficients gamma_m.

Levels S_m = {2^m + k : 0 <= k < 2^m}; r_{2^m+k} = -1 + 2^{-m} + k 2^{1-m} and
alpha_n = gamma_m on S_m.  The weighted sum phi(x) = sum |alpha_n|^2/|r_n - x|
diverges at every x in (-1, 1) although alpha is square summable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq
from scipy.special import expi

from .operator import OperatorSpec, build_operator_spec
from .sequences import as_fraction, coefficient_rule, diagonal_rule

LOG2 = math.log(2.0)


def dyadic_r(n: int) -> Fraction:
    if n < 1:
        raise ValueError("n must be >= 1")
    m = n.bit_length() - 1
    k = n - (1 << m)
    return Fraction(-1) + Fraction(1, 1 << m) + Fraction(k, 1 << m) * 2


def gamma_coeff(m: int) -> float:
    """gamma_0 = gamma_1 = 0, gamma_m = 1/(2^{m/2} sqrt(m) ln m)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m < 2:
        return 0.0
    # 2^{-m/2} as an exact power of two times sqrt(1/2) for odd m
    half = math.ldexp(1.0, -(m // 2)) * (math.sqrt(0.5) if m % 2 else 1.0)
    return half / (math.sqrt(m) * math.log(m))


def level_values(m: int) -> np.ndarray:
    """Floating r_n for n in S_m (exact for m <= 52)."""
    k = np.arange(1 << m, dtype=np.float64)
    return -1.0 + (2.0 * k + 1.0) / 2.0 ** m


def verify_l2_vs_divergence(max_level: int) -> dict:
    """Level table of sum 2^m gamma_m^2 (bounded) and sum m 2^m gamma_m^2 (unbounded)."""
    if max_level < 3:
        raise ValueError("max_level must be >= 3")
    rows, s1, s2, crossed = [], [], [], None
    # sum_{m>=2} 1/(m ln^2 m) <= 1/(2 ln^2 2) + int_2^inf dx/(x ln^2 x)
    bound = 1 / (2 * LOG2 ** 2) + 1 / LOG2
    for m in range(max_level + 1):
        g2 = gamma_coeff(m) ** 2
        s1.append(2.0 ** m * g2)
        s2.append(m * 2.0 ** m * g2)
        p1, p2 = math.fsum(s1), math.fsum(s2)
        if crossed is None and p2 >= 10.0:
            crossed = m
        rows.append({"level": m, "l2_partial": p1, "weighted_partial": p2,
                     "weighted_increment": s2[-1]})
    if crossed is None:
        # increments 1/ln^2 m: keep going analytically until the threshold is met
        m, p2 = max_level, math.fsum(s2)
        while p2 < 10.0:
            m += 1
            p2 += 1 / math.log(m) ** 2
        crossed = m
    return {"rows": rows, "l2_certified_bound": bound,
            "l2_tail_bound": 1 / math.log(max_level),
            "weighted_threshold": 10.0, "weighted_threshold_level": crossed,
            "note": "weighted increments equal 1/ln^2 m and sum_m 1/ln^2 m diverges"}


def first_level(x) -> int:
    """Smallest m with -1 + 2^{-m} < -|x|."""
    y = -abs(as_fraction(x))
    m = 0
    while Fraction(-1) + Fraction(1, 1 << m) >= y:
        m += 1
    return m


def k0(m: int, x) -> int:
    """Bracket r_{2^m+k0-1} <= y < r_{2^m+k0} for y = -|x|."""
    y = -abs(as_fraction(x))
    return math.floor((y + 1 - Fraction(1, 1 << m)) * (1 << (m - 1))) + 1


def lower_bound_increment(m: int) -> float:
    """ln 2 * gamma_m^2 2^{m-1} (m-1) = ln 2 (m-1)/(2 m ln^2 m)."""
    if m < 2:
        return 0.0
    return LOG2 * (m - 1) / (2 * m * math.log(m) ** 2)


def _antiderivative(x: float) -> float:
    # d/dx = (x-1)/(x ln^2 x)
    lx = math.log(x)
    return float(expi(lx)) - x / lx + 1 / lx


def chain_sum_lower(start: int, stop: int) -> float:
    """Lower bound for sum_{m=start}^{stop} lower_bound_increment(m), start >= 3 (integral test)."""
    if stop < start:
        return 0.0
    return LOG2 / 2 * (_antiderivative(stop + 1.0) - _antiderivative(float(start)))


def chain_threshold_level(x, threshold: float, scale_sq: float = 1.0) -> int:
    """A level L with scale_sq * sum_{m=N}^{L} increments >= threshold."""
    n = max(first_level(x), 3)
    target = threshold / scale_sq
    if target <= 0:
        return n
    hi = 10.0 * n
    while chain_sum_lower(n, int(hi)) < target:
        hi *= 10
    level = brentq(lambda L: chain_sum_lower(n, L) - target, n, hi)
    return int(math.ceil(level)) + 1


@dataclass
class DivergenceWitness:
    x: float
    levels: int
    partial_sum: float
    lower_bound: float
    first_level: int
    k0_trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    status: str = "ok"

    @property
    def holds(self) -> bool:
        return self.partial_sum >= self.lower_bound

    def to_doc(self):
        return {"x": self.x, "levels": self.levels, "partial_sum": self.partial_sum,
                "lower_bound": self.lower_bound, "first_level": self.first_level,
                "k0_trace": [list(t) for t in self.k0_trace], "status": self.status,
                "rows": self.rows}


def phi_partial(x: float, max_level: int) -> DivergenceWitness:
    """Exact level sums of phi(x) and the lower-bound chain, level by level."""
    xf = float(x)
    if not -1 < xf < 1:
        raise ValueError("x must lie in (-1, 1)")
    n_first = first_level(xf)
    level_sums, lb_incs, rows, trace = [], [], [], []
    status = "ok"
    for m in range(max_level + 1):
        g = gamma_coeff(m)
        if g == 0:
            s = 0.0
        else:
            d = np.abs(level_values(m) - xf)
            if np.any(d == 0):
                status = f"exact hit: x = r_n at level {m} with nonzero coefficient"
                level_sums.append(math.inf)
                rows.append({"level": m, "phi_partial": math.inf, "lower_bound": math.fsum(lb_incs)})
                break
            s = g * g * float(np.sum(1.0 / d))
        level_sums.append(s)
        inc = lower_bound_increment(m) if m >= n_first else 0.0
        if m >= n_first and m >= 1:
            trace.append((m, k0(m, xf)))
        lb_incs.append(inc)
        rows.append({"level": m, "phi_partial": math.fsum(level_sums),
                     "lower_bound": math.fsum(lb_incs), "level_sum": s,
                     "level_bound": inc})
    if n_first > max_level:
        status = "insufficient depth"
    total = math.fsum(level_sums)
    return DivergenceWitness(xf, max_level, total, math.fsum(lb_incs), n_first,
                             trace, rows, status)


def lower_bound_growth(target: float = 3.0, x: float = 0.0, max_level: int = 100000) -> dict:
    """First level where the partial sums of the lower bound at x exceed target."""
    n = first_level(x)
    acc = []
    for m in range(n, max_level + 1):
        acc.append(lower_bound_increment(m))
        if math.fsum(acc) > target:
            return {"target": target, "level": m, "value": math.fsum(acc)}
    return {"target": target, "level": None, "value": math.fsum(acc)}


def section3_spec(max_level: int = 20) -> OperatorSpec:
    """Lambda = (r_n), u = v = (alpha_n)."""
    if max_level < 2:
        raise ValueError("max_level must be >= 2")
    alpha = coefficient_rule("dyadic_section3")
    return build_operator_spec(diagonal_rule("dyadic_section3"), [(alpha, alpha)])


def growth_table(x: float, levels: int) -> list:
    """Rows (level, phi partial, lower bound) for CSV output."""
    w = phi_partial(x, levels)
    return [(r["level"], r["phi_partial"], r["lower_bound"]) for r in w.rows]
