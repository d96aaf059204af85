"""Coefficient and diagonal sequences, either finite lists or index rules.

Indices are 1-based throughout, matching e_1, e_2, ... .  A rule-generated
coefficient sequence must carry a tail majorant: a callable bounding
``sum_{n>M} n**j * |c_n|**p``.  That bound is what turns a partial sum into a
certified value.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc, zeta

INF = math.inf


class SpecError(ValueError):
    """Invalid operator data."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x))


# ---------------------------------------------------------------------------
# coefficient sequences
# ---------------------------------------------------------------------------


class CoefficientSequence:
    kind = "abstract"
    name = "abstract"
    length: Optional[int] = None
    decay_class: Optional[dict] = None

    def values(self, start: int, stop: int) -> np.ndarray:
        """Coefficients c_n for start <= n < stop (1-based)."""
        raise NotImplementedError

    def tail_moment(self, p: float, j: float, M: int) -> float:
        """Upper bound for sum_{n>M} n**j |c_n|**p (``inf`` when unavailable)."""
        raise NotImplementedError

    def converges(self, kind: str, p: float = 2.0) -> Optional[bool]:
        """Analytic verdict for sum |c_n|**p (kind='pow') or sum |c|^2 log(1/|c|) (kind='log')."""
        return None

    def scaled(self, s: complex) -> "CoefficientSequence":
        raise NotImplementedError

    def to_doc(self) -> dict:
        raise NotImplementedError

    def declare_decay(self, decay: dict, depth: int = 4096) -> "CoefficientSequence":
        """Attach |c_n| <= C n^-s and check it on the materialized terms."""
        try:
            s_exp = float(decay["power"])
            const = float(decay.get("constant", 1.0))
        except (KeyError, TypeError, ValueError):
            raise SpecError("decay_class needs a numeric 'power' (and optional 'constant')") from None
        if not (s_exp > 0 and const > 0 and math.isfinite(s_exp) and math.isfinite(const)):
            raise SpecError("decay_class power and constant must be positive and finite")
        stop = depth + 1 if self.length is None else self.length + 1
        n = np.arange(1, stop, dtype=float)
        a = np.abs(self.values(1, stop))
        bad = np.nonzero(a > const * n ** -s_exp * (1 + 1e-12))[0]
        if bad.size:
            k = int(bad[0]) + 1
            raise SpecError(f"decay_class violated at n={k}: |c_n|={a[k - 1]:.6g}")
        self.decay_class = {"power": s_exp, "constant": const}
        return self

    def _with_decay(self, doc: dict) -> dict:
        if self.decay_class is not None:
            doc["decay_class"] = dict(self.decay_class)
        return doc

    def probe_nonzero(self, depth: int = 4096) -> bool:
        stop = depth + 1 if self.length is None else min(self.length, depth) + 1
        return bool(np.any(self.values(1, stop) != 0))


class FiniteCoefficients(CoefficientSequence):
    kind = "finite-list"
    name = "finite"

    def __init__(self, values):
        arr = np.asarray(values, dtype=complex).ravel()
        if not np.all(np.isfinite(arr)):
            raise SpecError("coefficient list contains non-finite values")
        arr.setflags(write=False)
        self.data = arr
        self.length = arr.size

    def values(self, start, stop):
        out = np.zeros(max(stop - start, 0), dtype=complex)
        lo, hi = max(start, 1), min(stop, self.length + 1)
        if hi > lo:
            out[lo - start:hi - start] = self.data[lo - 1:hi - 1]
        return out

    def tail_moment(self, p, j, M):
        if M >= self.length:
            return 0.0
        n = np.arange(M + 1, self.length + 1, dtype=float)
        a = np.abs(self.data[M:])
        mask = a > 0
        return float(np.sum(n[mask] ** j * a[mask] ** p))

    def converges(self, kind, p=2.0):
        return True

    def scaled(self, s):
        return FiniteCoefficients(self.data * s)

    def to_doc(self):
        return self._with_decay({"kind": "finite-list",
                                 "values": [[float(z.real), float(z.imag)] for z in self.data]})


def _scale_doc(s: complex):
    s = complex(s)
    return s.real if s.imag == 0 else [s.real, s.imag]


def _scale_from_doc(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


class RuleCoefficients(CoefficientSequence):
    """Rule-generated coefficients c_n = fn(n) with a tail majorant."""

    kind = "rule-generated"

    def __init__(self, name: str, fn: Callable[[np.ndarray], np.ndarray],
                 tail: Optional[Callable[[float, float, int], float]],
                 params: Optional[dict] = None,
                 criterion: Optional[Callable[[str, float], Optional[bool]]] = None,
                 exact_envelope: bool = False):
        self.name = name
        self.fn = fn
        self.tail = tail
        self.params = dict(params or {})
        self.criterion = criterion
        self.exact_envelope = exact_envelope

    def values(self, start, stop):
        if stop <= start:
            return np.zeros(0, dtype=complex)
        n = np.arange(start, stop, dtype=np.int64)
        return np.asarray(self.fn(n), dtype=complex)

    def tail_moment(self, p, j, M):
        if self.tail is None:
            return INF
        return float(self.tail(p, j, M))

    def converges(self, kind, p=2.0):
        if self.criterion is None:
            return None
        verdict = self.criterion(kind, p)
        if verdict is False and not self.exact_envelope:
            return None
        return verdict

    def scaled(self, s):
        if self.name in COEFF_RULES:
            params = dict(self.params)
            params["scale"] = _scale_doc(_scale_from_doc(params.get("scale", 1.0)) * s)
            return coefficient_rule(self.name, params)
        fn, tail = self.fn, self.tail
        a = abs(s)
        return RuleCoefficients(
            self.name, lambda n: s * fn(n),
            None if tail is None else (lambda p, j, M: a ** p * tail(p, j, M)),
            self.params, self.criterion, self.exact_envelope)

    def to_doc(self):
        if self.name not in COEFF_RULES:
            raise SpecError(f"custom rule {self.name!r} cannot be serialized")
        return self._with_decay({"kind": "rule-generated",
                                 "rule": {"name": self.name, "params": dict(self.params)}})


def _geometric_moment(q: float, j: float, M: int) -> float:
    """Bound for sum_{n>M} n**j q**n with 0 <= q < 1."""
    if q == 0:
        return 0.0
    if j == 0:
        return q ** (M + 1) / (1 - q)
    k = -math.log(q)
    # n^j q^n decreases for n >= j/k
    n0 = max(M + 1, math.ceil(j / k) + 1)
    head = sum(n ** j * q ** n for n in range(M + 1, n0))
    integral = gamma_fn(j + 1) * gammaincc(j + 1, k * n0) / k ** (j + 1)
    return head + n0 ** j * q ** n0 + integral


def _geometric(params):
    ratio = _scale_from_doc(params["ratio"])
    scale = _scale_from_doc(params.get("scale", 1.0))
    r = abs(ratio)
    if r >= 1:
        raise SpecError(f"geometric coefficients need |ratio| < 1, got {ratio}")

    def fn(n):
        return scale * ratio ** n.astype(float)

    def tail(p, j, M):
        return abs(scale) ** p * _geometric_moment(r ** p, j, M)

    return RuleCoefficients("geometric", fn, tail, params,
                            lambda kind, p: True, exact_envelope=True)


def _power(params):
    s = float(params["exponent"])
    scale = _scale_from_doc(params.get("scale", 1.0))
    if 2 * s <= 1:
        raise SpecError(f"power coefficients need exponent > 1/2 for l2, got {s}")

    def fn(n):
        return scale * n.astype(float) ** (-s)

    def tail(p, j, M):
        a = p * s - j
        if a <= 1:
            return INF
        return abs(scale) ** p * float(zeta(a, M + 1))

    def criterion(kind, p):
        return p * s > 1 if kind == "pow" else 2 * s > 1

    return RuleCoefficients("power", fn, tail, params, criterion, exact_envelope=True)


def _logpower(params):
    s = float(params["exponent"])
    t = float(params.get("log_exponent", 0.0))
    scale = _scale_from_doc(params.get("scale", 1.0))
    if t < 0 or not (2 * s > 1 or (2 * s == 1 and 2 * t > 1)):
        raise SpecError("logpower coefficients are not square summable")

    def fn(n):
        x = n.astype(float)
        return scale * x ** (-s) * np.log(x + 1) ** (-t)

    def tail(p, j, M):
        a = p * s - j
        c = abs(scale) ** p
        if a > 1:
            return c * math.log(M + 2) ** (-p * t) * float(zeta(a, M + 1))
        if a == 1 and p * t > 1:
            n0 = max(M + 1, 2)
            head = sum(n ** (-1.0) * math.log(n + 1) ** (-p * t) for n in range(M + 1, n0 + 1))
            return c * (head + math.log(n0) ** (1 - p * t) / (p * t - 1))
        return INF

    def criterion(kind, p):
        if kind == "pow":
            return p * s > 1 or (p * s == 1 and p * t > 1)
        return 2 * s > 1 or (2 * s == 1 and t > 1)

    return RuleCoefficients("logpower", fn, tail, params, criterion, exact_envelope=True)


def dyadic_level(n: np.ndarray) -> np.ndarray:
    """Level m with n in S_m = {2^m, ..., 2^{m+1}-1}."""
    n = np.asarray(n, dtype=np.int64)
    m = np.floor(np.log2(n.astype(float))).astype(np.int64)
    # repair float rounding at powers of two
    m = np.where((np.int64(1) << (m + 1)) <= n, m + 1, m)
    m = np.where((np.int64(1) << m) > n, m - 1, m)
    return m


def gamma_values(m: np.ndarray) -> np.ndarray:
    """gamma_0 = gamma_1 = 0 and gamma_m = 1/(2^{m/2} sqrt(m) log m)."""
    m = np.asarray(m, dtype=float)
    out = np.zeros_like(m)
    ok = m >= 2
    mm = m[ok]
    out[ok] = 1.0 / (2.0 ** (mm / 2) * np.sqrt(mm) * np.log(mm))
    return out


def _gamma_scalar(m: int) -> float:
    if m < 2:
        return 0.0
    return 1.0 / (2.0 ** (m / 2) * math.sqrt(m) * math.log(m))


def _dyadic_coeff(params):
    scale = _scale_from_doc(params.get("scale", 1.0))

    def fn(n):
        return scale * gamma_values(dyadic_level(n))

    def tail(p, j, M):
        c = abs(scale) ** p
        m0 = int(dyadic_level(np.array([M + 1]))[0])
        # remaining terms of level m0, each bounded by gamma_{m0}^p (2^{m0+1})^j
        rest = (2 ** (m0 + 1) - (M + 1)) * _gamma_scalar(m0) ** p * 2.0 ** ((m0 + 1) * j)
        m1 = max(m0 + 1, 2)
        kappa = 1 + j - p / 2
        lead = 2.0 ** j * m1 ** (-p / 2) * math.log(m1) ** (-p)
        if kappa > 0:
            return INF
        if kappa < 0:
            more = lead * 2.0 ** (kappa * m1) / (1 - 2.0 ** kappa)
        elif p / 2 > 1:
            more = 2.0 ** j * math.log(m1) ** (-p) * float(zeta(p / 2, m1))
        elif p / 2 == 1:
            # sum_{m>=m1} 1/(m log^2 m) <= f(m1) + 1/log(m1)
            more = 2.0 ** j * (1 / (m1 * math.log(m1) ** 2) + 1 / math.log(m1))
        else:
            return INF
        return c * (rest + more)

    def criterion(kind, p):
        if kind == "pow":
            return p >= 2
        return False

    return RuleCoefficients("dyadic_section3", fn, tail, params, criterion, exact_envelope=True)


COEFF_RULES = {
    "geometric": _geometric,
    "power": _power,
    "logpower": _logpower,
    "dyadic_section3": _dyadic_coeff,
}


def coefficient_rule(name: str, params: Optional[dict] = None) -> RuleCoefficients:
    if name not in COEFF_RULES:
        raise SpecError(f"unknown coefficient rule {name!r}")
    return COEFF_RULES[name](dict(params or {}))


# ---------------------------------------------------------------------------
# diagonal sequences
# ---------------------------------------------------------------------------


class DiagonalSequence:
    """Bounded sequence (lambda_n).

    ``box`` is an axis-aligned rectangle containing every term (hence the
    closure of the sequence).  ``re_separation(x)`` returns ``(c, j)`` with
    ``|Re lambda_n - x| >= 1/(c n^j)`` for every n whose real part differs from
    x, or ``None`` when no such bound is known.
    """

    kind = "abstract"
    name = "abstract"
    length: Optional[int] = None
    bound: float = 0.0
    box: tuple = (0.0, 0.0, 0.0, 0.0)
    exact_equality = True

    def values(self, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def re_separation(self, x: Fraction):
        return None

    def re_hits(self, x: Fraction) -> list:
        """Indices n with Re lambda_n == x (within the materialized range for lists)."""
        return []

    def hits(self, z: complex) -> list:
        return [n for n in self.re_hits(as_fraction(complex(z).real))
                if self.values(n, n + 1)[0] == complex(z)]

    def to_doc(self) -> dict:
        raise NotImplementedError

    def affine(self, s: Fraction, t: complex) -> "DiagonalSequence":
        return AffineDiagonal(self, s, t)

    def conjugate(self) -> "DiagonalSequence":
        return ConjugateDiagonal(self)

    def box_distance(self, z: complex) -> float:
        xmin, xmax, ymin, ymax = self.box
        dx = max(xmin - z.real, 0.0, z.real - xmax)
        dy = max(ymin - z.imag, 0.0, z.imag - ymax)
        return math.hypot(dx, dy)

    def re_distance(self, x: float) -> float:
        xmin, xmax = self.box[0], self.box[1]
        return max(xmin - x, 0.0, x - xmax)


def _sep_from_head(head_re: np.ndarray, x: float, floor: float):
    """(c, 0) from explicit head distances and a floor valid beyond the head."""
    d = np.abs(head_re - x)
    d = d[d > 0]
    m = min(float(d.min()) if d.size else INF, floor)
    if not m > 0 or not math.isfinite(1 / m):
        return None
    return (1.0 / m, 0.0)


class FiniteDiagonal(DiagonalSequence):
    kind = "finite-list"
    name = "finite"
    exact_equality = False

    def __init__(self, values):
        arr = np.asarray(values, dtype=complex).ravel()
        if arr.size == 0:
            raise SpecError("empty diagonal")
        if not np.all(np.isfinite(arr)):
            raise SpecError("unbounded diagonal: non-finite entries")
        arr.setflags(write=False)
        self.data = arr
        self.length = arr.size
        self.bound = float(np.max(np.abs(arr)))
        self.box = (float(arr.real.min()), float(arr.real.max()),
                    float(arr.imag.min()), float(arr.imag.max()))

    def values(self, start, stop):
        if start < 1 or stop > self.length + 1:
            raise IndexError("finite diagonal index out of range")
        return self.data[start - 1:stop - 1]

    def re_separation(self, x):
        return _sep_from_head(self.data.real, float(x), INF)

    def re_hits(self, x):
        return [int(n) + 1 for n in np.nonzero(self.data.real == float(x))[0]]

    def hits(self, z):
        return [int(n) + 1 for n in np.nonzero(self.data == complex(z))[0]]

    def to_doc(self):
        return {"kind": "finite-list",
                "values": [[float(z.real), float(z.imag)] for z in self.data]}


class RuleDiagonal(DiagonalSequence):
    kind = "rule-generated"

    def __init__(self, name, params, fn, bound, box, sep=None, re_hits=None):
        self.name = name
        self.params = dict(params)
        self.fn = fn
        self.bound = bound
        self.box = box
        self._sep = sep
        self._re_hits = re_hits

    def values(self, start, stop):
        n = np.arange(start, stop, dtype=np.int64)
        return np.asarray(self.fn(n), dtype=complex)

    def re_separation(self, x):
        x = as_fraction(x)
        d = self.re_distance(float(x))
        if d > 0:
            return (1.0 / d, 0.0)
        return None if self._sep is None else self._sep(x)

    def re_hits(self, x):
        return [] if self._re_hits is None else self._re_hits(as_fraction(x))

    def to_doc(self):
        return {"kind": "rule-generated", "rule": {"name": self.name, "params": dict(self.params)}}


def dyadic_r_float(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=np.int64)
    m = dyadic_level(n)
    k = n - (np.int64(1) << m)
    return -1.0 + (2 * k + 1).astype(float) / (2.0 ** m)


def _dyadic_diag(params):
    def sep(x):
        # r_n - x = integer / (2^m den); nonzero => >= 1/(2^m den) >= 1/(n den)
        return (float(x.denominator), 1.0)

    def hits(x):
        y = x + 1
        if not (0 < y < 2):
            return []
        den = y.denominator
        if den & (den - 1):
            return []
        m = den.bit_length() - 1
        k = (y.numerator - 1) // 2
        return [(1 << m) + k]

    return RuleDiagonal("dyadic_section3", params, dyadic_r_float, 1.0,
                        (-1.0, 1.0, 0.0, 0.0), sep, hits)


def _decaying_sep(fn, env_inv, cap=10 ** 7):
    """Separation for sequences with |lambda_n| <= env(n) -> 0.

    ``env_inv(eps)`` is an index beyond which |lambda_n| <= eps.
    """
    def sep(x):
        xf = float(x)
        if xf == 0:
            return None
        n0 = env_inv(abs(xf) / 2)
        if n0 > cap:
            return None
        head = fn(np.arange(1, n0 + 1, dtype=np.int64)).real if n0 >= 1 else np.zeros(0)
        return _sep_from_head(np.asarray(head, dtype=float), xf, abs(xf) / 2)

    def hits(x):
        xf = float(x)
        if xf == 0:
            return []
        n0 = min(env_inv(abs(xf) / 2), cap)
        head = fn(np.arange(1, n0 + 1, dtype=np.int64)).real
        return [int(i) + 1 for i in np.nonzero(np.asarray(head) == xf)[0]]

    return sep, hits


def _power_diag(params):
    s = float(params["exponent"])
    if s < 0:
        raise SpecError("unbounded diagonal: power exponent must be >= 0")

    def fn(n):
        return n.astype(float) ** (-s)

    if s == 0:
        return RuleDiagonal("power", params, fn, 1.0, (1.0, 1.0, 0.0, 0.0))

    def env_inv(eps):
        return int(math.ceil(eps ** (-1.0 / s))) + 1

    dsep, hits = _decaying_sep(fn, env_inv)

    def sep(x):
        if x <= 0:
            return (1.0, s)   # n^{-s} - x >= n^{-s}
        return dsep(x)

    return RuleDiagonal("power", params, fn, 1.0, (0.0, 1.0, 0.0, 0.0), sep, hits)


def _geometric_diag(params):
    ratio = _scale_from_doc(params["ratio"])
    r = abs(ratio)
    if r > 1:
        raise SpecError(f"unbounded diagonal: geometric ratio {ratio} has modulus > 1")

    def fn(n):
        return ratio ** n.astype(float)

    if r == 1 or r == 0:
        return RuleDiagonal("geometric", params, fn, r, (-r, r, -r, r))

    def env_inv(eps):
        return int(math.ceil(math.log(eps) / math.log(r))) + 1

    sep, hits = _decaying_sep(fn, env_inv)
    if ratio.imag == 0:
        box = (min(0.0, ratio.real), max(r * r, ratio.real), 0.0, 0.0)
    else:
        box = (-r, r, -r, r)
    return RuleDiagonal("geometric", params, fn, r, box, sep, hits)


DIAG_RULES = {
    "dyadic_section3": _dyadic_diag,
    "power": _power_diag,
    "geometric": _geometric_diag,
}


def diagonal_rule(name: str, params: Optional[dict] = None) -> RuleDiagonal:
    if name not in DIAG_RULES:
        raise SpecError(f"unknown diagonal rule {name!r}")
    return DIAG_RULES[name](dict(params or {}))


class AffineDiagonal(DiagonalSequence):
    """lambda_n -> s*lambda_n + t with rational s > 0 and rational Re t."""

    def __init__(self, inner: DiagonalSequence, s, t):
        self.inner = inner
        self.s = as_fraction(s)
        if self.s <= 0:
            raise SpecError("affine scale must be positive")
        t = complex(t)
        self.t_re = as_fraction(t.real)
        self.t = complex(float(self.t_re), t.imag)
        self.kind = inner.kind
        self.name = inner.name
        self.length = inner.length
        self.exact_equality = inner.exact_equality
        sf = float(self.s)
        xmin, xmax, ymin, ymax = inner.box
        self.box = (sf * xmin + self.t.real, sf * xmax + self.t.real,
                    sf * ymin + self.t.imag, sf * ymax + self.t.imag)
        self.bound = sf * inner.bound + abs(self.t)

    def values(self, start, stop):
        return float(self.s) * self.inner.values(start, stop) + self.t

    def _back(self, x):
        return (as_fraction(x) - self.t_re) / self.s

    def re_separation(self, x):
        d = self.re_distance(float(x))
        if d > 0:
            return (1.0 / d, 0.0)
        sep = self.inner.re_separation(self._back(x))
        if sep is None:
            return None
        return (sep[0] / float(self.s), sep[1])

    def re_hits(self, x):
        return self.inner.re_hits(self._back(x))

    def hits(self, z):
        z = complex(z)
        return self.inner.hits((z - self.t) / float(self.s)) if self.kind != "finite-list" \
            else [n for n in range(1, self.length + 1) if self.values(n, n + 1)[0] == z]

    def to_doc(self):
        doc = self.inner.to_doc()
        doc["affine"] = {"s": [self.s.numerator, self.s.denominator],
                         "t": [float(self.t_re), self.t.imag]}
        return doc


class ConjugateDiagonal(DiagonalSequence):
    def __init__(self, inner: DiagonalSequence):
        self.inner = inner
        self.kind = inner.kind
        self.name = inner.name
        self.length = inner.length
        self.bound = inner.bound
        self.exact_equality = inner.exact_equality
        xmin, xmax, ymin, ymax = inner.box
        self.box = (xmin, xmax, -ymax, -ymin)

    def values(self, start, stop):
        return np.conj(self.inner.values(start, stop))

    def re_separation(self, x):
        return self.inner.re_separation(x)

    def re_hits(self, x):
        return self.inner.re_hits(x)

    def hits(self, z):
        return self.inner.hits(np.conj(complex(z)))

    def conjugate(self):
        return self.inner

    def to_doc(self):
        doc = self.inner.to_doc()
        doc["conjugate"] = True
        return doc


def diagonal_from_doc(doc: dict) -> DiagonalSequence:
    kind = doc.get("kind")
    if kind == "finite-list":
        d = FiniteDiagonal(_pairs(doc["values"]))
    elif kind == "rule-generated":
        rule = doc["rule"]
        d = diagonal_rule(rule["name"], rule.get("params", {}))
    else:
        raise SpecError(f"unknown diagonal kind {kind!r}")
    if "affine" in doc:
        s = doc["affine"]["s"]
        t = doc["affine"]["t"]
        d = d.affine(Fraction(s[0], s[1]), complex(t[0], t[1]))
    if doc.get("conjugate"):
        d = d.conjugate()
    return d


def coefficients_from_doc(doc: dict) -> CoefficientSequence:
    kind = doc.get("kind")
    if kind == "finite-list":
        seq = FiniteCoefficients(_pairs(doc["values"]))
    elif kind == "rule-generated":
        rule = doc["rule"]
        seq = coefficient_rule(rule["name"], rule.get("params", {}))
    else:
        raise SpecError(f"unknown coefficient kind {kind!r}")
    if doc.get("decay_class") is not None:
        seq.declare_decay(doc["decay_class"])
    return seq


def _pairs(values) -> np.ndarray:
    try:
        return np.array([complex(float(a), float(b)) for a, b in values], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"values must be [re, im] pairs: {exc}") from None
