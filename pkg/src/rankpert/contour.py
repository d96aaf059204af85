"""Chord-plus-arc curves, inverse-distance integrals and the subspace hypotheses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from . import series as sr
from .operator import OperatorSpec, build_operator_spec
from .sequences import INF, as_fraction

CLOSE_TOL = 1e-12
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class CurveError(ValueError):
    """A point lies on the curve (pole of an inverse-distance or resolvent integral)."""


# ---------------------------------------------------------------------------
# pieces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    z0: complex
    z1: complex

    @property
    def start(self):
        return self.z0

    @property
    def end(self):
        return self.z1

    @property
    def length(self):
        return abs(self.z1 - self.z0)

    def point(self, t):
        return self.z0 + np.asarray(t) * (self.z1 - self.z0)

    def gauss(self, n):
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (self.z1 - self.z0)
        return self.z0 + (x + 1) * half, w * half

    def distance(self, z):
        z = np.asarray(z, dtype=complex)
        d = self.z1 - self.z0
        t = np.clip(((z - self.z0) * np.conj(d)).real / abs(d) ** 2, 0, 1)
        return np.abs(z - (self.z0 + t * d))

    def inverse_distance(self, lam):
        """int |dxi| / |lam - xi| over the segment, closed form."""
        lam = np.asarray(lam, dtype=complex)
        d = self.z1 - self.z0
        L = abs(d)
        mid = 0.5 * (self.z0 + self.z1)
        # rotate so the segment runs along the imaginary axis, centered at 0
        w = (lam - mid) * (1j * np.conj(d) / L)
        return chord_integral(np.abs(w.real), w.imag, 0.5 * L)

    def winding_angle(self, p):
        return float(np.angle((self.z1 - p) / (self.z0 - p)))

    def to_doc(self):
        return {"type": "segment", "start": [self.z0.real, self.z0.imag],
                "end": [self.z1.real, self.z1.imag]}


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    theta0: float
    theta1: float

    @property
    def start(self):
        return self.center + self.radius * complex(math.cos(self.theta0), math.sin(self.theta0))

    @property
    def end(self):
        return self.center + self.radius * complex(math.cos(self.theta1), math.sin(self.theta1))

    @property
    def length(self):
        return self.radius * abs(self.theta1 - self.theta0)

    def point(self, t):
        th = self.theta0 + np.asarray(t) * (self.theta1 - self.theta0)
        return self.center + self.radius * np.exp(1j * th)

    def gauss(self, n):
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (self.theta1 - self.theta0)
        th = self.theta0 + (x + 1) * half
        e = np.exp(1j * th)
        return self.center + self.radius * e, w * half * 1j * self.radius * e

    def distance(self, z):
        z = np.asarray(z, dtype=complex)
        rel = z - self.center
        lo, hi = sorted((self.theta0, self.theta1))
        ang = np.angle(rel)
        # bring the angle into [lo, lo + 2 pi)
        ang = lo + np.mod(ang - lo, 2 * math.pi)
        inside = ang <= hi
        d_circle = np.abs(np.abs(rel) - self.radius)
        d_ends = np.minimum(np.abs(z - self.start), np.abs(z - self.end))
        return np.where(inside, d_circle, d_ends)

    def _theta_nearest(self, lam):
        lo, hi = sorted((self.theta0, self.theta1))
        a = lo + (math.atan2((lam - self.center).imag, (lam - self.center).real) - lo) % (2 * math.pi)
        return a if a <= hi else None

    def inverse_distance(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if lam.ndim == 0:
            return self._arc_scalar(complex(lam))
        return arc_integrals(self, lam)

    def _arc_scalar(self, lam: complex) -> float:
        if float(self.distance(lam)) == 0:
            raise CurveError(f"lambda = {lam} lies on the arc")
        lo, hi = sorted((self.theta0, self.theta1))
        R = self.radius
        c = self.center

        def f(th):
            return R / abs(lam - c - R * complex(math.cos(th), math.sin(th)))

        pts = [a for a in [self._theta_nearest(lam)] if a is not None and lo < a < hi]
        val, _ = quad(f, lo, hi, points=pts or None, epsabs=0, epsrel=1e-13, limit=500)
        return val

    def winding_angle(self, p):
        """Angle swept by the arc as seen from p (exact: subarcs plus segment test)."""
        k = max(1, int(math.ceil(abs(self.theta1 - self.theta0) / (math.pi / 8))))
        th = np.linspace(self.theta0, self.theta1, k + 1)
        total = 0.0
        sgn = 1.0 if self.theta1 > self.theta0 else -1.0
        for a, b in zip(th[:-1], th[1:]):
            za = self.center + self.radius * complex(math.cos(a), math.sin(a))
            zb = self.center + self.radius * complex(math.cos(b), math.sin(b))
            total += float(np.angle((zb - p) / (za - p)))
            # p inside the circular segment between the chord and this subarc
            rel = p - self.center
            if abs(rel) < self.radius:
                mid = 0.5 * (a + b)
                half = 0.5 * abs(b - a)
                along = (rel * complex(math.cos(mid), -math.sin(mid))).real
                if along > self.radius * math.cos(half):
                    total += sgn * 2 * math.pi
        return total

    def to_doc(self):
        return {"type": "arc", "center": [self.center.real, self.center.imag],
                "radius": self.radius, "theta0": self.theta0, "theta1": self.theta1}


def chord_integral(c, b, h):
    """int_{-h}^{h} dt / sqrt(c^2 + (b - t)^2), stable in every regime.

    With p = sqrt(c^2 + (b-h)^2), q = sqrt(c^2 + (b+h)^2) and b >= 0 (the
    integral is even in b) the value is log((q + b + h)/(p + b - h)); the
    denominator is rewritten as c^2/(p + h - b) when b < h, and the ratio is
    fed to log1p through its exact excess 2h + 4bh/(p + q).
    """
    c = np.abs(np.asarray(c, dtype=float))
    b = np.abs(np.asarray(b, dtype=float))
    p = np.hypot(c, b - h)
    q = np.hypot(c, b + h)
    with np.errstate(divide="ignore", invalid="ignore"):
        den = np.where(b >= h, p + b - h, c * c / (p + h - b))
        excess = 2 * h + 4 * b * h / (p + q)
        val = np.log1p(excess / den)
    if np.any(den == 0):
        raise CurveError("point lies on the segment")
    return val if val.ndim else float(val)


def printed_chord_formula(lam: complex, x: float) -> float:
    """log((|lam-z0| + Im(lam - conj z0)) / (|lam - conj z0| + Im(lam - z0))).

    Kept for reference: it equals the chord integral only when Im lam = 0
    (see ``segment_inverse_distance`` for the correct orientation).
    """
    h = math.sqrt(1 - x * x)
    z0 = complex(x, h)
    zb = z0.conjugate()
    ratio = (abs(lam - z0) + (lam - zb).imag) / (abs(lam - zb) + (lam - z0).imag)
    return math.log(ratio) if ratio > 0 else math.nan


def segment_inverse_distance(lam: complex, x: float) -> float:
    """int over the chord x + i[-h, h], h = sqrt(1 - x^2), of |dxi| / |lam - xi|.

    Equals log((|lam - conj z0| + Im(lam - conj z0)) / (|lam - z0| + Im(lam - z0)))
    with z0 = x + i h.
    """
    if not -1 < x < 1:
        raise ValueError("x must lie in (-1, 1)")
    lam = complex(lam)
    h = math.sqrt(1 - x * x)
    if lam.real == x and abs(lam.imag) <= h:
        raise CurveError(f"lambda = {lam} lies on the chord at x = {x}")
    return chord_integral(lam.real - x, lam.imag, h)


def arc_integrals(arc: Arc, lam: np.ndarray, max_panels: int = 256) -> np.ndarray:
    """Vectorized arc integrals; composite Gauss-Legendre where the arc is far, quad otherwise.

    A 16-point panel no longer than the distance to the point converges like
    (2 + sqrt 5)^-32, far below 1e-13 relative.
    """
    lam = np.asarray(lam, dtype=complex)
    d = arc.distance(lam)
    if np.any(d == 0):
        raise CurveError("a point lies on the arc")
    dmin = float(np.min(d)) if d.size else 1.0
    panels = int(min(max_panels, max(4, math.ceil(arc.length / max(dmin, 1e-300)))))
    span = (arc.theta1 - arc.theta0) / panels
    plen = abs(span) * arc.radius
    far = d >= plen
    out = np.empty(lam.shape)
    if far.any():
        th = arc.theta0 + span * (np.arange(panels)[:, None] + 0.5 * (GL_NODES[None, :] + 1))
        w = (0.5 * abs(span) * GL_WEIGHTS)[None, :].repeat(panels, 0).ravel() * arc.radius
        pts = arc.center + arc.radius * np.exp(1j * th.ravel())
        lf = lam[far]
        acc = np.zeros(lf.size)
        step = max(1, (1 << 22) // pts.size)
        for s in range(0, lf.size, step):
            acc[s:s + step] = (1.0 / np.abs(lf[s:s + step, None] - pts[None, :])) @ w
        out[far] = acc
    for i in np.nonzero(~far)[0]:
        out[i] = arc._arc_scalar(complex(lam[i]))
    return out


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContourCurve:
    pieces: tuple
    orientation: str = "positive"
    x_cut: Optional[float] = None
    side: Optional[str] = None

    def __post_init__(self):
        for a, b in zip(self.pieces, self.pieces[1:] + self.pieces[:1]):
            if abs(a.end - b.start) > CLOSE_TOL:
                raise ValueError("curve is not closed")

    @property
    def length(self) -> float:
        return math.fsum(p.length for p in self.pieces)

    def distance(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.min([p.distance(z) for p in self.pieces], axis=0)

    def winding(self, p: complex) -> int:
        """Winding number of the curve around p (p off the curve)."""
        p = complex(p)
        if float(self.distance(p)) == 0:
            raise CurveError(f"{p} lies on the curve")
        total = math.fsum(piece.winding_angle(p) for piece in self.pieces)
        return int(round(total / (2 * math.pi)))

    def inside(self, p) -> bool:
        return self.winding(p) != 0

    def gauss(self, n: int):
        zs, ws = zip(*(p.gauss(n) for p in self.pieces))
        return np.concatenate(zs), np.concatenate(ws)

    def sample(self, per_piece: int = 64) -> np.ndarray:
        t = np.linspace(0, 1, per_piece, endpoint=False)
        return np.concatenate([p.point(t) for p in self.pieces])

    def to_doc(self):
        return {"pieces": [p.to_doc() for p in self.pieces], "orientation": self.orientation,
                "x_cut": None if self.x_cut is None else float(self.x_cut), "side": self.side}


def build_gamma(x, side: str = "plus") -> ContourCurve:
    """Chord of the unit circle at abscissa x joined to the arc on the chosen side.

    ``x`` may be an exact Fraction; it is kept as the curve's cut so that
    separation bounds use the exact abscissa.
    """
    x_cut = x if isinstance(x, Fraction) else float(x)
    x = float(x)
    if not -1 < x < 1:
        raise ValueError(f"x = {x} must satisfy |x| < 1")
    h = math.sqrt(1 - x * x)
    th = math.acos(x)
    z0, zb = complex(x, h), complex(x, -h)
    if side == "plus":
        arc = Arc(0j, 1.0, -th, th)
        pieces = (arc, Segment(z0, zb))
    elif side == "minus":
        arc = Arc(0j, 1.0, th, 2 * math.pi - th)
        pieces = (arc, Segment(zb, z0))
    else:
        raise ValueError("side must be 'plus' or 'minus'")
    # pin the arc endpoints to the chord endpoints exactly
    return ContourCurve(pieces, "positive", x_cut, side)


def circle(center: complex, radius: float) -> ContourCurve:
    return ContourCurve((Arc(complex(center), float(radius), 0.0, 2 * math.pi),))


def polyline(points) -> ContourCurve:
    pts = [complex(p) for p in points]
    if abs(pts[0] - pts[-1]) > CLOSE_TOL:
        pts.append(pts[0])
    return ContourCurve(tuple(Segment(a, b) for a, b in zip(pts[:-1], pts[1:])))


def rectangle(xmin, xmax, ymin, ymax) -> ContourCurve:
    return polyline([complex(xmin, ymin), complex(xmax, ymin), complex(xmax, ymax),
                     complex(xmin, ymax)])


def curve_from_doc(doc: dict) -> ContourCurve:
    kind = doc.get("type")
    if kind == "gamma":
        return build_gamma(doc["x"], doc.get("side", "plus"))
    if kind == "circle":
        return circle(complex(*doc["center"]), doc["radius"])
    if kind == "rectangle":
        return rectangle(*doc["box"])
    if kind == "polyline":
        return polyline([complex(a, b) for a, b in doc["points"]])
    raise ValueError(f"unknown curve type {kind!r}")


def curve_inverse_distance(curve: ContourCurve, lam: complex) -> float:
    """int_curve |dxi| / |lam - xi|: closed form on segments, quadrature on arcs."""
    lam = complex(lam)
    if float(curve.distance(lam)) == 0:
        raise CurveError(f"lambda = {lam} lies on the curve")
    return math.fsum(float(p.inverse_distance(lam)) for p in curve.pieces)


def curve_inverse_distance_many(curve: ContourCurve, lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=complex)
    return np.sum([np.asarray(p.inverse_distance(lam), dtype=float) for p in curve.pieces], axis=0)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

TARGET_RADIUS = 0.9
TARGET_IM = 0.05


@dataclass(frozen=True)
class AffineMap:
    s: Fraction
    t: complex

    def forward(self, z):
        return float(self.s) * np.asarray(z) + self.t

    def inverse(self, w):
        return (np.asarray(w) - self.t) / float(self.s)

    def forward_x(self, x) -> Fraction:
        return self.s * as_fraction(x) + as_fraction(self.t.real)

    def inverse_x(self, x) -> Fraction:
        return (as_fraction(x) - as_fraction(self.t.real)) / self.s

    @property
    def is_identity(self):
        return self.s == 1 and self.t == 0

    def to_doc(self):
        return {"s": [self.s.numerator, self.s.denominator], "t": [self.t.real, self.t.imag]}


def _box_fits(box) -> bool:
    xmin, xmax, ymin, ymax = box
    corners = [complex(a, b) for a in (xmin, xmax) for b in (ymin, ymax)]
    return ymin >= TARGET_IM and max(abs(c) for c in corners) <= TARGET_RADIUS


def _image_box(box, s, t):
    sf = float(s)
    return (sf * box[0] + t.real, sf * box[1] + t.real, sf * box[2] + t.imag, sf * box[3] + t.imag)


def normalize_to_upper_disc(spec: OperatorSpec, box: Optional[tuple] = None):
    """(spec', map) with the envelope inside {|z| <= 0.9, Im z >= 0.05}.

    The map is z -> s z + t with rational s > 0.  It acts on the whole operator,
    T' = s T + t, so u_k is scaled by s while v_k is unchanged.
    """
    box = spec.diag.box if box is None else box
    if _box_fits(box):
        return spec, AffineMap(Fraction(1), 0j)
    B = max(abs(complex(a, b)) for a in box[:2] for b in box[2:])
    s = Fraction(0.8 / max(B, 1e-300)).limit_denominator(10 ** 6)
    t = 0.4j
    if not _box_fits(_image_box(box, s, t)):
        W, H = box[1] - box[0], box[3] - box[2]
        cx = Fraction(0.5 * (box[0] + box[1])).limit_denominator(10 ** 6)
        cy = 0.5 * (box[2] + box[3])
        yc = 0.45
        hi, lo = 10.0 / max(W, H, 1e-300), 0.0
        for _ in range(200):
            mid = 0.5 * (hi + lo)
            ok = mid * H / 2 <= yc - TARGET_IM and abs(complex(mid * W / 2, yc + mid * H / 2)) <= TARGET_RADIUS
            lo, hi = (mid, hi) if ok else (lo, mid)
        s = Fraction(0.98 * lo).limit_denominator(10 ** 6)
        t = complex(float(-s * cx), yc - float(s) * cy)
        if not _box_fits(_image_box(box, s, t)):
            s = Fraction(0.9 * lo).limit_denominator(10 ** 7)
            t = complex(float(-s * cx), yc - float(s) * cy)
    amap = AffineMap(s, complex(t))
    diag = spec.diag.affine(s, amap.t)
    pairs = [(u.scaled(float(s)), v) for u, v in spec.perturbations]
    return build_operator_spec(diag, pairs, spec.pq), amap


# ---------------------------------------------------------------------------
# condition (iii)
# ---------------------------------------------------------------------------


def _arc_box_gap(curve: ContourCurve, box) -> float:
    """Lower bound for the distance between the arcs of the curve and the box."""
    gaps = [INF]
    for p in curve.pieces:
        if isinstance(p, Arc):
            pts = p.point(np.linspace(0, 1, 4097))
            dx = np.maximum.reduce([box[0] - pts.real, np.zeros(pts.size), pts.real - box[1]])
            dy = np.maximum.reduce([box[2] - pts.imag, np.zeros(pts.size), pts.imag - box[3]])
            spacing = p.length / 4096
            gaps.append(float(np.min(np.hypot(dx, dy))) - spacing)
    return max(min(gaps), 0.0)


def _arc_length(curve):
    return math.fsum(p.length for p in curve.pieces if isinstance(p, Arc))


def condition_iii_series(spec: OperatorSpec, curve: ContourCurve, tol: float = 1e-10,
                         budget: int = 10 ** 6) -> sr.SeriesValue:
    """sum_n (int_curve |dxi|/|lambda_n - xi|)^2 |alpha_n^(k)|^2 for each u_k.

    The tail uses I_n <= K + 2 log+(1/|Re lambda_n - x|), K = arc length / gap +
    2 log(1 + 2h), and (log y)^2 <= (16/e^2) sqrt(y) with a separation
    |Re lambda_n - x| >= 1/(c n^j); hence I_n^2 <= 2K^2 + (128/e^2) sqrt(c) n^(j/2).
    """
    x = curve.x_cut
    if x is None:
        raise ValueError("condition (iii) needs a chord-plus-arc curve")
    xq = as_fraction(x)
    h = math.sqrt(1 - float(x) ** 2)
    if isinstance(x, float):
        note = "abscissa given as a float; separation uses its exact binary value"
    else:
        note = ""
    gap = _arc_box_gap(curve, spec.diag.box)
    K = (_arc_length(curve) / gap if gap > 0 else INF) + 2 * math.log(1 + 2 * h)
    sep = spec.diag.re_separation(xq)
    hits = spec.diag.re_hits(xq)
    parts = []
    for k, (u, _) in enumerate(spec.perturbations, start=1):
        for n in hits:
            lam = complex(spec.diag.values(n, n + 1)[0])
            if abs(lam.imag) <= h and u.values(n, n + 1)[0] != 0:
                raise CurveError(f"lambda_{n} = {lam} lies on the curve")

        def terms(start, stop, u=u):
            lam = spec.diag.values(start, stop)
            a2 = np.abs(u.values(start, stop)) ** 2
            out = np.zeros(a2.shape)
            nz = a2 > 0
            if nz.any():
                d = curve.distance(lam[nz])
                if np.any(d == 0):
                    bad = start + int(np.nonzero(nz)[0][np.argmin(d)])
                    raise CurveError(f"lambda_{bad} lies on the curve")
                out[nz] = curve_inverse_distance_many(curve, lam[nz]) ** 2 * a2[nz]
            return out

        if sep is None or not math.isfinite(K):
            tail = lambda M: INF
        else:
            c, j = sep
            kappa = 128 / math.e ** 2 * math.sqrt(max(c, 1.0))

            def tail(M, u=u, c=c, j=j, kappa=kappa):
                t = 2 * K * K * u.tail_moment(2, 0, M) + kappa * u.tail_moment(2, j / 2, M)
                for n in hits:
                    if n > M:
                        lam = complex(spec.diag.values(n, n + 1)[0])
                        t += curve_inverse_distance(curve, lam) ** 2 * abs(u.values(n, n + 1)[0]) ** 2
                return t
        v = sr.accumulate(terms, tail, spec.length, tol, budget)
        v.witness = {"sequence": f"u_{k}", "K": K, "arc_gap": gap}
        if sep is not None:
            v.witness["separation"] = {"c": sep[0], "j": sep[1]}
        parts.append(v)
    out = sr._aggregate(parts, {"x": float(x), "K": K, "arc_gap": gap})
    if note:
        out.witness["note"] = note
    return out


# ---------------------------------------------------------------------------
# hypotheses of the spectral-subspace theorems
# ---------------------------------------------------------------------------


@dataclass
class HypothesisReport:
    condition_i: bool
    condition_i_witnesses: dict
    condition_ii: list
    condition_ii_status: str
    condition_iii: Optional[sr.SeriesValue]
    overall: str
    curve: ContourCurve
    affine_map: AffineMap
    notes: list = field(default_factory=list)

    def to_doc(self):
        return {"condition_i": self.condition_i,
                "condition_i_witnesses": sr._jsonable(self.condition_i_witnesses),
                "condition_ii": [sr._jsonable(r) for r in self.condition_ii],
                "condition_ii_status": self.condition_ii_status,
                "condition_iii": None if self.condition_iii is None else self.condition_iii.to_doc(),
                "overall": self.overall, "curve": self.curve.to_doc(),
                "affine_map": self.affine_map.to_doc(), "notes": list(self.notes)}


def _spectrum_samples(spec: OperatorSpec) -> np.ndarray:
    from .spectral import find_eigenvalues
    from .truncation import dense_eigendecomposition
    from .operator import truncate
    if spec.is_finite:
        return np.array([e for e, _, _ in dense_eigendecomposition(truncate(spec, spec.length))])
    rep = find_eigenvalues(spec, budget=1 << 14)
    lam = spec.diag.values(1, 4097)
    return np.concatenate([rep.roots, np.array(rep.accumulation_candidates, dtype=complex), lam])


CURVE_TERMS = 1 << 16


def _tail_matrix(spec: OperatorSpec, z: complex, M: int, x_exact=None) -> np.ndarray:
    """Entrywise bounds on the omitted parts of M_T(z) after M terms.

    Off the diagonal box the distance to the box is used; on the chord the exact
    abscissa gives |lambda_n - z| >= |Re lambda_n - x| >= 1/(c n^j).
    """
    pairs = spec.perturbations
    N = len(pairs)
    out = np.full((N, N), INF)
    dist = spec.diag.box_distance(z)
    sep = spec.diag.re_separation(x_exact) if x_exact is not None else None
    hits = spec.diag.re_hits(x_exact) if x_exact is not None else []
    for i, (u, _) in enumerate(pairs):
        for j, (_, v) in enumerate(pairs):
            best = INF
            if dist > 0:
                best = math.sqrt(u.tail_moment(2, 0, M) * v.tail_moment(2, 0, M)) / dist
            if sep is not None:
                c, jj = sep
                t = c * math.sqrt(u.tail_moment(2, jj, M) * v.tail_moment(2, jj, M))
                for n in hits:
                    if n > M:
                        lam = complex(spec.diag.values(n, n + 1)[0])
                        num = abs(u.values(n, n + 1)[0] * v.values(n, n + 1)[0])
                        if num:
                            t += INF if lam == z else num / abs(lam - z)
                best = min(best, t)
            out[i, j] = best
    return out


def _curve_values(spec: OperatorSpec, curve: ContourCurve, tol: float, max_samples: int = 4000):
    """min |det M_T| along each piece, adaptive until neighbors differ by < 10%.

    Rule-generated data are cut at CURVE_TERMS terms; every final sample then
    gets a first-order bound on the truncation error of det M_T.
    """
    from .spectral import DetEvaluator, batched_adj
    M = spec.length if spec.is_finite else CURVE_TERMS
    ev = DetEvaluator(*spec.materialize(M + 1))

    def f(z):
        return np.abs(ev.det(np.atleast_1d(z)))

    out = []
    for idx, piece in enumerate(curve.pieces):
        t = np.linspace(0, 1, 65)
        v = f(piece.point(t))
        floor = 1e-9
        while t.size < max_samples:
            with np.errstate(all="ignore"):
                rel = np.abs(np.diff(v)) / np.minimum(v[1:], v[:-1])
            bad = (rel > 0.1) & (np.diff(t) > floor)
            if not bad.any():
                break
            tn = 0.5 * (t[1:] + t[:-1])[bad]
            t = np.concatenate([t, tn])
            v = np.concatenate([v, f(piece.point(tn))])
            o = np.argsort(t)
            t, v = t[o], v[o]
        # a root on the curve shows up as a local minimum of |det|
        k = int(np.argmin(v))
        lo, hi = t[max(k - 1, 0)], t[min(k + 1, t.size - 1)]
        tmin, vmin = float(t[k]), float(v[k])
        if hi > lo and math.isfinite(vmin):
            r = minimize_scalar(lambda s: float(f(piece.point(np.array([s])))[0]),
                                bounds=(lo, hi), method="bounded", options={"xatol": 1e-15})
            if r.fun < vmin:
                tmin, vmin = float(r.x), float(r.fun)
        rec = {"piece": idx, "samples": int(t.size), "min_abs": vmin,
               "argmin": complex(piece.point(tmin)), "error_bound": 0.0, "separated": True}
        if not spec.is_finite:
            x_exact = curve.x_cut if isinstance(piece, Segment) else None
            pts = np.append(piece.point(t), piece.point(tmin))
            vals = np.append(v, vmin)
            Ms = ev.matrices(pts)
            adj = np.abs(batched_adj(Ms))
            errs = np.array([float(np.sum(adj[q].T * _tail_matrix(spec, complex(z), M, x_exact)))
                             for q, z in enumerate(pts)])
            rec["error_bound"] = float(errs[-1])
            rec["separated"] = bool(np.all(vals > errs))
        out.append(rec)
    return out


def check_subspace_hypotheses(spec: OperatorSpec, x, side: str = "plus", tol: float = 1e-10,
                              normalized: bool = False) -> HypothesisReport:
    """Conditions (i)-(iii) for the curve gamma_x on the side given.

    ``x`` is an abscissa in the original coordinates unless ``normalized``; the
    operator is moved by an affine map so the spectrum box sits in the upper disc.
    """
    from .spectral import default_region
    notes = []
    if normalized:
        nspec, amap = spec, AffineMap(Fraction(1), 0j)
    else:
        nspec, amap = normalize_to_upper_disc(spec, default_region(spec) if spec.is_finite else None)
    xn = amap.forward_x(x)
    if not -1 < xn < 1:
        raise ValueError(f"normalized abscissa {float(xn)} outside (-1, 1)")
    curve = build_gamma(xn, side)
    samples = _spectrum_samples(nspec)
    inside = [complex(z) for z in samples if float(curve.distance(z)) > 1e-12 and curve.inside(z)]
    outside = [complex(z) for z in samples if float(curve.distance(z)) > 1e-12 and not curve.inside(z)]
    on_curve = [complex(z) for z in samples if float(curve.distance(z)) <= 1e-12]
    cond_i = bool(inside) and bool(outside)
    wit_i = {"inside": inside[:8], "outside": outside[:8], "on_curve": on_curve[:8]}

    rel = sr.relevant_set_series(nspec, xn, tol, budget=10 ** 6)
    violated = False
    if rel.verdict != sr.CONVERGES:
        notes.append(f"x = {float(x)} not certified in the relevant set ({rel.verdict}); "
                     "continuity of 1 + f_T on the chord is not available")
    try:
        vals = _curve_values(nspec, curve, tol)
    except sr.PoleError as exc:
        vals = []
        notes.append(str(exc))
    min_abs = min((r["min_abs"] for r in vals), default=INF)
    errb = max((r["error_bound"] for r in vals), default=INF)
    spec_on = []
    if on_curve:
        from .spectral import DetEvaluator
        ev = DetEvaluator(*nspec.materialize((nspec.length or CURVE_TERMS) + 1))
        for z in on_curve:
            d = float(np.abs(ev.det(np.array([z])))[0])
            if d <= tol * 10:
                spec_on.append(z)
        notes.append(f"{len(on_curve)} spectrum samples lie on the curve")
    if (vals and min_abs + errb <= tol * 10) or spec_on:
        violated = True
        status = "violated"
        where = spec_on[0] if spec_on else min(vals, key=lambda r: r["min_abs"])["argmin"]
        notes.append(f"det M_T vanishes on the curve near {where}")
    elif rel.verdict != sr.CONVERGES:
        status = "inconclusive"
    elif vals and all(r["separated"] for r in vals):
        status = "satisfied-at-samples"
    else:
        status = "inconclusive"

    try:
        c3 = condition_iii_series(nspec, curve, tol, budget=1 << 18)
    except CurveError as exc:
        c3 = None
        notes.append(str(exc))
        violated = True
    if violated:
        overall = "violated"
    elif cond_i and status == "satisfied-at-samples" and c3 is not None and c3.verdict == sr.CONVERGES:
        overall = "satisfied-at-samples"
    else:
        overall = "inconclusive"
    if not cond_i:
        notes.append("spectrum samples do not lie on both sides of the curve")
    return HypothesisReport(cond_i, wit_i, vals, status, c3, overall, curve, amap, notes)
