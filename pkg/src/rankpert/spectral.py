"""Eigenvalue tests and spectrum scans for T = D_Lambda + sum u_k (x) v_k.

Roots off Lambda are located by the argument principle applied to
g(z) = det M_T(z) prod_{lambda_n in cell} (lambda_n - z), which is holomorphic
in the cell and vanishes exactly at the eigenvalues of T there.  Arguments are
tracked along cell edges with adaptive bisection; positive cells are split
until they hold a single eigenvalue and then polished by damped Newton.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import series as sr
from .operator import OperatorSpec, accumulation_candidates
from .sequences import INF, as_fraction

WORKERS_ENV = "RANKPERT_WORKERS"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Ionascu's criterion
# ---------------------------------------------------------------------------


@dataclass
class EigenVerdict:
    z: complex
    cond_not_in_lambda: bool
    cond_range: Optional[sr.SeriesValue]
    cond_root: complex
    residual_bound: float
    is_eigen: str

    def to_doc(self):
        return {"z": [self.z.real, self.z.imag], "cond_not_in_lambda": self.cond_not_in_lambda,
                "cond_range": None if self.cond_range is None else self.cond_range.to_doc(),
                "cond_root": [self.cond_root.real, self.cond_root.imag],
                "residual_bound": self.residual_bound if math.isfinite(self.residual_bound) else "unknown",
                "is_eigen": self.is_eigen}


def ionascu_eigen_test(spec: OperatorSpec, z: complex, tol: float = 1e-10,
                       budget: int = sr.DEFAULT_BUDGET) -> EigenVerdict:
    """Is z (not in Lambda) an eigenvalue of T?

    Rank one: u in ran(D - z) and 1 + f_T(z) = 0.  Rank N: u_k in ran(D - z)
    for every k and det M_T(z) = 0.
    """
    z = complex(z)
    if spec.diag.hits(z):
        return EigenVerdict(z, False, None, complex("nan"), INF, "no")
    rng = sr.ionascu_range_series(spec, z, tol=tol * 1e-2, budget=budget)
    Mv = sr.eval_borel_matrix(spec, z, tol=tol * 1e-2, budget=budget)
    det = Mv.determinant
    err = Mv.det_error_bound
    tails = sum(v.tail_bound for row in Mv.entry_values for v in row)
    if not math.isfinite(err):
        verdict = "inconclusive"
    elif abs(det) <= tol * (1 + tails) + err:
        verdict = "yes" if rng.verdict == sr.CONVERGES else "inconclusive"
    elif abs(det) - err > tol * (1 + tails):
        verdict = "no"
    else:
        verdict = "inconclusive"
    return EigenVerdict(z, True, rng, det, err, verdict)


# ---------------------------------------------------------------------------
# vectorized det M_T on materialized data
# ---------------------------------------------------------------------------


class DetEvaluator:
    """det M_T(z) and its log-derivative from (lam, A, B) for many z at once."""

    BLOCK = 1 << 21

    def __init__(self, lam: np.ndarray, A: np.ndarray, B: np.ndarray):
        self.lam = np.asarray(lam, dtype=complex)
        self.N = A.shape[0]
        self.W = (A[:, None, :] * np.conj(B)[None, :, :]).reshape(self.N * self.N, -1)
        keep = np.any(self.W != 0, axis=0)
        self.lam_w = self.lam[keep]
        self.W = np.ascontiguousarray(self.W[:, keep].T)

    def _blocks(self, z):
        step = max(1, self.BLOCK // max(self.lam_w.size, 1))
        for s in range(0, z.size, step):
            yield s, z[s:s + step]

    def matrices(self, z: np.ndarray, derivative: bool = False):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        N = self.N
        F = np.empty((z.size, N * N), dtype=complex)
        dF = np.empty_like(F) if derivative else None
        with np.errstate(divide="ignore", invalid="ignore"):
            for s, zb in self._blocks(z):
                R = 1.0 / (self.lam_w[None, :] - zb[:, None])
                F[s:s + zb.size] = R @ self.W
                if derivative:
                    dF[s:s + zb.size] = (R * R) @ self.W
        M = F.reshape(-1, N, N) + np.eye(N)
        return (M, dF.reshape(-1, N, N)) if derivative else M

    def det(self, z):
        return batched_det(self.matrices(z))

    def det_and_logderiv(self, z):
        """det M and (det M)'/det M = tr(adj(M) M')/det M."""
        M, dM = self.matrices(z, derivative=True)
        d = batched_det(M)
        dd = np.einsum("kij,kji->k", batched_adj(M), dM)
        with np.errstate(all="ignore"):
            return d, dd / d


def batched_adj(M: np.ndarray) -> np.ndarray:
    N = M.shape[-1]
    if N == 1:
        return np.ones_like(M)
    if N == 2:
        out = np.empty_like(M)
        out[:, 0, 0], out[:, 1, 1] = M[:, 1, 1], M[:, 0, 0]
        out[:, 0, 1], out[:, 1, 0] = -M[:, 0, 1], -M[:, 1, 0]
        return out
    out = np.empty_like(M)
    idx = list(range(N))
    for r in range(N):
        for c in range(N):
            rows = [i for i in idx if i != r]
            cols = [j for j in idx if j != c]
            out[:, c, r] = (-1) ** (r + c) * batched_det(M[:, rows][:, :, cols])
    return out


def batched_det(M: np.ndarray) -> np.ndarray:
    N = M.shape[-1]
    if N == 1:
        return M[:, 0, 0].copy()
    if N == 2:
        return M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    if N == 3:
        a = M
        return (a[:, 0, 0] * (a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1])
                - a[:, 0, 1] * (a[:, 1, 0] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 0])
                + a[:, 0, 2] * (a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0]))
    with np.errstate(all="ignore"):
        return np.linalg.det(M)


# ---------------------------------------------------------------------------
# argument tracking along edges
# ---------------------------------------------------------------------------

ARG_STEP = math.pi / 4      # per-step argument change allowed (< pi/2)
LOG_STEP = 0.5              # per-step change of log|g|
MIN_DT = 1e-13


@dataclass
class EdgeResult:
    darg: float
    moment: complex
    min_abs: float
    max_err_ratio: float
    flagged: bool


def _pole_seeds(Z0, D, poles):
    """Extra parameters near the projections of poles close to each edge.

    A pole next to a zero (a dipole) leaves the far-field argument unchanged,
    so uniform samples can step over it; geometric samples around the foot of
    the perpendicular expose it to the bisection test.
    """
    if poles is None or poles.size == 0:
        return np.empty(0, dtype=int), np.empty(0)
    es, ts = [], []
    L = np.abs(D)
    for e in range(len(Z0)):
        u = D[e] / L[e]
        w = (poles - Z0[e]) / u
        near = (w.real > -0.25 * L[e]) & (w.real < 1.25 * L[e]) & (np.abs(w.imag) < 0.25 * L[e])
        for p in w[near]:
            d = max(abs(p.imag), 1e-15 * L[e])
            k = np.arange(0, 60)
            off = d * 2.0 ** k
            off = off[off < L[e]]
            cand = np.concatenate([[p.real], p.real + off, p.real - off]) / L[e]
            cand = cand[(cand > 0) & (cand < 1)]
            es.append(np.full(cand.size, e))
            ts.append(cand)
    if not es:
        return np.empty(0, dtype=int), np.empty(0)
    return np.concatenate(es), np.concatenate(ts)


def track_edges(evaluate, Z0: np.ndarray, Z1: np.ndarray, err=None,
                init: int = 9, max_iter: int = 60, poles=None) -> list:
    """Total argument change of g along each segment Z0[e] -> Z1[e].

    ``evaluate`` maps an array of points to g.  ``err`` (optional) maps points to
    an upper bound on |g - g_true|; samples where |g| <= err flag the edge.
    Also returns the discrete moment sum z d(log g) / (2 pi i).
    """
    E = len(Z0)
    if E == 0:
        return []
    Z0 = np.asarray(Z0, dtype=complex)
    D = np.asarray(Z1, dtype=complex) - Z0
    eid = np.repeat(np.arange(E), init)
    t = np.tile(np.linspace(0.0, 1.0, init), E)
    pe_, pt_ = _pole_seeds(Z0, D, poles)
    eid = np.concatenate([eid, pe_])
    t = np.concatenate([t, pt_])
    g = evaluate(Z0[eid] + t * D[eid])
    for _ in range(max_iter):
        order = np.lexsort((t, eid))
        eid, t, g = eid[order], t[order], g[order]
        same = eid[1:] == eid[:-1]
        with np.errstate(all="ignore"):
            ratio = g[1:] / g[:-1]
            lr = np.log(np.abs(ratio))
        ang = np.angle(ratio)
        rough = ~np.isfinite(ratio) | (np.abs(ang) >= ARG_STEP) | (np.abs(lr) > LOG_STEP)
        bad = same & rough & ((t[1:] - t[:-1]) > MIN_DT)
        if not bad.any():
            break
        tn = 0.5 * (t[1:] + t[:-1])[bad]
        en = eid[1:][bad]
        gn = evaluate(Z0[en] + tn * D[en])
        eid = np.concatenate([eid, en])
        t = np.concatenate([t, tn])
        g = np.concatenate([g, gn])
    order = np.lexsort((t, eid))
    eid, t, g = eid[order], t[order], g[order]
    same = eid[1:] == eid[:-1]
    with np.errstate(all="ignore"):
        ratio = g[1:] / g[:-1]
        lr = np.log(np.abs(ratio))
    ang = np.angle(ratio)
    rough = same & (~np.isfinite(ratio) | (np.abs(ang) >= ARG_STEP) | (np.abs(lr) > LOG_STEP))
    pe = eid[1:][same]
    z = Z0[eid] + t * D[eid]
    zmid = 0.5 * (z[1:] + z[:-1])[same]
    dlog = (lr + 1j * ang)[same]
    finite = np.isfinite(dlog)
    dlog = np.where(finite, dlog, 0)
    darg = np.bincount(pe, weights=ang[same] * finite, minlength=E)
    mom = (np.bincount(pe, weights=(zmid * dlog).real, minlength=E)
           + 1j * np.bincount(pe, weights=(zmid * dlog).imag, minlength=E)) / (2j * math.pi)
    absg = np.abs(g)
    min_abs = np.full(E, INF)
    np.minimum.at(min_abs, eid, np.where(np.isfinite(absg), absg, 0.0))
    flagged = np.zeros(E, dtype=bool)
    np.logical_or.at(flagged, eid[1:][rough], True)
    np.logical_or.at(flagged, eid, ~np.isfinite(g) | (g == 0))
    ratio_err = np.zeros(E)
    if err is not None:
        e = err(z)
        with np.errstate(all="ignore"):
            q = np.where(absg > 0, e / absg, INF)
        np.maximum.at(ratio_err, eid, q)
        flagged |= ratio_err >= 1
    return [EdgeResult(float(darg[k]), complex(mom[k]), float(min_abs[k]), float(ratio_err[k]),
                       bool(flagged[k])) for k in range(E)]


# ---------------------------------------------------------------------------
# spectrum scan
# ---------------------------------------------------------------------------


@dataclass
class RootCandidate:
    z: complex
    residual: float
    cell: tuple
    winding: int
    status: str
    iterations: int = 0

    def to_doc(self):
        return {"z": [self.z.real, self.z.imag], "residual": self.residual,
                "cell": list(self.cell), "winding": self.winding, "status": self.status,
                "iterations": self.iterations}


@dataclass
class SpectrumReport:
    accumulation_candidates: list
    root_candidates: list
    scan_region: tuple
    grid_resolution: float
    excluded_cells: list = field(default_factory=list)
    undecided_cells: list = field(default_factory=list)
    outer_winding: Optional[int] = None
    cell_winding_total: Optional[int] = None
    margin: float = 0.0
    truncation: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def roots(self) -> np.ndarray:
        return np.array([r.z for r in self.root_candidates], dtype=complex)

    def to_doc(self):
        return {"accumulation_candidates": [[z.real, z.imag] for z in self.accumulation_candidates],
                "root_candidates": [r.to_doc() for r in self.root_candidates],
                "scan_region": list(self.scan_region), "grid_resolution": self.grid_resolution,
                "excluded_cells": [list(c) for c in self.excluded_cells],
                "undecided_cells": [dict(c) for c in self.undecided_cells],
                "outer_winding": self.outer_winding, "cell_winding_total": self.cell_winding_total,
                "margin": self.margin, "truncation": sr._jsonable(self.truncation),
                "notes": list(self.notes)}


def default_region(spec: OperatorSpec, lam=None, A=None, B=None) -> tuple:
    """Box containing sigma(T): |z - lambda| <= sum ||u_k|| ||v_k|| around the diagonal box."""
    pert = 0.0
    for u, v in spec.perturbations:
        pert += math.sqrt(u.tail_moment(2, 0, 0) * v.tail_moment(2, 0, 0))
    xmin, xmax, ymin, ymax = spec.diag.box
    r = 1.05 * pert + 1e-3 * max(spec.diag.bound, 1.0)
    return (xmin - r, xmax + r, ymin - r, ymax + r)


def _pick_split(lo, hi, coords):
    w = hi - lo
    best, best_d = lo + 0.5 * w, -1.0
    # off-centre first: exact midpoints put grid lines on symmetry axes, where roots often sit
    for f in (0.4873, 0.5127, 0.46, 0.54, 0.42, 0.58, 0.37, 0.63, 0.33, 0.67):
        c = lo + f * w
        d = float(np.min(np.abs(coords - c))) if coords.size else INF
        if d >= 0.02 * w:
            return c
        if d > best_d:
            best, best_d = c, d
    return best


def _materialize_for_scan(spec, margin, tol, budget):
    """Materialized data plus a per-point error model for the truncation."""
    if spec.is_finite:
        lam, A, B = spec.materialize(spec.length + 1)
        return lam, A, B, None, {"terms": int(lam.size), "tail_at_margin": 0.0}
    seqs = list(spec.perturbations)
    M = 1024
    while True:
        worst = max(math.sqrt(u.tail_moment(2, 0, M) * v.tail_moment(2, 0, M)) for u in
                    (p[0] for p in seqs) for v in (p[1] for p in seqs)) / margin
        if worst <= tol or M >= budget:
            break
        M = min(M * 2, budget)
    lam, A, B = spec.materialize(M + 1)
    tails = np.array([[math.sqrt(u.tail_moment(2, 0, M) * v.tail_moment(2, 0, M))
                       for (_, v) in seqs] for (u, _) in seqs])
    return lam, A, B, (M, tails), {"terms": int(M), "tail_at_margin": worst}


def _det_error_model(ev, diag, trunc):
    M, tails = trunc
    if not np.all(np.isfinite(tails)):
        return lambda z: np.full(np.shape(z), INF)

    def err(z):
        z = np.atleast_1d(z)
        dist = np.array([diag.box_distance(complex(w)) for w in z])
        Mx = ev.matrices(z)
        N = Mx.shape[1]
        if N == 1:
            adj = np.ones((z.size, 1, 1))
        else:
            adj = np.abs(batched_det(Mx))[:, None, None] * np.abs(
                np.linalg.inv(Mx)).transpose(0, 2, 1)
        with np.errstate(divide="ignore"):
            return np.sum(adj * tails[None], axis=(1, 2)) / dist
    return err


def find_eigenvalues(spec: OperatorSpec, region: Optional[tuple] = None, grid: int = 4,
                     tol: float = 1e-12, margin: Optional[float] = None,
                     max_depth: int = 40, exclude_depth: int = 4,
                     budget: int = 200000, newton_iter: int = 60) -> SpectrumReport:
    """Roots of det M_T (1 + f_T for rank one) in ``region`` = (xmin, xmax, ymin, ymax)."""
    if region is None:
        region = default_region(spec)
    xmin, xmax, ymin, ymax = map(float, region)
    if margin is None:
        margin = 1e-3 * max(spec.diag.bound, 1e-300)
    notes = []
    if not (xmax > xmin and ymax > ymin):
        return SpectrumReport([], [], (xmin, xmax, ymin, ymax), 0.0, margin=margin,
                              notes=["empty region"])
    lam, A, B, trunc, tinfo = _materialize_for_scan(spec, margin, tol, budget)
    ev = DetEvaluator(lam, A, B)
    finite = trunc is None
    err = None if finite else _det_error_model(ev, spec.diag, trunc)
    if not finite:
        notes.append(f"cells within margin {margin:g} of the diagonal envelope are excluded")
    bx = spec.diag.box
    env = (bx[0] - margin, bx[1] + margin, bx[2] - margin, bx[3] + margin)
    scale = max(xmax - xmin, ymax - ymin)
    min_size = 1e-13 * max(scale, 1.0)

    def touches_env(c):
        return not (c[1] < env[0] or c[0] > env[1] or c[3] < env[2] or c[2] > env[3])

    xs = _grid_lines(xmin, xmax, grid, lam.real if finite else np.empty(0))
    ys = _grid_lines(ymin, ymax, grid, lam.imag if finite else np.empty(0))
    cells = [(xs[i], xs[i + 1], ys[j], ys[j + 1], 0) for j in range(grid) for i in range(grid)]
    cache: dict = {}
    lam_pts = lam if finite else np.empty(0, dtype=complex)

    def key(a, b):
        ka, kb = (a.real, a.imag), (b.real, b.imag)
        return ((ka, kb), 1) if ka <= kb else ((kb, ka), -1)

    def cell_edges(c):
        x0, x1, y0, y1 = c[:4]
        p = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        return [(p[i], p[(i + 1) % 4]) for i in range(4)]

    def run_edges(cs):
        todo = {}
        for c in cs:
            for a, b in cell_edges(c):
                k, _ = key(a, b)
                if k not in cache and k not in todo:
                    todo[k] = k
        ks = list(todo)
        if ks:
            Z0 = np.array([complex(*k[0]) for k in ks])
            Z1 = np.array([complex(*k[1]) for k in ks])
            for k, r in zip(ks, track_edges(ev.det, Z0, Z1, err, poles=lam_pts)):
                cache[k] = r

    def cell_info(c):
        darg, mom, flag, mn = 0.0, 0j, False, INF
        for a, b in cell_edges(c):
            k, s = key(a, b)
            r = cache[k]
            darg += s * r.darg
            mom += s * r.moment
            flag |= r.flagged
            mn = min(mn, r.min_abs)
        inside = (lam_pts.real > c[0]) & (lam_pts.real < c[1]) & \
                 (lam_pts.imag > c[2]) & (lam_pts.imag < c[3])
        on_edge = ((np.isclose(lam_pts.real, c[0], rtol=0, atol=1e-15 * scale)
                    | np.isclose(lam_pts.real, c[1], rtol=0, atol=1e-15 * scale))
                   & (lam_pts.imag >= c[2]) & (lam_pts.imag <= c[3])) | \
                  ((np.isclose(lam_pts.imag, c[2], rtol=0, atol=1e-15 * scale)
                    | np.isclose(lam_pts.imag, c[3], rtol=0, atol=1e-15 * scale))
                   & (lam_pts.real >= c[0]) & (lam_pts.real <= c[1]))
        w = darg / (2 * math.pi)
        wi = int(round(w))
        n_in = int(np.count_nonzero(inside))
        flag |= bool(on_edge.any()) or abs(w - wi) > 0.05
        return wi, n_in, flag, mom, inside, mn

    # outer boundary winding (same tracker, same cache)
    outer = (xmin, xmax, ymin, ymax, 0)
    excluded, undecided, leaves = [], [], []
    outer_winding = None
    if finite or not touches_env(outer):
        run_edges([outer])
        wi, n_in, flag, *_ = cell_info(outer)
        outer_winding = None if flag else wi + n_in

    total_cells = 0
    while cells:
        active = []
        for c in cells:
            if not finite and touches_env(c):
                if c[4] >= exclude_depth:
                    excluded.append(tuple(float(v) for v in c[:4]))
                    continue
                active.append(("split", c))
                continue
            active.append(("scan", c))
        run_edges([c for kind, c in active if kind == "scan"])
        nxt = []
        for kind, c in active:
            if kind == "split":
                nxt.extend(_split(c, lam_pts))
                continue
            wi, n_in, flag, mom, inside, mn = cell_info(c)
            if flag:
                undecided.append({"cell": [float(v) for v in c[:4]],
                                  "reason": "argument not resolved on the boundary "
                                            "(value within error bound or lambda on edge)"})
                continue
            count = wi + n_in
            total_cells += count
            if count <= 0:
                if count < 0:
                    undecided.append({"cell": [float(v) for v in c[:4]],
                                      "reason": f"negative eigenvalue count {count}"})
                continue
            size = max(c[1] - c[0], c[3] - c[2])
            if count >= 2 and c[4] < max_depth and size > min_size:
                total_cells -= count
                nxt.extend(_split(c, lam_pts))
                continue
            guess = mom + complex(np.sum(lam_pts[inside]))
            leaves.append((c, count, guess, inside))
        cells = nxt

    roots = _polish(ev, lam_pts, leaves, tol, newton_iter)
    if lam_pts.size:
        keep = []
        for r in roots:
            d = float(np.min(np.abs(lam_pts - r.z)))
            if d <= 1e-10 * max(scale, 1.0) and not r.residual <= 1e-8:
                notes.append(f"eigenvalue at lambda = {r.z.real:.17g}{r.z.imag:+.17g}j is not "
                             "a root of det M_T (see the multiplicity report)")
            else:
                keep.append(r)
        roots = keep
    roots.sort(key=lambda r: (r.z.real, r.z.imag))
    acc = []
    if not finite:
        acc = accumulation_candidates(lam, spec.diag.bound)
    report = SpectrumReport(acc, roots, (xmin, xmax, ymin, ymax), (xmax - xmin) / grid,
                            excluded, undecided, outer_winding, total_cells, margin, tinfo, notes)
    if outer_winding is not None and not undecided and not excluded and outer_winding != total_cells:
        report.notes.append(f"cell counts {total_cells} differ from boundary count {outer_winding}")
    return report


def _grid_lines(lo, hi, n, coords):
    w = (hi - lo) / n
    xs = [lo]
    for i in range(1, n):
        xs.append(_pick_split(lo + (i - 0.5) * w, lo + (i + 0.5) * w, coords))
    xs.append(hi)
    return np.array(xs)


def _split(c, lam_pts):
    x0, x1, y0, y1, d = c
    inside = (lam_pts.real >= x0) & (lam_pts.real <= x1) & (lam_pts.imag >= y0) & (lam_pts.imag <= y1)
    pts = lam_pts[inside]
    xm = _pick_split(x0, x1, pts.real)
    ym = _pick_split(y0, y1, pts.imag)
    return [(x0, xm, y0, ym, d + 1), (xm, x1, y0, ym, d + 1),
            (x0, xm, ym, y1, d + 1), (xm, x1, ym, y1, d + 1)]


def _polish(ev, lam_pts, leaves, tol, iters):
    """Damped Newton on g_cell for every leaf simultaneously."""
    if not leaves:
        return []
    L = len(leaves)
    z = np.array([g for _, _, g, _ in leaves], dtype=complex)
    cells = [c for c, _, _, _ in leaves]
    centers = np.array([complex(0.5 * (c[0] + c[1]), 0.5 * (c[2] + c[3])) for c in cells])
    sizes = np.array([max(c[1] - c[0], c[3] - c[2]) for c in cells])
    bad0 = ~np.isfinite(z) | (np.abs(z - centers) > sizes)
    z[bad0] = centers[bad0]
    masks = np.array([m for _, _, _, m in leaves]) if lam_pts.size else None
    done = np.zeros(L, dtype=bool)
    its = np.zeros(L, dtype=int)
    for it in range(iters):
        act = ~done
        if not act.any():
            break
        za = z[act]
        _, Ld = ev.det_and_logderiv(za)
        if masks is not None and masks.any():
            with np.errstate(all="ignore"):
                Ld = Ld - np.sum(np.where(masks[act], 1.0 / (lam_pts[None, :] - za[:, None]), 0), axis=1)
        with np.errstate(all="ignore"):
            step = -1.0 / Ld
        if lam_pts.size:
            dmin = np.min(np.abs(lam_pts[None, :] - za[:, None]), axis=1)
            cap = 0.5 * dmin
            big = np.abs(step) > cap
            step[big] = step[big] / np.abs(step[big]) * cap[big]
        step = np.where(np.isfinite(step), step, 0)
        z[act] = za + step
        its[act] += 1
        conv = np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(za)) + 1e-3 * tol
        idx = np.nonzero(act)[0]
        done[idx[conv]] = True
    res = np.abs(ev.det(z))
    out = []
    for k, (c, count, _, _) in enumerate(leaves):
        x0, x1, y0, y1 = c[:4]
        slack = 1e-6 * sizes[k] + 1e-12
        in_cell = (x0 - slack <= z[k].real <= x1 + slack) and (y0 - slack <= z[k].imag <= y1 + slack)
        if not done[k]:
            status = "inconclusive: Newton did not converge"
        elif not in_cell:
            status = "inconclusive: Newton left the cell"
        else:
            status = "converged"
        out.append(RootCandidate(complex(z[k]), float(res[k]), tuple(float(v) for v in c[:4]),
                                 int(count), status, int(its[k])))
    return out


# ---------------------------------------------------------------------------
# relevant set sampling and the exceptional cover
# ---------------------------------------------------------------------------

SAMPLE_DENOMINATOR = 1000003   # prime, so sample abscissas avoid dyadic rationals


@dataclass
class RelevantSetSample:
    interval: tuple
    samples: list
    hit_fraction: float
    decisive: int

    def certified(self) -> list:
        return [x for x, v in self.samples if v == sr.CONVERGES]

    def to_doc(self):
        return {"interval": [float(self.interval[0]), float(self.interval[1])],
                "samples": [[float(x), v] for x, v in self.samples],
                "hit_fraction": self.hit_fraction, "decisive": self.decisive}


def sample_points(a: Fraction, b: Fraction, num: int, seed: Optional[int] = None) -> list:
    """Exact rationals in the open interval (a, b) with denominator dividing a prime."""
    P = SAMPLE_DENOMINATOR
    if seed is None:
        js = [int((k + 0.5) * P / num) for k in range(num)]
    else:
        rng = np.random.default_rng(seed)
        js = sorted(int(j) for j in rng.integers(1, P, size=num))
    return [a + (b - a) * Fraction(max(j, 1), P) for j in js]


def point_verdict(spec: OperatorSpec, x: Fraction, tol: float, budget: int):
    rel = sr.relevant_set_series(spec, x, tol, budget)
    if rel.verdict != sr.CONVERGES:
        return rel.verdict, rel
    logs = []
    for k in range(spec.rank):
        try:
            logs.append(sr.log_square_series(spec, x, tol, budget, k=k))
        except sr.PoleError:
            return sr.DIVERGES, rel
    if all(l.verdict == sr.CONVERGES for l in logs):
        return sr.CONVERGES, rel
    return sr.INCONCLUSIVE, rel


def relevant_set_sample(spec: OperatorSpec, interval: Optional[tuple] = None,
                        num_samples: int = 1000, tol: float = 1e-8,
                        budget: int = 10 ** 6, seed: Optional[int] = None) -> RelevantSetSample:
    """Per-x verdicts of the relevant-set and log-square series at sampled abscissas."""
    if interval is None:
        interval = (spec.diag.box[0], spec.diag.box[1])
    a, b = as_fraction(interval[0]), as_fraction(interval[1])
    xs = sample_points(a, b, num_samples, seed)

    def one(x):
        return point_verdict(spec, x, tol, budget)[0]

    w = worker_count()
    if w > 1:
        with ThreadPoolExecutor(w) as pool:
            verdicts = list(pool.map(one, xs))
    else:
        verdicts = [one(x) for x in xs]
    dec = sum(v != sr.INCONCLUSIVE for v in verdicts)
    hits = sum(v == sr.CONVERGES for v in verdicts)
    frac = hits / dec if dec else 0.0
    return RelevantSetSample((a, b), list(zip(xs, verdicts)), frac, dec)


@dataclass
class CoverMeasure:
    delta: float
    certified_bound: float
    measured_union: float
    partial_bound: float
    tail: float
    terms: int
    window: tuple
    rounding_allowance: float = 0.0

    @property
    def holds(self) -> bool:
        return self.measured_union <= self.certified_bound

    def to_doc(self):
        return dict(delta=self.delta, certified_bound=self.certified_bound,
                    measured_union=self.measured_union, partial_bound=self.partial_bound,
                    tail=self.tail, terms=self.terms, window=list(self.window),
                    rounding_allowance=self.rounding_allowance)


def union_length(lo: np.ndarray, hi: np.ndarray) -> float:
    if lo.size == 0:
        return 0.0
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    # a new component starts where lo exceeds everything reached so far
    start = np.concatenate([[True], lo[1:] > reach[:-1]])
    comp = np.cumsum(start) - 1
    c_lo = lo[start]
    c_hi = np.full(c_lo.size, -INF)
    np.maximum.at(c_hi, comp, hi)
    return math.fsum((c_hi - c_lo).tolist())


def exceptional_cover_measure(spec: OperatorSpec, delta: float, terms: int = 100000,
                              window: tuple = (-1.0, 1.0)) -> CoverMeasure:
    """Union length of I_n = [Re lambda_n -+ delta |alpha_n|^2] inside ``window``.

    The certified bound is 2 delta sum_n |alpha_n^(k)|^2 over every u_k.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    lam, A, _ = spec.materialize(terms + 1)
    M = lam.size
    los, his, partial, tail, slack = [], [], [], 0.0, 0.0
    for k, (u, _) in enumerate(spec.perturbations):
        r = delta * np.abs(A[k]) ** 2
        partial.append(2 * math.fsum(r.tolist()))
        tail += 2 * delta * u.tail_moment(2, 0, M)
        nz = r > 0
        # endpoints Re lambda -+ r are rounded: each length may grow by 2 ulp
        slack += 4 * np.finfo(float).eps * math.fsum((np.abs(lam.real[nz]) + r[nz]).tolist())
        los.append(np.clip(lam.real[nz] - r[nz], *window))
        his.append(np.clip(lam.real[nz] + r[nz], *window))
    measured = union_length(np.concatenate(los), np.concatenate(his))
    p = math.fsum(partial)
    return CoverMeasure(float(delta), p + tail + slack, measured, p, tail, int(M),
                        tuple(window), slack)


@dataclass
class WitnessSearch:
    pair: Optional[tuple]
    log: list

    def to_doc(self):
        return {"pair": None if self.pair is None else [float(x) for x in self.pair],
                "log": [dict(x=float(x), verdict=v, note=n) for x, v, n in self.log]}


def corollary_witness_search(spec: OperatorSpec, num_samples: int = 64, tol: float = 1e-8,
                             budget: int = 10 ** 6, seed: Optional[int] = None,
                             interval: Optional[tuple] = None) -> WitnessSearch:
    """Two certified points x1 < x2 of the relevant set inside (a, b)."""
    if interval is None:
        interval = (spec.diag.box[0], spec.diag.box[1])
    a, b = as_fraction(interval[0]), as_fraction(interval[1])
    log, found = [], []
    if a >= b:
        return WitnessSearch(None, [(a, sr.INCONCLUSIVE, "degenerate interval")])
    for x in sample_points(a, b, num_samples, seed):
        v, rel = point_verdict(spec, x, tol, budget)
        note = ""
        if v == sr.DIVERGES:
            bad = [p.witness.get("sequence") for p in rel.breakdown if p.verdict == sr.DIVERGES]
            note = "diverges on " + ",".join(str(s) for s in bad)
        log.append((x, v, note))
        if v == sr.CONVERGES:
            found.append(x)
            if len(found) >= 2:
                return WitnessSearch((min(found), max(found)), log)
    return WitnessSearch(None, log)
