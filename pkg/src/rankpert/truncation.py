"""Finite truncations: dense eigenpairs, Riesz projections and the quasisimilar pair."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .contour import ContourCurve, CurveError
from .operator import OperatorSpec, truncate

DENSE_CAP = 2000
RESIDUAL_TARGET = 1e-10


class ContractError(ValueError):
    """A numerical precondition failed (eigenvalue on a curve, point in Lambda, ...)."""


def dense_eigendecomposition(matrix: np.ndarray, cap: int = DENSE_CAP):
    """All eigenpairs (value, unit vector, relative residual) via LAPACK geev."""
    T = np.asarray(matrix, dtype=complex)
    d = T.shape[0]
    if T.shape != (d, d):
        raise ValueError("matrix must be square")
    if d > cap:
        raise ValueError(f"dimension {d} exceeds the dense cap {cap}")
    w, V = np.linalg.eig(T)
    nrm = max(np.linalg.norm(T, 2), 1e-300)
    res = np.linalg.norm(T @ V - V * w[None, :], axis=0) / nrm
    order = np.lexsort((w.imag, w.real))
    return [(complex(w[i]), V[:, i], float(res[i])) for i in order]


def flagged_pairs(pairs, target: float = RESIDUAL_TARGET):
    return [(z, r) for z, _, r in pairs if not r <= target]


# ---------------------------------------------------------------------------
# Riesz projections
# ---------------------------------------------------------------------------


@dataclass
class RieszProjection:
    matrix: np.ndarray
    curve: ContourCurve
    quadrature_nodes: int
    idempotency_defect: float
    invariance_defect: float
    rank_estimate: int
    plateau_change: float = 0.0
    enclosed_count: int = 0

    def recompute(self, T: np.ndarray) -> tuple:
        return _defects(T, self.matrix)

    def to_doc(self):
        return {"quadrature_nodes": self.quadrature_nodes,
                "idempotency_defect": self.idempotency_defect,
                "invariance_defect": self.invariance_defect, "rank_estimate": self.rank_estimate,
                "plateau_change": self.plateau_change, "enclosed_count": self.enclosed_count,
                "trace": [complex(np.trace(self.matrix)).real, complex(np.trace(self.matrix)).imag],
                "curve": self.curve.to_doc(), "matrix": matrix_to_doc(self.matrix)}


def matrix_to_doc(M: np.ndarray) -> list:
    """Row-major [re, im] pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M, dtype=complex)]


def matrix_from_doc(rows) -> np.ndarray:
    return np.array([[complex(a, b) for a, b in row] for row in rows], dtype=complex)


def _defects(T, P):
    idem = float(np.linalg.norm(P @ P - P, 2))
    nT = max(float(np.linalg.norm(T, 2)), 1e-300)
    I = np.eye(T.shape[0])
    inv = float(np.linalg.norm((I - P) @ T @ P, 2)) / nT
    return idem, inv


def _rank(P, tol=1e-8):
    s = np.linalg.svd(P, compute_uv=False)
    return int(np.count_nonzero(s > tol * max(1.0, s[0] if s.size else 0.0)))


def _quadrature(T, curve, n):
    zs, ws = curve.gauss(n)
    d = T.shape[0]
    I = np.eye(d)
    P = np.zeros((d, d), dtype=complex)
    for z, w in zip(zs, ws):
        P += w * np.linalg.solve(z * I - T, I)
    return P / (2j * math.pi)


def riesz_projection(matrix: np.ndarray, curve: ContourCurve, nodes: int = 64,
                     max_nodes: int = 4096, plateau: float = 1e-10,
                     eig_clearance: float = 1e-8) -> RieszProjection:
    """P = (2 pi i)^-1 oint (zI - T)^-1 dz, nodes per piece doubled until P settles."""
    T = np.asarray(matrix, dtype=complex)
    ev = np.linalg.eigvals(T)
    dist = curve.distance(ev)
    k = int(np.argmin(dist))
    if dist[k] <= eig_clearance:
        z = ev[k]
        raise ContractError(f"eigenvalue {z.real:.12g}{z.imag:+.12g}j lies within "
                            f"{eig_clearance:g} of the curve")
    P = _quadrature(T, curve, nodes)
    change = math.inf
    n = nodes
    while n < max_nodes:
        P2 = _quadrature(T, curve, 2 * n)
        change = float(np.linalg.norm(P2 - P, 2))
        P, n = P2, 2 * n
        if change < plateau:
            break
    idem, inv = _defects(T, P)
    enclosed = sum(1 for z in ev if curve.inside(z))
    return RieszProjection(P, curve, n, idem, inv, _rank(P), change, enclosed)


@dataclass
class InvarianceReport:
    idempotency_defect: float
    invariance_defect: float
    rank_estimate: int
    commutant_defects: list
    trivial: bool
    note: str = ""

    def to_doc(self):
        return {"idempotency_defect": self.idempotency_defect,
                "invariance_defect": self.invariance_defect, "rank_estimate": self.rank_estimate,
                "commutant_max": max(self.commutant_defects) if self.commutant_defects else 0.0,
                "commutant_defects": list(self.commutant_defects), "trivial": self.trivial,
                "note": self.note}


def invariance_report(matrix: np.ndarray, projection: np.ndarray, probes: int = 20,
                      seed: int = 0) -> InvarianceReport:
    """Defects of range(P) as an invariant subspace, including p(T) for random polynomials p."""
    T = np.asarray(matrix, dtype=complex)
    P = np.asarray(projection, dtype=complex)
    if T.shape != P.shape:
        raise ValueError("shapes differ")
    idem, inv = _defects(T, P)
    rank = _rank(P)
    d = T.shape[0]
    rng = np.random.default_rng(seed)
    I = np.eye(d)
    scale = max(float(np.linalg.norm(T, 2)), 1e-300)
    Ts = T / scale
    out = []
    for _ in range(probes):
        deg = int(rng.integers(1, 6))
        coef = rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)
        pT = np.zeros_like(T)
        for c in coef:
            pT = pT @ Ts + c * I
        n = max(float(np.linalg.norm(pT, 2)), 1e-300)
        out.append(float(np.linalg.norm((I - P) @ pT @ P, 2)) / n)
    trivial = rank in (0, d)
    return InvarianceReport(idem, inv, rank, out, trivial, "trivial subspace" if trivial else "")


# ---------------------------------------------------------------------------
# quasisimilar pair
# ---------------------------------------------------------------------------

CUT_CLEARANCE = 1e-12


@dataclass
class QuasisimilarPair:
    xi0: complex
    rotation: complex
    T_shifted: np.ndarray
    sqrt_diag: np.ndarray
    T_tilde: np.ndarray
    S: np.ndarray
    U: np.ndarray
    defect_left: float
    defect_right: float
    min_angle: float
    sqrt_check: float
    lam_shifted: np.ndarray = field(repr=False, default=None)
    A: np.ndarray = field(repr=False, default=None)
    B: np.ndarray = field(repr=False, default=None)

    @property
    def intertwining_defects(self):
        return (self.defect_left, self.defect_right)

    def to_doc(self):
        return {"xi0": [self.xi0.real, self.xi0.imag],
                "rotation": [self.rotation.real, self.rotation.imag],
                "intertwining_defects": [self.defect_left, self.defect_right],
                "min_angle_from_cut": self.min_angle, "sqrt_check": self.sqrt_check,
                "dim": int(self.T_shifted.shape[0])}


def _min_cut_angle(theta, lam):
    """Smallest angular distance of e^{i theta} lam from the negative real axis."""
    return float(np.min(math.pi - np.abs(np.angle(np.exp(1j * theta) * lam))))


def best_rotation(lam: np.ndarray) -> tuple:
    """theta maximizing the minimum angular distance from (-inf, 0]: 720-point grid + golden refine."""
    grid = np.linspace(-math.pi, math.pi, 720, endpoint=False)
    vals = [_min_cut_angle(t, lam) for t in grid]
    k = int(np.argmax(vals))
    step = grid[1] - grid[0]
    r = minimize_scalar(lambda t: -_min_cut_angle(t, lam),
                        bracket=None, bounds=(grid[k] - step, grid[k] + step), method="bounded",
                        options={"xatol": 1e-14})
    theta, val = (float(r.x), -float(r.fun)) if -r.fun >= vals[k] else (float(grid[k]), vals[k])
    return theta, val


def quasisimilar_pair(spec: OperatorSpec, xi0: complex, dim: int) -> QuasisimilarPair:
    """T_r = e^{i theta}(T - xi0) on the truncation, D = diag, U = D^{-1/2} T_r, T~ = U D^{1/2}.

    Then T_r D^{1/2} = D^{1/2} T~ and U T_r = T~ U exactly.  S = T~, whose
    adjoint satisfies M_{S*}(0) = M_T(xi0)^*.
    """
    xi0 = complex(xi0)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    lam, A, B = spec.materialize(dim + 1)
    dim = lam.size
    shifted = lam - xi0
    zero = np.nonzero(shifted == 0)[0]
    if zero.size:
        raise ContractError(f"xi0 equals lambda_{int(zero[0]) + 1}")
    theta, ang = best_rotation(shifted)
    if ang < CUT_CLEARANCE:
        raise ContractError(f"no rotation keeps the shifted diagonal {ang:g} away from (-inf, 0]")
    rot = complex(math.cos(theta), math.sin(theta))
    d = rot * shifted
    r = np.sqrt(d)
    sqrt_check = float(np.max(np.abs(r * r - d) / np.abs(d)))
    Tr = np.diag(d) + (rot * A).T @ B.conj()
    Dh = np.diag(r)
    U = Tr / r[:, None]
    Tt = U * r[None, :]
    nT = max(float(np.linalg.norm(Tr, 2)), 1e-300)
    left = float(np.linalg.norm(Tr @ Dh - Dh @ Tt, 2)) / nT
    right = float(np.linalg.norm(U @ Tr - Tt @ U, 2)) / nT
    S = Tt
    return QuasisimilarPair(xi0, rot, Tr, Dh, Tt, S, U, left, right, ang, sqrt_check,
                            d, rot * A / r[None, :], B * np.conj(r)[None, :])


@dataclass
class MSStarCheck:
    defect: float
    M_T: np.ndarray
    M_S_star: np.ndarray
    verdict: str

    def to_doc(self):
        return {"defect": self.defect, "verdict": self.verdict,
                "M_T": matrix_to_doc(self.M_T), "M_S_star": matrix_to_doc(self.M_S_star)}


def ms_star_identity_check(spec: OperatorSpec, xi0: complex, dim: int,
                           tol: float = 1e-11) -> MSStarCheck:
    """Compare M_{S*}(0) with M_T(xi0)^* on the truncation.

    T~ = D + sum (D^{-1/2} rot u_k) (x) (D^{1/2 *} v_k); S* is its adjoint with
    diagonal conj(D), so M_{S*}(0)_{ij} = sum conj(b~_i) a~_j / conj(d).
    """
    q = quasisimilar_pair(spec, xi0, dim)
    lam, A, B = spec.materialize(dim + 1)
    N = A.shape[0]
    rot = q.rotation
    d = q.lam_shifted
    At, Bt = q.A, q.B
    # S* = conj(D) + sum Bt_k (x) At_k ; its Borel matrix at 0
    M_S = np.eye(N, dtype=complex) + (Bt / np.conj(d)[None, :]) @ np.conj(At).T
    # M_T(xi0) of the rotated operator e^{i theta}(T - xi0) at 0 equals M_T(xi0)
    M_T = np.eye(N, dtype=complex) + (A / (lam - xi0)[None, :]) @ np.conj(B).T
    defect = float(np.max(np.abs(M_S - M_T.conj().T)))
    verdict = "ok" if defect <= tol else "exceeds tolerance"
    return MSStarCheck(defect, M_T, M_S, verdict)
