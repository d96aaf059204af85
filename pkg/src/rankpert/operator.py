"""The operator T = D_Lambda + sum_k u_k (x) v_k and its validation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .sequences import (CoefficientSequence, DiagonalSequence, FiniteCoefficients,
                        FiniteDiagonal, SpecError, coefficients_from_doc,
                        diagonal_from_doc)

NONZERO_PROBE = 4096


@dataclass(frozen=True)
class OperatorSpec:
    diag: DiagonalSequence
    perturbations: tuple
    pq: Optional[tuple] = None
    l2_certificates: tuple = field(default=(), compare=False)

    @property
    def rank(self) -> int:
        return len(self.perturbations)

    @property
    def is_finite(self) -> bool:
        return self.diag.length is not None

    @property
    def length(self) -> Optional[int]:
        return self.diag.length

    def coefficient_sequences(self):
        for u, v in self.perturbations:
            yield u
            yield v

    def materialize(self, stop: int):
        """(lam, A, B) for indices 1..stop-1; A[k] = alpha^(k), B[k] = beta^(k)."""
        if self.length is not None:
            stop = min(stop, self.length + 1)
        lam = self.diag.values(1, stop)
        A = np.array([u.values(1, stop) for u, _ in self.perturbations])
        B = np.array([v.values(1, stop) for _, v in self.perturbations])
        return lam, A, B

    def adjoint(self) -> "OperatorSpec":
        """T* = conj(D) + sum v_k (x) u_k."""
        return OperatorSpec(self.diag.conjugate(),
                            tuple((v, u) for u, v in self.perturbations),
                            None if self.pq is None else (self.pq[1], self.pq[0]),
                            self.l2_certificates)

    def to_doc(self) -> dict:
        doc = {"diag": self.diag.to_doc(),
               "perturbations": [{"u": u.to_doc(), "v": v.to_doc()}
                                 for u, v in self.perturbations]}
        if self.pq is not None:
            doc["pq"] = [float(self.pq[0]), float(self.pq[1])]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True)


def build_operator_spec(diag: DiagonalSequence, perturbations: Sequence,
                        pq: Optional[tuple] = None) -> OperatorSpec:
    """Validate the data of T and record an l2 certificate per coefficient sequence."""
    if not isinstance(diag, DiagonalSequence):
        diag = FiniteDiagonal(diag)
    if not math.isfinite(diag.bound):
        raise SpecError("unbounded diagonal")
    pairs = []
    for k, pair in enumerate(perturbations):
        u, v = pair
        if not isinstance(u, CoefficientSequence):
            u = FiniteCoefficients(u)
        if not isinstance(v, CoefficientSequence):
            v = FiniteCoefficients(v)
        pairs.append((u, v))
    if not pairs:
        raise SpecError("at least one perturbation pair is required")
    certs = []
    for k, (u, v) in enumerate(pairs, start=1):
        for label, seq in ((f"u_{k}", u), (f"v_{k}", v)):
            if seq.kind == "finite-list":
                if diag.length is not None and seq.length != diag.length:
                    raise SpecError(f"{label} has length {seq.length}, diagonal has {diag.length}")
            else:
                if diag.length is not None:
                    raise SpecError(f"{label} is rule-generated but the diagonal is a finite list")
                if getattr(seq, "tail", None) is None:
                    raise SpecError(f"missing tail majorant on rule-generated sequence {label}")
            if not seq.probe_nonzero(NONZERO_PROBE):
                raise SpecError(f"zero perturbation vector {label}")
            norm_sq = seq.tail_moment(2.0, 0.0, 0)
            if not math.isfinite(norm_sq):
                raise SpecError(f"{label} has no certified l2 bound")
            certs.append({"sequence": label, "norm_sq_bound": norm_sq})
    if pq is not None:
        pq = (float(pq[0]), float(pq[1]))
    return OperatorSpec(diag, tuple(pairs), pq, tuple(certs))


def spec_from_doc(doc: dict) -> OperatorSpec:
    try:
        diag = diagonal_from_doc(doc["diag"])
        pairs = [(coefficients_from_doc(p["u"]), coefficients_from_doc(p["v"]))
                 for p in doc["perturbations"]]
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed operator spec: missing {exc}") from None
    return build_operator_spec(diag, pairs, doc.get("pq"))


def spec_from_json(text: str) -> OperatorSpec:
    return spec_from_doc(json.loads(text))


def finite_spec(diag, us, vs, pq=None) -> OperatorSpec:
    """Convenience constructor for finite-list data; ``us``/``vs`` are lists of vectors."""
    us = np.atleast_2d(np.asarray(us, dtype=complex))
    vs = np.atleast_2d(np.asarray(vs, dtype=complex))
    return build_operator_spec(FiniteDiagonal(diag),
                               [(FiniteCoefficients(u), FiniteCoefficients(v))
                                for u, v in zip(us, vs)], pq)


def truncate(spec: OperatorSpec, dim: int) -> np.ndarray:
    """dim x dim compression: diag(lambda) + sum_k alpha^(k) beta^(k)^H."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if spec.length is not None and dim > spec.length:
        raise ValueError(f"dim {dim} exceeds the finite length {spec.length}")
    lam, A, B = spec.materialize(dim + 1)
    return np.diag(lam) + A.T @ B.conj()


# ---------------------------------------------------------------------------
# class (RO) / (RO)_N
# ---------------------------------------------------------------------------


@dataclass
class ROClassification:
    in_class: bool
    failed_conditions: list
    notes: list
    accumulation_candidates: list = field(default_factory=list)

    def to_doc(self):
        return {"in_class": self.in_class, "failed_conditions": list(self.failed_conditions),
                "notes": list(self.notes),
                "accumulation_candidates": [[z.real, z.imag] for z in self.accumulation_candidates]}


def _multiplicities(lam: np.ndarray, tol: float) -> np.ndarray:
    if tol == 0:
        _, counts = np.unique(lam, return_counts=True)
        return counts
    keys = np.round(lam.real / tol) + 1j * np.round(lam.imag / tol)
    _, counts = np.unique(keys, return_counts=True)
    return counts


def accumulation_candidates(lam: np.ndarray, bound: float, bins: int = 64) -> list:
    """Cells of a bins x bins grid over the bounding box visited by the late half of lam."""
    if lam.size < 8:
        return []
    tail = lam[lam.size // 2:]
    h = 2 * max(bound, 1e-300) / bins
    keys = sorted(set(zip(np.floor(tail.real / h).astype(int).tolist(),
                          np.floor(tail.imag / h).astype(int).tolist())))
    return [complex((a + 0.5) * h, (b + 0.5) * h) for a, b in keys]


def classify_ro(spec: OperatorSpec, probe_depth: int) -> ROClassification:
    """Check (RO)_N conditions (i)-(iii) on the first probe_depth indices."""
    lam, A, B = spec.materialize(probe_depth + 1)
    failed, notes = [], []
    support = np.any(A != 0, axis=0) & np.any(B != 0, axis=0)
    if not np.all(support):
        bad = np.nonzero(~support)[0] + 1
        failed.append("coeff-support")
        shown = ", ".join(str(int(n)) for n in bad[:10])
        notes.append(f"no nonzero alpha^(k1) beta^(k2) at n = {shown}"
                     + (" ..." if bad.size > 10 else "") + f" ({bad.size} indices)")
    tol = 0.0 if spec.diag.exact_equality else 1e-14 * max(spec.diag.bound, 1e-300)
    counts = _multiplicities(lam, tol)
    if counts.max() > spec.rank:
        failed.append("multiplicity")
        notes.append(f"a diagonal value repeats {int(counts.max())} times (allowed {spec.rank})")
    cands = []
    if spec.diag.kind == "finite-list":
        notes.append("derived set undecidable - finite data")
    else:
        cands = accumulation_candidates(lam, spec.diag.bound)
        if len(cands) < 2:
            failed.append("derived-set")
            notes.append("fewer than two accumulation candidates in the probed tail")
        else:
            notes.append(f"derived set: {len(cands)} accumulation candidates (heuristic, not a proof)")
    return ROClassification(not failed, failed, notes, cands)
