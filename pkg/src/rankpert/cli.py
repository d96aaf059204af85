"""Command-line front end: ``rankpert <command> --spec file.json ...``.

Exit codes: 0 success, 2 input error, 3 numerical-contract violation,
4 budget exhausted (inconclusive result).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import series as sr
from .contour import (CurveError, build_gamma, check_subspace_hypotheses, curve_from_doc,
                      normalize_to_upper_disc)
from .counterexample import growth_table, lower_bound_growth
from .operator import OperatorSpec, classify_ro, spec_from_doc, truncate
from .sequences import SpecError
from .spectral import corollary_witness_search, default_region, find_eigenvalues
from .truncation import (ContractError, invariance_report, ms_star_identity_check,
                         quasisimilar_pair, riesz_projection)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONTRACT = 3
EXIT_BUDGET = 4

PROBE_DEPTH = 1 << 16


class InputError(Exception):
    pass


def schema(command: str) -> dict:
    """The published JSON schema for a command's report."""
    from importlib.resources import files
    return json.loads(files("rankpert").joinpath("schemas", f"{command}.schema.json").read_text())


# ---------------------------------------------------------------------------
# input / output helpers
# ---------------------------------------------------------------------------


def _load_json(path: str, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc.msg} at line {exc.lineno}, "
                         f"column {exc.colno}") from None


def load_spec(path: str) -> OperatorSpec:
    doc = _load_json(path, "spec")
    if not isinstance(doc, dict):
        raise InputError(f"{path}: the operator spec must be a JSON object")
    try:
        return spec_from_doc(doc)
    except SpecError as exc:
        raise InputError(f"{path}: {exc}") from None


def clean(obj):
    """Plain JSON types only; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return clean(float(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (complex, np.complexfloating)):
        return [clean(obj.real), clean(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(doc) -> str:
    return json.dumps(clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _svg_path(args) -> str | None:
    if args.svg is None:
        return None
    if args.svg != "auto":
        return args.svg
    if args.out not in (None, "-"):
        return str(Path(args.out).with_suffix(".svg"))
    return f"rankpert-{args.command}.svg"


def _envelope(args, result, config):
    return {"command": args.command, "version": __version__, "config": config,
            "result": result}


def _parse_complex(text: str) -> complex:
    try:
        parts = [float(t) for t in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse complex number {text!r}; use 're,im'") from None
    if len(parts) == 1:
        return complex(parts[0], 0.0)
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise InputError(f"cannot parse complex number {text!r}; use 're,im'")


def _parse_region(text):
    if text is None:
        return None
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) != 4:
        raise InputError("--region expects xmin,xmax,ymin,ymax")
    return tuple(vals)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_spectrum(args) -> int:
    spec = load_spec(args.spec)
    region = _parse_region(args.region)
    tol = 1e-12 if args.tol is None else args.tol
    rep = find_eigenvalues(spec, region, grid=args.grid, tol=tol)
    config = {"spec": args.spec, "region": region, "grid": args.grid, "tol": tol}
    code = EXIT_OK
    if rep.undecided_cells or any(r.status != "converged" for r in rep.root_candidates):
        code = EXIT_BUDGET
    result = rep.to_doc()
    result["status"] = "complete" if code == EXIT_OK else "inconclusive"
    _write(args.out, dumps(_envelope(args, result, config)))
    path = _svg_path(args)
    if path:
        from .svg import spectrum_svg
        lam = spec.diag.values(1, (spec.length or 4096) + 1)
        Path(path).write_text(spectrum_svg(rep, lam))
    return code


def _declared_pq(spec: OperatorSpec):
    """(p, q, source) from the declared pair or from power decay classes."""
    if spec.pq is not None:
        return spec.pq[0], spec.pq[1], "declared pq"
    us = [u.decay_class for u, _ in spec.perturbations]
    vs = [v.decay_class for _, v in spec.perturbations]
    if any(d is None for d in us + vs):
        return None
    # |c_n| <= C n^-s gives sum |c_n|^p < inf for every p > 1/s
    p = min(2.0, np.nextafter(1.0 / min(d["power"] for d in us), math.inf))
    q = min(2.0, np.nextafter(1.0 / min(d["power"] for d in vs), math.inf))
    return float(p), float(q), "decay_class"


def cmd_classify(args) -> int:
    spec = load_spec(args.spec)
    depth = spec.length if spec.is_finite else PROBE_DEPTH
    ro = classify_ro(spec, depth)
    conditions = {c: sr.check_summability(spec, c).to_doc() for c in sr.CONDITIONS}
    pq = _declared_pq(spec)
    result = {"ro": ro.to_doc(), "conditions": conditions}
    if pq is None:
        result["region"] = "inconclusive"
        result["pq"] = None
        result["notes"] = ["no declared (p, q) or decay_class on every coefficient sequence"]
    else:
        p, q, source = pq
        result["pq"] = [p, q]
        result["pq_source"] = source
        try:
            result["region"] = sr.theorem_region_membership(p, q)
            result["pq_check"] = sr.check_summability(spec, ("PQ", p, q)).to_doc()
            result["notes"] = []
        except ValueError as exc:
            result["region"] = "inconclusive"
            result["notes"] = [str(exc)]
    config = {"spec": args.spec, "probe_depth": depth}
    _write(args.out, dumps(_envelope(args, result, config)))
    path = _svg_path(args)
    if path:
        from .svg import region_svg
        Path(path).write_text(region_svg(None if pq is None else pq[:2], result["region"]))
    return EXIT_OK


def _trivially_reducible(spec: OperatorSpec) -> bool:
    """Every product alpha_n^(k1) conj(beta_n^(k2)) vanishes on the probed indices."""
    depth = spec.length if spec.is_finite else PROBE_DEPTH
    _, A, B = spec.materialize(depth + 1)
    return not bool(np.any(np.any(A != 0, axis=0) & np.any(B != 0, axis=0)))


def cmd_probe(args) -> int:
    spec = load_spec(args.spec)
    tol = 1e-8 if args.tol is None else args.tol
    config = {"spec": args.spec, "samples": args.samples, "seed": args.seed, "tol": tol,
              "dim": args.dim}
    if _trivially_reducible(spec):
        result = {"status": "trivially reducible", "witness": None, "hypotheses": [],
                  "riesz": None,
                  "notes": ["alpha_n beta_n = 0 for every n: f_T vanishes identically and "
                            "the span of {e_n : beta_n = 0} is invariant"]}
        _write(args.out, dumps(_envelope(args, result, config)))
        return EXIT_OK
    search = corollary_witness_search(spec, num_samples=args.samples, tol=tol, seed=args.seed)
    result = {"witness": search.to_doc(), "hypotheses": [], "riesz": None, "notes": []}
    code = EXIT_OK
    if search.pair is None:
        verdicts = {v for _, v, _ in search.log}
        result["status"] = "no witness found"
        if sr.DIVERGES not in verdicts and sr.INCONCLUSIVE in verdicts:
            code = EXIT_BUDGET
        _write(args.out, dumps(_envelope(args, result, config)))
        return code
    x1, x2 = search.pair
    reports = []
    for x, side in ((x2, "plus"), (x1, "minus")):
        try:
            rep = check_subspace_hypotheses(spec, x, side, tol=1e-10)
            reports.append({"x": x, "side": side, "report": rep.to_doc()})
        except (ValueError, CurveError) as exc:
            reports.append({"x": x, "side": side, "report": None, "error": str(exc)})
    result["hypotheses"] = reports
    nspec, amap = normalize_to_upper_disc(spec, default_region(spec) if spec.is_finite else None)
    dim = args.dim if not spec.is_finite else min(args.dim, spec.length)
    T = truncate(nspec, dim)
    curve = build_gamma(amap.forward_x(x2), "plus")
    try:
        P = riesz_projection(T, curve)
        inv = invariance_report(T, P.matrix, seed=0 if args.seed is None else args.seed)
        doc = P.to_doc()
        doc.pop("matrix")
        result["riesz"] = {"dim": dim, "projection": doc, "invariance": inv.to_doc()}
    except ContractError as exc:
        result["riesz"] = {"dim": dim, "error": str(exc)}
    result["status"] = "witnesses found"
    _write(args.out, dumps(_envelope(args, result, config)))
    return code


def cmd_counterexample(args) -> int:
    if args.levels < 0:
        raise InputError("--levels must be >= 0")
    x = 0.0 if args.x is None else args.x
    rows = growth_table(x, args.levels)
    out = args.out
    if out not in (None, "-") and out.endswith(".json"):
        growth = lower_bound_growth(3.0, x)
        result = {"rows": [{"level": m, "phi_partial": a, "lower_bound": b} for m, a, b in rows],
                  "lower_bound_exceeds_3_at": growth}
        _write(out, dumps(_envelope(args, result, {"levels": args.levels, "x": x})))
        return EXIT_OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "phi_partial", "lower_bound"])
    for m, a, b in rows:
        w.writerow([m, repr(float(a)), repr(float(b))])
    _write(out, buf.getvalue())
    return EXIT_OK


def _load_curve(text: str):
    doc = None
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed curve JSON: {exc.msg} at line {exc.lineno}, "
                             f"column {exc.colno}") from None
    else:
        doc = _load_json(text, "curve")
    try:
        return curve_from_doc(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad curve description: {exc}") from None


def cmd_riesz(args) -> int:
    spec = load_spec(args.spec)
    if args.curve is None:
        raise InputError("riesz needs --curve (JSON text or path)")
    curve = _load_curve(args.curve)
    dim = args.dim if not spec.is_finite else min(args.dim, spec.length)
    T = truncate(spec, dim)
    plateau = 1e-10 if args.tol is None else args.tol
    P = riesz_projection(T, curve, plateau=plateau)
    inv = invariance_report(T, P.matrix, seed=0 if args.seed is None else args.seed)
    result = {"dim": dim, "projection": P.to_doc(), "invariance": inv.to_doc()}
    config = {"spec": args.spec, "curve": curve.to_doc(), "dim": dim, "tol": plateau}
    _write(args.out, dumps(_envelope(args, result, config)))
    path = _svg_path(args)
    if path:
        from .svg import curve_svg
        Path(path).write_text(curve_svg(curve, np.linalg.eigvals(T)))
    return EXIT_OK


def cmd_quasisim(args) -> int:
    spec = load_spec(args.spec)
    if args.xi0 is None:
        xi0 = complex(spec.diag.bound + 1.0, 0.0)
    else:
        xi0 = _parse_complex(args.xi0)
    dim = args.dim if not spec.is_finite else min(args.dim, spec.length)
    tol = 1e-11 if args.tol is None else args.tol
    q = quasisimilar_pair(spec, xi0, dim)
    check = ms_star_identity_check(spec, xi0, dim, tol=tol)
    result = {"pair": q.to_doc(), "ms_star": check.to_doc()}
    config = {"spec": args.spec, "xi0": xi0, "dim": dim, "tol": tol}
    _write(args.out, dumps(_envelope(args, result, config)))
    return EXIT_OK


COMMANDS = {"spectrum": cmd_spectrum, "classify": cmd_classify, "probe": cmd_probe,
            "counterexample": cmd_counterexample, "riesz": cmd_riesz, "quasisim": cmd_quasisim}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="-", help="output path (default stdout)")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--svg", nargs="?", const="auto", default=None,
                        help="also write an SVG plot (optional path)")
    with_spec = argparse.ArgumentParser(add_help=False, parents=[common])
    with_spec.add_argument("--spec", required=True, help="operator-spec JSON file")
    with_spec.add_argument("--dim", type=int, default=50, help="truncation dimension")

    parser = argparse.ArgumentParser(prog="rankpert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rankpert {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("spectrum", parents=[with_spec], help="eigenvalues via the argument principle")
    p.add_argument("--grid", type=int, default=4)
    p.add_argument("--region", default=None, help="xmin,xmax,ymin,ymax")
    sub.add_parser("classify", parents=[with_spec], help="(RO) checks and summability region")
    p = sub.add_parser("probe", parents=[with_spec], help="hyperinvariant-subspace pipeline")
    p.add_argument("--samples", type=int, default=64)
    p = sub.add_parser("counterexample", parents=[common], help="dyadic divergence table")
    p.add_argument("--levels", type=int, default=20)
    p.add_argument("--x", type=float, default=None)
    p = sub.add_parser("riesz", parents=[with_spec], help="Riesz projection of a truncation")
    p.add_argument("--curve", default=None, help="curve JSON text or path")
    p = sub.add_parser("quasisim", parents=[with_spec], help="quasisimilar pair on a truncation")
    p.add_argument("--xi0", default=None, help="re,im")
    return parser


# values such as "-1,1,-1,1" would otherwise be taken for options
VALUE_FLAGS = ("--region", "--xi0")


def _join_values(argv):
    out, it = [], iter(argv)
    for tok in it:
        if tok in VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if getattr(args, "dim", 1) < 1:
        print("rankpert: error: --dim must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"rankpert: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ContractError, CurveError, sr.PoleError) as exc:
        print(f"rankpert: contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except SpecError as exc:
        print(f"rankpert: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
