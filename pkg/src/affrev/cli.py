"""Command-line interface: ``affrev <command> ...``.

Exit codes: 0 when a verdict (or other result) is produced, 2 for an
``Inconsistent`` verdict, 1 for malformed input or any hard error.  Errors are
printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import verifier
from .blaschke import JetGraph, blaschke_at
from .body_core import Hyperplane, boundary_project, canonical_jet, section
from .form_algebra import linear_factors, orthogonal_invariants
from .symmetry import RevolutionStructure, detect_revolution, lemma7_check


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message)


def _fail(kind, message, code=1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(code)


def _vector(text, dim=None):
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise CliError(f"cannot parse vector {text!r}") from exc
    if dim is not None and len(v) != dim:
        raise CliError(f"expected {dim} components, got {len(v)}")
    if not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0.0:
        raise CliError("vector must be finite and nonzero")
    return v


def _emit(obj, out=None):
    text = json.dumps(verifier.jsonable(obj), sort_keys=True, indent=1) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("AFFREV_THREADS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError as exc:
        raise CliError("AFFREV_THREADS must be an integer") from exc


def _load_body(path):
    spec = verifier.load_spec(path)
    return spec, verifier.build_body(spec)


def cmd_gen(args):
    spec = verifier.generate_spec(args.family, args.dim, args.seed)
    if args.out:
        verifier.save_spec(spec, args.out)
    else:
        sys.stdout.write(json.dumps(spec.to_dict(), sort_keys=True, indent=2) + "\n")
    return 0


def cmd_verify(args):
    spec = verifier.load_spec(args.file)
    if args.sections < 1:
        raise CliError("--sections must be positive")
    report = verifier.run_verify(spec, sections=args.sections, tol=args.tol, seed=args.seed,
                                 threads=_threads(args.threads), timings=args.timings)
    text = verifier.dumps_report(report)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
        v = report["verdict"]
        sys.stdout.write(json.dumps({"verdict": v["kind"], "axis": v["axis"], "branch": report["branch"]}) + "\n")
    else:
        sys.stdout.write(text)
    return verifier.exit_code(report)


def _jet_for(args):
    spec, body = _load_body(args.file)
    p = boundary_project(body, _vector(args.direction, body.dim))
    return body, p, canonical_jet(body, p)


def cmd_jet(args):
    body, p, jet = _jet_for(args)
    _emit({"point": p.point, "radius": p.radius, "sff_pd": p.sff_pd, "frame": jet.frame,
           "transversal": jet.transversal, "cubic": jet.cubic.tensor, "cubic_norm": jet.cubic.norm(),
           "invariants": orthogonal_invariants(jet.cubic)})
    return 0


def cmd_cubic(args):
    body, p, jet = _jet_for(args)
    fac = linear_factors(jet.cubic, tol=args.tol)
    _emit({"cubic": jet.cubic.tensor, "cubic_norm": jet.cubic.norm(), "is_zero": fac.is_zero,
           "exhausted": fac.exhausted,
           "factors": [{"normal": f.normal, "cofactor": f.cofactor.matrix, "residual": f.residual,
                        "restriction_residual": f.restriction_residual} for f in fac.factors]})
    return 0


def cmd_detect_section(args):
    spec, body = _load_body(args.file)
    hp = Hyperplane(_vector(args.normal, body.dim))
    sec = section(body, hp)
    det = detect_revolution(sec, tol=args.tol, seed=args.seed)
    _emit({"normal": hp.normal, "all_axes": det.all_axes, "best_residual": det.best_residual,
           "structures": [{"axis": sec.lift(s.axis), "section_axis": s.axis, "residual": s.residual}
                          for s in det.structures]})
    return 0


def cmd_blaschke(args):
    body, p, jet = _jet_for(args)
    data = blaschke_at(JetGraph(jet), np.zeros(body.dim - 1))
    _emit({"point": p.point, "h": data.h, "xi": data.xi, "S": data.S, "C": data.C,
           "C_norm": float(np.linalg.norm(data.C)), "apolarity": data.apolarity(),
           "system_residual": data.system_residual})
    return 0


def _plane(m, *vecs):
    q, _ = np.linalg.qr(np.column_stack(vecs))
    return q


def lemma7_preset(name: str, m: int) -> list:
    """Fixed planes for three codimension-2 structures.

    ``shared-line``: all three planes contain ``e_m``, so the rotations fix a
    common line.  ``transversal``: the planes meet pairwise only at the origin.
    """
    e = np.eye(m)
    if name == "shared-line":
        a = e[m - 2]
        b = (e[0] + e[m - 2]) / np.sqrt(2.0)
        c = (e[1] + e[m - 2]) / np.sqrt(2.0)
        return [_plane(m, a, e[m - 1]), _plane(m, b, e[m - 1]), _plane(m, c, e[m - 1])]
    if name == "transversal":
        rng = np.random.default_rng(m)
        return [_plane(m, *rng.standard_normal((2, m))) for _ in range(3)]
    raise CliError(f"unknown preset {name!r}")


def cmd_lemma7(args):
    m = args.dim
    if m < 3:
        raise CliError("--dim must be at least 3")
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
            planes = [np.array(fs, dtype=float).T for fs in cfg["fixed_spaces"]]
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise CliError(f"bad lemma7 config: {exc}") from exc
        planes = [_plane(m, *p.T) if p.shape == (m, 2) else None for p in planes]
        if len(planes) != 3 or any(p is None for p in planes):
            raise CliError(f"config needs three fixed spaces, each two vectors in R^{m}")
    else:
        planes = lemma7_preset(args.preset, m)
    structs = [RevolutionStructure(2, p, np.eye(m), 0.0) for p in planes]
    res = lemma7_check(structs)
    _emit({"verdict": res.verdict, "closure_dim": res.closure_dim, "pair": res.pair,
           "fixed_line": res.fixed_line, "pair_dims": {f"{i},{j}": d for (i, j), d in res.pair_dims.items()}})
    return 0


def cmd_report(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "affrev"

    try:
        with open(args.file, encoding="utf-8") as fh:
            rep = json.load(fh)
        ev = rep["section_evidence"]
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read report: {exc}") from exc
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = np.arange(len(ev))
    floor = 1e-17
    for key, label in (("best_residual", "detection residual"), ("claim3_3_residual", "revolution-hyperplane cubic")):
        ys = [max(e[key], floor) if e.get(key) is not None else np.nan for e in ev]
        ax.semilogy(xs, ys, "o", ms=3, label=label)
    tol = rep.get("tolerances", {})
    if "revolution" in tol:
        ax.axhline(tol["revolution"], color="gray", lw=0.8, ls="--")
    ax.set_xlabel("section")
    ax.set_ylabel("residual")
    ax.set_title(f"verdict: {rep.get('verdict', {}).get('kind')}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.plot, format="svg", metadata={"Date": None})
    plt.close(fig)
    return 0


def build_parser():
    p = _Parser(prog="affrev", description="Affine revolution verification for smooth star bodies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a seeded body spec")
    g.add_argument("--family", required=True, choices=verifier.FAMILIES)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", help="classify a body and write the evidence report")
    v.add_argument("file")
    v.add_argument("--sections", type=int, default=64)
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--report")
    v.add_argument("--threads", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--timings", action="store_true", help="include wall-clock timings (not reproducible)")
    v.set_defaults(func=cmd_verify)

    for name, func, hlp in (("jet", cmd_jet, "canonical jet at a boundary point"),
                            ("cubic", cmd_cubic, "cubic form and its linear factors"),
                            ("blaschke", cmd_blaschke, "Blaschke structure at a boundary point")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("file")
        s.add_argument("--direction", required=True, help="comma separated direction")
        if name == "cubic":
            s.add_argument("--tol", type=float, default=1e-7)
        s.set_defaults(func=func)

    d = sub.add_parser("detect-section", help="revolution detection on a central section")
    d.add_argument("file")
    d.add_argument("--normal", required=True)
    d.add_argument("--tol", type=float, default=1e-4)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_detect_section)

    l7 = sub.add_parser("lemma7", help="combine three codimension-2 revolution structures")
    l7.add_argument("--dim", type=int, required=True)
    l7.add_argument("--config", help='JSON {"fixed_spaces": [[v1, v2], [v1, v2], [v1, v2]]}')
    l7.add_argument("--preset", choices=("transversal", "shared-line"), default="transversal")
    l7.set_defaults(func=cmd_lemma7)

    r = sub.add_parser("report", help="plot per-section residuals of a report")
    r.add_argument("file")
    r.add_argument("--plot", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, verifier.SpecError) as exc:
        _fail("input", str(exc))
    except Exception as exc:  # noqa: BLE001
        _fail("internal", f"{type(exc).__name__}: {exc}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
