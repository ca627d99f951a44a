"""Command-line front end.

Every run writes its artifacts plus one ``manifest.json`` into ``--out``.
Lengths are given in physical units (fractions such as ``1/512`` are
accepted); grid spacings are converted to cell counts internally.
Exit codes: 0 success, 1 a verification ran but did not pass, 2 bad
flags, files or preconditions.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import ConfigurationError

log = logging.getLogger("vmclab")


class CliError(Exception):
    """Precondition or input failure; the message names the offending flag."""


# --------------------------------------------------------------------------
# value parsers


def length(text: str) -> float:
    """Float, ``inf`` or a fraction ``a/b``."""
    text = str(text).strip()
    try:
        if text.lower() in ("inf", "infinity"):
            return math.inf
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def length_list(text: str) -> list:
    return [length(t) for t in str(text).split(",") if t.strip()]


def boolean(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# --------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--out", default=None, help="artifact directory (default vmclab-runs/<command>)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--config", default=None, help="flat key=value file mirroring the flags")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _grid_flags(p, half_width=0.5, spacing="1/256"):
    p.add_argument("--half-width", type=length, default=half_width, help="domain is the cube (-w, w)^n")
    p.add_argument("--spacing", type=length, default=length(spacing), help="grid spacing h")
    p.add_argument("--dim", type=int, default=2, choices=[2, 3])


def _stencil_flag(p):
    p.add_argument("--stencil", default=None, help="neighborhood name (n4, n8, n16, n6, n18, n26)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vmclab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"vmclab {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("exponent", help="iterate the exponent improvement map")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=length, default=None)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=200)
    _common(p)

    p = sub.add_parser("counterexample", help="generate and classify the sharpness examples")
    p.add_argument("--family", choices=["cusp2d", "cuspNd", "log"], default=None)
    p.add_argument("--alpha", type=length, default=None)
    p.add_argument("--p", type=length, default=None)
    p.add_argument("--n", type=int, default=None, help="dimension (cuspNd; default 3)")
    p.add_argument("--classify", action="store_true", help="only classify L^p integrability")
    p.add_argument("--spacing", type=length, default=length("1/256"))
    _common(p)

    p = sub.add_parser("minimize", help="exact Massari minimizer by min-cut")
    p.add_argument("--curvature", default=None, help="field file H")
    p.add_argument("--datum", default=None, help="mask file with the boundary datum")
    p.add_argument("--free", default=None, help="mask file with the free region")
    _stencil_flag(p)
    _common(p)

    p = sub.add_parser("curvature", help="Barozzi curvature from nested penalized minimizers")
    p.add_argument("--set", default=None, help="mask file E (or use --shape)")
    p.add_argument("--shape", choices=["ball", "cube"], default=None)
    p.add_argument("--size", type=length, default=0.3, help="ball radius or cube half side")
    _grid_flags(p)
    p.add_argument("--num", type=int, default=64, help="schedule points")
    p.add_argument("--top-factor", type=float, default=1.0)
    p.add_argument("--refine-jump", type=float, default=0.02)
    p.add_argument("--min-ratio", type=float, default=1.01)
    p.add_argument("--complement", type=boolean, default=True)
    _stencil_flag(p)
    _common(p)

    p = sub.add_parser("psi-fit", help="decay of the excess in concentric balls")
    p.add_argument("--set", default=None, help="mask file E (or use --shape)")
    p.add_argument("--shape", choices=["halfspace", "corner", "cusp2d"], default=None)
    p.add_argument("--alpha", type=length, default=0.5, help="cusp exponent for --shape cusp2d")
    p.add_argument("--center", type=length_list, default=None, help="comma-separated point")
    p.add_argument("--radii", type=length_list, default=None, help="comma-separated radii")
    p.add_argument("--spacing", type=length, default=length("1/512"))
    _stencil_flag(p)
    _common(p)

    p = sub.add_parser("pmc", help="nonparametric graph minimizer")
    p.add_argument("--case", choices=["constant", "random", "file"], default="constant")
    p.add_argument("--curvature", type=length, default=1.0, help="H for --case constant; bound M for random")
    p.add_argument("--H-file", dest="H_file", default=None, help="field of shape nodes x samples")
    p.add_argument("--half-length", type=length, default=0.5, help="base interval (-a, a)")
    p.add_argument("--spacing", type=length, default=length("1/511"))
    p.add_argument("--r", type=length, default=1.0, help="vertical half-range")
    p.add_argument("--boundary", type=length_list, default=[0.0, 0.0], help="values at both ends")
    p.add_argument("--samples", type=int, default=1024)
    p.add_argument("--starts", type=int, default=5)
    _common(p)

    p = sub.add_parser("verify", help="random local perturbation check of minimality")
    p.add_argument("--set", default=None, help="mask file E")
    p.add_argument("--curvature", default=None, help="field file H")
    p.add_argument("--free", default=None, help="mask file with the free region")
    p.add_argument("--family", choices=["cusp2d", "cuspNd"], default=None,
                   help="check a built-in example through the divergence of its normal extension")
    p.add_argument("--alpha", type=length, default=0.5)
    p.add_argument("--spacing", type=length, default=length("1/256"))
    p.add_argument("--n-perturbations", type=int, default=1000)
    p.add_argument("--max-radius", type=length, default=None, help="largest perturbation radius")
    p.add_argument("--slack", type=length, default=None, help="accepted improvement (default 3 h^(n-1))")
    _stencil_flag(p)
    _common(p)

    p = sub.add_parser("replay", help="re-run a manifest and compare artifact hashes")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("--out", default=None)
    p.add_argument("--log-level", default="WARNING")
    return ap


# --------------------------------------------------------------------------
# config files


def _apply_config(ap, args, argv):
    path = Path(args.config)
    if not path.exists():
        raise CliError(f"--config: file not found: {path}")
    sub = ap._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    given = {a.dest for a in sub._actions for tok in argv if tok in a.option_strings
             or any(tok.startswith(o + "=") for o in a.option_strings)}
    for ln, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"--config: {path}:{ln}: expected key=value")
        key, val = (t.strip() for t in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("config", "help"):
            raise CliError(f"--config: {path}:{ln}: unknown key {key!r}")
        if dest in given:
            continue
        act = actions[dest]
        try:
            if isinstance(act, argparse._StoreTrueAction):
                value = boolean(val)
            elif act.type is not None:
                value = act.type(val)
            else:
                value = val
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise CliError(f"--config: {path}:{ln}: bad value for {key}: {exc}")
        if act.choices is not None and value not in act.choices:
            raise CliError(f"--config: {path}:{ln}: {key} must be one of {sorted(act.choices)}")
        setattr(args, dest, value)


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise CliError(f"--{n.replace('_', '-')} is required for '{args.command}'")


# --------------------------------------------------------------------------
# run bookkeeping


class Run:
    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out or Path("vmclab-runs") / args.command)
        self.inputs = {}
        self.report = {}
        self.t0 = time.perf_counter()

    def path(self, name) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def finish(self, status="ok"):
        outputs = {}
        for f in sorted(self.out.rglob("*")):
            if f.is_file() and f.name != "manifest.json":
                outputs[str(f.relative_to(self.out))] = hashlib.sha256(f.read_bytes()).hexdigest()
        params = {k: v for k, v in vars(self.args).items() if k not in ("out", "config", "log_level")}
        manifest = {
            "command": self.args.command,
            "parameters": params,
            "argv": self.argv,
            "inputs": self.inputs,
            "output_dir": str(self.out),
            "outputs": outputs,
            "seed": self.args.seed,
            "version": __version__,
            "status": status,
            "wall_time": time.perf_counter() - self.t0,
        }
        self.path("manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
        return manifest


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(f"not serializable: {type(o)}")


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_report(run, obj):
    from .io import write_json
    write_json(run.path("report.json"), _json_safe(obj))


def _load(kind, flag, path, run):
    from .io import load_field, load_mask
    if path is None:
        raise CliError(f"--{flag} is required")
    if not Path(path).exists():
        raise CliError(f"--{flag}: file not found: {path}")
    run.inputs[flag] = str(path)
    try:
        return load_mask(path) if kind == "mask" else load_field(path)
    except ConfigurationError as exc:
        raise CliError(f"--{flag}: {exc}")


def _weights(args, n):
    from .grid import PerimeterWeights
    if getattr(args, "stencil", None) is None:
        return None
    try:
        return PerimeterWeights.standard(n, args.stencil)
    except ConfigurationError as exc:
        raise CliError(f"--stencil: {exc}")


def _cells(extent, spacing, flag="--spacing"):
    if not spacing > 0 or math.isinf(spacing):
        raise CliError(f"{flag} must be a positive length")
    c = extent / spacing
    k = int(round(c))
    if k < 4 or abs(c - k) > 1e-6 * max(1.0, c):
        raise CliError(f"{flag} {spacing} does not divide the extent {extent} into a whole number of cells")
    return k


# --------------------------------------------------------------------------
# commands


def cmd_exponent(args, run):
    from .regularity import ExponentParams, iterate_exponent
    from .io import write_table
    _require(args, "n", "p")
    try:
        prm = ExponentParams(args.n, args.p, args.tol, args.max_iter)
    except ConfigurationError as exc:
        raise CliError(f"--p: {exc}")
    rep = iterate_exponent(prm)
    rows = [(k, a, abs(a - rep.fixed_point)) for k, a in enumerate(rep.iterates)]
    write_table(run.path("iterates.csv"), ["k", "alpha", "gap"], rows)
    _write_report(run, {"n": prm.n, "p": prm.p, "alpha0": prm.alpha0, "fixed_point": rep.fixed_point,
                        "converged": rep.converged, "iterations": len(rep.iterates) - 1})
    print(f"alpha0 = {prm.alpha0:.12g}")
    print(f"alpha_* = {rep.fixed_point:.12g}")
    print("k,alpha,gap")
    for k, a, g in rows:
        print(f"{k},{a:.15g},{g:.3e}")
    return 0 if rep.converged else 1


def cmd_counterexample(args, run):
    from . import counterexamples as cx
    from .grid import GridDomain, lp_norm
    from .io import save_field, save_mask, write_table
    _require(args, "family")
    if args.family == "log":
        rows = [(k, cx.log_example_lipschitz_ratio(k)) for k in range(4, 13)]
        write_table(run.path("lipschitz_ratio.csv"), ["k", "ratio"], rows)
        _write_report(run, {"family": "log", "ratios": [r for _, r in rows]})
        for k, r in rows:
            print(f"2^-{k}: {r:.6g}")
        return 0
    _require(args, "alpha")
    try:
        alpha = cx.check_open_unit("alpha", args.alpha)
    except ConfigurationError as exc:
        raise CliError(f"--alpha: {exc}")
    n = 2 if args.family == "cusp2d" else (args.n or 3)
    report = {"family": args.family, "alpha": alpha, "n": n}
    if args.p is not None:
        try:
            c = cx.cusp2d_lp_classify(alpha, args.p) if n == 2 and args.family == "cusp2d" \
                else cx.cuspNd_classify(n, alpha, args.p)
        except ConfigurationError as exc:
            raise CliError(f"--p: {exc}")
        report["classification"] = {"label": c.label, "threshold": c.threshold, "exponents": list(c.exponents),
                                     "value": c.value}
        print(f"{c.label}, threshold {c.threshold:.6g}")
    elif args.classify:
        raise CliError("--p is required with --classify")
    if not args.classify:
        if args.family == "cusp2d":
            d = GridDomain.centered(2, 1.0, _cells(2.0, args.spacing))
            E = cx.cusp2d_set(alpha, d)
            H = cx.cusp2d_curvature_field(alpha, d)
            save_mask(run.path("set.pbm"), E)
            save_field(run.path("curvature.f64"), H)
            if args.p is not None:
                report["grid_norm"] = lp_norm(H, args.p)
        else:
            zc, R = cx.cuspNd_ball(n, alpha)
            w = 1.05 * max(R, 0.5 * (zc + R))
            cells = max(8, int(round(2 * w / args.spacing)))
            d = GridDomain((cells,) * n, 2 * w / cells, tuple([-w] * (n - 1) + [0.5 * (zc + R) - w]))
            E = cx.cuspNd_set(n, alpha, d)
            save_mask(run.path("set.pbm"), E)
            report["cells"] = E.count
    _write_report(run, report)
    return 0


def cmd_minimize(args, run):
    from .cut import CutProblem, minimize_massari
    from .io import save_mask
    H = _load("field", "curvature", args.curvature, run)
    datum = _load("mask", "datum", args.datum, run)
    free = _load("mask", "free", args.free, run)
    if H.domain != datum.domain:
        raise CliError("--curvature and --datum live on different grid domains")
    if free.domain != datum.domain:
        raise CliError("--free and --datum live on different grid domains")
    try:
        sol = minimize_massari(CutProblem(H, datum, free, _weights(args, datum.domain.n)))
    except ConfigurationError as exc:
        raise CliError(f"--free: {exc}")
    save_mask(run.path("minimizer.pbm"), sol.mask)
    _write_report(run, {"energy": sol.energy, "perimeter": sol.perimeter_part, "bulk": sol.bulk_part,
                        "cells": sol.mask.count, **sol.stats})
    print(f"energy {sol.energy:.12g}")
    return 0


def _shape_set(args):
    from .grid import Ball, GridDomain, Predicate, rasterize
    n, w = args.dim, args.half_width
    d = GridDomain.centered(n, w, _cells(2 * w, args.spacing))
    if args.shape == "ball":
        shape = Ball((0.0,) * n, args.size)
    else:
        s = args.size
        shape = Predicate(lambda X: np.all(np.abs(X) < s, axis=-1))
    E = rasterize(shape, d)
    if E.meta.get("clipped"):
        raise CliError("--size: the shape leaves the domain")
    return E


def cmd_curvature(args, run):
    from .barozzi import barozzi_field
    from .grid import lp_norm, perimeter
    from .io import save_field, save_mask
    if args.set is not None:
        E = _load("mask", "set", args.set, run)
    elif args.shape is not None:
        E = _shape_set(args)
        save_mask(run.path("set.pbm"), E)
    else:
        raise CliError("--set or --shape is required for 'curvature'")
    w = _weights(args, E.domain.n)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = barozzi_field(E, None, weights=w, num=args.num, top_factor=args.top_factor,
                            complement=args.complement, refine_jump=args.refine_jump, min_ratio=args.min_ratio)
    save_field(run.path("curvature.f64"), res.curvature)
    save_mask(run.path("uncovered.pbm"), res.uncovered)
    l1 = lp_norm(res.curvature, 1, E - res.uncovered)
    per = perimeter(E, None, w)
    _write_report(run, {"l1_on_set": l1, "perimeter": per, "ratio": l1 / per if per else None,
                        "uncovered": res.uncovered.count, "solves": res.sweep.n_solved})
    print(f"L1(H_E on E) = {l1:.6g}, perimeter = {per:.6g}, uncovered cells = {res.uncovered.count}")
    return 0


def cmd_psi_fit(args, run):
    from . import counterexamples as cx
    from .grid import GridDomain, HalfSpace, Predicate, rasterize
    from .io import save_mask, write_table
    from .regularity import psi_decay_fit
    if args.set is not None:
        E = _load("mask", "set", args.set, run)
    elif args.shape is not None:
        d = GridDomain.centered(2, 1.0, _cells(2.0, args.spacing))
        if args.shape == "halfspace":
            E = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
        elif args.shape == "corner":
            E = rasterize(Predicate(lambda X: (X[..., 0] > 0) & (X[..., 1] > 0)), d)
        else:
            E = cx.cusp2d_set(args.alpha, d)
        save_mask(run.path("set.pbm"), E)
    else:
        raise CliError("--set or --shape is required for 'psi-fit'")
    d = E.domain
    center = args.center if args.center is not None else [0.0] * d.n
    if len(center) != d.n:
        raise CliError(f"--center needs {d.n} coordinates")
    radii = args.radii if args.radii is not None else [8 * d.h * 2 ** k for k in range(5)]
    try:
        rep = psi_decay_fit(E, center, radii, _weights(args, d.n))
    except ConfigurationError as exc:
        raise CliError(f"--radii: {exc}")
    write_table(run.path("psi.csv"), ["radius", "psi"], list(zip(rep.radii, rep.psi)))
    _write_report(run, rep.to_dict())
    print(f"slope {rep.slope}, implied alpha {rep.implied_alpha}, flags {rep.flags}")
    return 0


def cmd_pmc(args, run):
    from .graph_pmc import (GraphProblem, NonConvergenceError, c11_witness_2d, check_divergence_bound,
                            derivative_samples, discrete_mean_curvature, minimize_nonparametric)
    from .io import load_field, write_table
    a = args.half_length
    nodes = _cells(2 * a, args.spacing) + 1
    if len(args.boundary) != 2:
        raise CliError("--boundary needs two values")
    bd = np.zeros(nodes)
    bd[0], bd[-1] = args.boundary
    M = abs(args.curvature)
    if args.case == "constant":
        c = args.curvature
        H = lambda Y, S: np.full(np.broadcast_shapes(Y.shape[:-1], np.shape(S)), c)
    elif args.case == "random":
        rng = np.random.default_rng(args.seed)
        V = rng.uniform(-M, M, (4, 6))
        yb = np.sort(rng.uniform(-a, a, 3))
        sb = np.sort(rng.uniform(-args.r, args.r, 5))
        H = lambda Y, S: V[np.searchsorted(yb, Y[..., 0]), np.searchsorted(sb, S)]
    else:
        if args.H_file is None:
            raise CliError("--H-file is required with --case file")
        if not Path(args.H_file).exists():
            raise CliError(f"--H-file: file not found: {args.H_file}")
        run.inputs["H-file"] = args.H_file
        try:
            fld = load_field(args.H_file)
        except ConfigurationError as exc:
            raise CliError(f"--H-file: {exc}")
        H = np.asarray(fld.values).reshape(nodes, -1)
        M = float(np.max(np.abs(H)))
        args.samples = H.shape[1]
    try:
        prob = GraphProblem((-a,), (a,), (nodes,), args.r, H, bd, Phi=M, samples=args.samples)
        sol = minimize_nonparametric(prob, n_starts=args.starts, seed=args.seed)
    except ConfigurationError as exc:
        raise CliError(f"--boundary/--r: {exc}")
    except NonConvergenceError as exc:
        raise CliError(f"--starts: {exc}")
    y = np.linspace(-a, a, nodes)
    k = discrete_mean_curvature(sol)
    _, d = derivative_samples(sol)
    fp = np.r_[d[0], 0.5 * (d[1:] + d[:-1]), d[-1]]
    write_table(run.path("solution.csv"), ["y", "f", "df", "curvature"], list(zip(y, sol.f, fp, k)))
    bound = check_divergence_bound(sol)
    c11 = c11_witness_2d(sol)
    _write_report(run, {"energy": sol.energy, "stationarity": sol.stationarity, "starts": sol.start_energies,
                        "steps": len(sol.trace), "divergence_bound": bound.to_dict(), "c11": c11.to_dict()})
    print(f"energy {sol.energy:.12g}, bound slack {bound.slack:.3g}, lipschitz {c11.lipschitz:.6g} "
          f"<= {c11.predicted:.6g}")
    return 0 if bound.passed and c11.passed else 1


def cmd_verify(args, run):
    from .cut import verify_minimality
    from . import counterexamples as cx
    from .grid import BinaryMask, GridDomain
    if args.family is not None:
        if args.family == "cusp2d":
            d = GridDomain.centered(2, 1.0, _cells(2.0, args.spacing))
            E = cx.cusp2d_set(args.alpha, d)
            U = np.zeros(d.counts, dtype=bool)
            U[3:-3, 3:-3] = True
            rep = cx.verify_divergence_curvature(
                lambda X: cx.cusp2d_normal_field(args.alpha, X), E, BinaryMask(d, U), _weights(args, 2),
                divergence=lambda X: cx.cusp2d_curvature(args.alpha, X),
                n_perturbations=args.n_perturbations, seed=args.seed, slack=args.slack)
        else:
            L = 1.7
            cells = _cells(2 * L, args.spacing)
            d = GridDomain((cells,) * 3, 2 * L / cells, (-L, -L, -0.3))
            E = cx.cuspNd_set(3, args.alpha, d)
            c = np.array([0.0, 0.0, 1.4])
            U = BinaryMask(d, np.linalg.norm(d.centers() - c, axis=-1) < 1.6)
            rep = cx.verify_divergence_curvature(
                lambda X: cx.cuspNd_normal_field(3, args.alpha, X), E, U, _weights(args, 3),
                n_perturbations=args.n_perturbations, seed=args.seed, slack=args.slack)
        out = rep.to_dict()
        passed = rep.passed
    else:
        E = _load("mask", "set", args.set, run)
        H = _load("field", "curvature", args.curvature, run)
        U = _load("mask", "free", args.free, run)
        if H.domain != E.domain:
            raise CliError("--curvature and --set live on different grid domains")
        if U.domain != E.domain:
            raise CliError("--free and --set live on different grid domains")
        d = E.domain
        slack = args.slack if args.slack is not None else 3.0 * d.h ** (d.n - 1)
        mr = 6 if args.max_radius is None else max(1, int(round(args.max_radius / d.h)))
        rep = verify_minimality(E, H, U, _weights(args, d.n), args.n_perturbations, args.seed, slack, mr)
        out = rep.to_dict()
        passed = rep.passed
    _write_report(run, out)
    print(("PASS" if passed else "FAIL") + f": max improvement {out['max_improvement']:.3g}, slack {out['slack']:.3g}")
    return 0 if passed else 1


def cmd_replay(args, argv):
    path = Path(args.manifest)
    if not path.exists():
        raise CliError(f"manifest: file not found: {path}")
    try:
        old = json.loads(path.read_text())
        old_argv = list(old["argv"])
    except (ValueError, KeyError) as exc:
        raise CliError(f"manifest: malformed manifest {path}: {exc}")
    out = args.out or str(path.parent) + "-replay"
    new_argv = _replace_out(old_argv, out)
    code = main(new_argv)
    if code == 2:
        return 2
    new = json.loads((Path(out) / "manifest.json").read_text())
    diff = sorted(k for k in set(old["outputs"]) | set(new["outputs"])
                  if old["outputs"].get(k) != new["outputs"].get(k))
    if diff:
        print("replay differs in: " + ", ".join(diff))
        return 1
    print(f"replay identical: {len(new['outputs'])} artifacts")
    return 0


def _replace_out(argv, out):
    res, skip = [], False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        res.append(tok)
    return res + ["--out", out]


COMMANDS = {
    "exponent": cmd_exponent,
    "counterexample": cmd_counterexample,
    "minimize": cmd_minimize,
    "curvature": cmd_curvature,
    "psi-fit": cmd_psi_fit,
    "pmc": cmd_pmc,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        ap.print_usage(sys.stderr)
        print("vmclab: error: a command is required", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, args.log_level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args, argv)
        if args.config is not None:
            _apply_config(ap, args, argv)
        run = Run(args, argv)
        code = COMMANDS[args.command](args, run)
        run.finish("ok" if code == 0 else "check failed")
        return code
    except CliError as exc:
        print(f"vmclab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"vmclab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
