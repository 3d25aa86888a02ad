"""Command-line interface: ``obatakit <command> [options]``.

Every ``cmd_*`` returns the process exit code:

  0  success (for verify/foliation: all checks within tolerance)
  1  checks ran but failed their tolerance
  2  malformed input (bad file, flag or expression)
  3  numerical failure (singular metric, domain error)

JSON reports carry the tool version, seed and the tolerances used, and are
byte-identical across runs with the same inputs.
"""

from __future__ import annotations

import argparse
import itertools
import math
import sys
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import __version__
from .expr import Expression, ExpressionError, parse
from .foliation import bracket_check, gradient_rank, maximal_system, pair_constants, span_curvature, umbilic_check
from .geodesic import attach_first_integral, completeness_probe, integrate, integrate_ambient, write_csv
from .manifold import GeometryError, Quadric, restrict_linear
from .obata import INSTANCE_CASES, BranchError, InstanceError, build_instance, classify_case, solution_family
from .specfile import LoadedModel, SpecError, dumps, read_model, write_json
from .tensor import PointError, ScalarField, obata_verify

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

NUMERIC_ERRORS = (GeometryError, ArithmeticError, np.linalg.LinAlgError)


class InputError(ValueError):
    """A flag or file that cannot be used as given."""


def _err(msg: str) -> None:
    print(f"obatakit: error: {msg}", file=sys.stderr)


def _header(command: str, seed: int | None, tolerances: dict) -> dict:
    out = {"tool": "obatakit", "version": __version__, "command": command}
    if seed is not None:
        out["seed"] = seed
    out["tolerances"] = tolerances
    return out


def _number(text: str) -> float:
    # accepts 1.5, 1e-3 and 5/3
    try:
        v = float(text)
    except ValueError:
        try:
            v = float(Fraction(text.strip()))
        except (ValueError, ZeroDivisionError):
            raise InputError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise InputError(f"not a finite number: {text!r}")
    return v


def _vector(text: str) -> np.ndarray:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise InputError("empty vector")
    return np.array([_number(p) for p in parts])


def _load(path: str) -> LoadedModel:
    try:
        return read_model(path)
    except SpecError as exc:
        raise InputError(str(exc)) from exc


def _field(loaded: LoadedModel, omega: str | None, omega_ambient: str | None, kappa: float | None) -> ScalarField:
    """The Obata candidate from flags, falling back to the model file."""
    m = loaded.model
    if omega is not None and omega_ambient is not None:
        raise InputError("give --omega or --omega-ambient, not both")
    try:
        if omega is not None:
            expr: Expression | None = parse(omega, m.dim)
        elif omega_ambient is not None:
            if not isinstance(m, Quadric):
                raise InputError("--omega-ambient needs a quadric model")
            expr = restrict_linear(m, _vector(omega_ambient))
        else:
            expr = loaded.omega
    except (ExpressionError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(str(exc)) from exc
    if expr is None:
        raise InputError("no omega: pass --omega or put \"omega\" in the model file")
    k = kappa if kappa is not None else loaded.kappa
    if k is None:
        raise InputError("no kappa: pass --kappa or put \"kappa\" in the model file")
    if not math.isfinite(k):
        raise InputError("kappa must be finite")
    return ScalarField(expr, float(k))


def _threads(n: int) -> int:
    if n < 1:
        raise InputError("--threads must be >= 1")
    return n


# --------------------------------------------------------------------------
# commands


def cmd_verify(args: argparse.Namespace) -> int:
    loaded = _load(args.model)
    f = _field(loaded, args.omega, args.omega_ambient, args.kappa)
    if args.samples < 1:
        raise InputError("--samples must be >= 1")
    tols = {"residual": args.residual_tol, "spread": args.spread_tol, "census": args.census_tol}
    out = _header("verify", args.seed, tols)
    out["model"] = loaded.model.to_spec()
    out["omega"] = f.omega.text
    out["kappa"] = f.kappa
    try:
        rep = obata_verify(
            loaded.model, f, samples=args.samples, seed=args.seed, census_tol=args.census_tol, threads=_threads(args.threads)
        )
    except NUMERIC_ERRORS as exc:
        out["error"] = str(exc)
        out["point"] = exc.point if isinstance(exc, PointError) else None
        write_json(out, args.out)
        _err(str(exc))
        return EXIT_NUMERIC
    out["report"] = rep.to_dict()
    if "expected_h" in loaded.extras:
        out["expected_h"] = loaded.extras["expected_h"]
    passed = rep.max_residual <= args.residual_tol and rep.h_spread <= args.spread_tol
    out["passed"] = passed
    write_json(out, args.out)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_geodesic(args: argparse.Namespace) -> int:
    loaded = _load(args.model)
    m = loaded.model
    x0, v0 = _vector(args.x0), _vector(args.v0)
    if not args.smax > 0 or not math.isfinite(args.smax):
        raise InputError("--smax must be positive and finite")
    f = None
    if args.omega is not None or args.omega_ambient is not None:
        f = _field(loaded, args.omega, args.omega_ambient, args.kappa)
    if args.ambient and not isinstance(m, Quadric):
        raise InputError("--ambient needs a quadric model")
    # initial data problems are input errors, not numerical failures
    n = m.ambient_signature.dim if args.ambient else m.dim
    if x0.shape != (n,) or v0.shape != (n,):
        raise InputError(f"--x0 and --v0 need {n} components")
    if not args.ambient:
        try:
            m.check_point(x0)
        except GeometryError as exc:
            raise InputError(f"--x0: {exc}") from exc
    try:
        if args.ambient:
            traj = integrate_ambient(m, x0, v0, args.smax, tol=args.tol, sample_step=args.sample_step)
        else:
            traj = integrate(m, x0, v0, args.smax, tol=args.tol, sample_step=args.sample_step)
    except NUMERIC_ERRORS as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    if f is not None:
        try:
            attach_first_integral(traj, m, f)
        except NUMERIC_ERRORS as exc:
            _err(f"first integral: {exc}")
            return EXIT_NUMERIC
    if args.out is None:
        write_csv(traj, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(traj, fh)
    footer = _header("geodesic", None, {"tol": args.tol})
    footer.update(traj.footer())
    footer["s_star"] = footer["s_end"]
    footer["final"] = [float(x) for x in traj.x[-1]]
    sys.stderr.write(dumps(footer, indent=None))
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    for name, v in (("--kappa", args.kappa), ("--h", args.h)):
        if not math.isfinite(v):
            raise InputError(f"{name} must be finite")
    label = classify_case(args.kappa, args.h, args.tol)
    out = _header("classify", None, {"sign": args.tol})
    out["kappa"] = args.kappa
    out["h"] = args.h
    out["case"] = label.to_dict()
    try:
        fam = solution_family(args.kappa, args.h, args.tol)
        out["family"] = {"branch": fam.branch, "f": fam.f.text, "interval": list(fam.interval)}
    except BranchError as exc:
        out["family"] = {"branch": None, "reason": str(exc)}
    write_json(out, args.out)
    return EXIT_OK


def cmd_probe(args: argparse.Namespace) -> int:
    loaded = _load(args.model)
    if args.samples < 1 or not args.budget > 0:
        raise InputError("--samples must be >= 1 and --budget positive")
    try:
        rep = completeness_probe(
            loaded.model,
            samples=args.samples,
            seed=args.seed,
            s_budget=args.budget,
            tol=args.tol,
            threads=_threads(args.threads),
        )
    except NUMERIC_ERRORS as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _header("probe", args.seed, {"tol": args.tol})
    out["samples"] = args.samples
    out["budget"] = args.budget
    out["report"] = rep.to_dict()
    write_json(out, args.out)
    return EXIT_OK


def cmd_instance(args: argparse.Namespace) -> int:
    fiber = _load(args.fiber).model if args.fiber else None
    try:
        bundle = build_instance(args.case, args.kappa, args.h, fiber=fiber, half=args.half)
    except InstanceError as exc:
        raise InputError(str(exc)) from exc
    except NUMERIC_ERRORS as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    write_json(bundle.to_spec(), args.out)
    rep = bundle.report
    assert rep is not None
    summary = {
        "case": args.case,
        "passed": bundle.passed,
        "max_residual": rep.max_residual,
        "h_mean": rep.h_mean,
        "h_spread": rep.h_spread,
        "notes": bundle.notes,
    }
    sys.stderr.write(dumps(summary, indent=None))
    return EXIT_OK if bundle.passed else EXIT_FAIL


def _foliation_fields(loaded: LoadedModel, args: argparse.Namespace) -> list[ScalarField]:
    m = loaded.model
    k = args.kappa if args.kappa is not None else loaded.kappa
    if k is None:
        raise InputError("no kappa: pass --kappa or put \"kappa\" in the model file")
    if args.ambient_system:
        if args.omegas:
            raise InputError("give --omegas or --ambient-system, not both")
        if not isinstance(m, Quadric):
            raise InputError("--ambient-system needs a quadric model")
        system, _ = maximal_system(m, samples=1, seed=args.seed)
        return [ScalarField(e, float(k)) for e in system]
    texts = args.omegas or ([loaded.omega.text] if loaded.omega is not None else [])
    if not texts:
        raise InputError("no functions: pass --omegas or --ambient-system")
    try:
        return [ScalarField(parse(t, m.dim), float(k)) for t in texts]
    except ExpressionError as exc:
        raise InputError(str(exc)) from exc


def cmd_foliation(args: argparse.Namespace) -> int:
    loaded = _load(args.model)
    m = loaded.model
    fields = _foliation_fields(loaded, args)
    if args.samples < 1:
        raise InputError("--samples must be >= 1")
    n, s, seed = len(fields), args.samples, args.seed
    out = _header("foliation", seed, {"check": args.check_tol})
    out["omegas"] = [f.omega.text for f in fields]
    out["kappa"] = fields[0].kappa
    try:
        brackets = np.zeros((n, n))
        for i, j in itertools.combinations(range(n), 2):
            brackets[i, j] = brackets[j, i] = bracket_check(m, fields[i], fields[j], s, seed)
        C, S = pair_constants(m, fields, s, seed)
        rank = gradient_rank(m, fields, s, seed)
        span = span_curvature(m, fields, s, seed) if n > 1 else None
        umbilic = []
        for size in range(1, min(n, m.dim - 1) + 1):
            for idx in itertools.combinations(range(n), size):
                rep = umbilic_check(m, [fields[i] for i in idx], s, seed)
                umbilic.append({"functions": list(idx), **rep.to_dict()})
    except NUMERIC_ERRORS as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    out["bracket_residuals"] = brackets
    out["pair_constants"] = C
    out["pair_spreads"] = S
    out["rank"] = rank.to_dict()
    out["span_curvature"] = None if span is None else {"deviation": span[0], "planes": span[1], "skipped": span[2]}
    out["umbilic"] = umbilic
    worst = [float(brackets.max()), float(S.max())]
    if span is not None:
        worst.append(span[0])
    worst += [max(u["deviation"], u["rotated_deviation"]) for u in umbilic]
    passed = max(worst) <= args.check_tol
    out["passed"] = passed
    write_json(out, args.out)
    return EXIT_OK if passed else EXIT_FAIL


# --------------------------------------------------------------------------
# parser


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="JSON model file")


def _add_field(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omega", help="omega as an expression in x0, x1, ... (overrides the file)")
    p.add_argument("--omega-ambient", help="quadric only: omega as ambient linear coefficients, comma separated")
    p.add_argument("--kappa", type=float, help="Obata constant (overrides the file)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obatakit", description="Numerical checks for Obata's equation H = -kappa omega g.")
    ap.add_argument("--version", action="version", version=f"obatakit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="sample the Obata residual and first integral")
    _add_model(p)
    _add_field(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--residual-tol", type=float, default=1e-6)
    p.add_argument("--spread-tol", type=float, default=1e-6)
    p.add_argument("--census-tol", type=float, default=1e-9)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="report path (stdout if omitted)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("geodesic", help="integrate one geodesic; CSV out, JSON footer on stderr")
    _add_model(p)
    _add_field(p)
    p.add_argument("--x0", required=True, help="initial point, comma separated (use --x0=-1,0 for a leading minus)")
    p.add_argument("--v0", required=True, help="initial velocity, comma separated; 5/3 style fractions allowed")
    p.add_argument("--smax", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--sample-step", type=float, default=0.01)
    p.add_argument("--ambient", action="store_true", help="quadric only: x0 and v0 are ambient vectors")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("classify", help="case table row for (kappa, h)")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-9, help="values within tol of 0 count as 0")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("probe", help="seeded geodesic completeness probe")
    _add_model(p)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--budget", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("instance", help="write a self-verified model file for one structure case")
    p.add_argument("--case", required=True, choices=INSTANCE_CASES)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--fiber", help="model file for the fiber")
    p.add_argument("--half", type=int, default=1, choices=(1, -1), help="thm4.3: sign of omega")
    p.add_argument("--out", help="model file path (stdout if omitted)")
    p.set_defaults(func=cmd_instance)

    p = sub.add_parser("foliation", help="bracket, pair-constant, rank and umbilicity checks for several functions")
    _add_model(p)
    p.add_argument("--omegas", nargs="+", help="expressions sharing one kappa")
    p.add_argument("--ambient-system", action="store_true", help="quadric only: use the restricted ambient coordinates")
    p.add_argument("--kappa", type=float)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check-tol", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_foliation)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
