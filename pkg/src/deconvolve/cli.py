"""Command-line interface.

Exit status is 0 on success, 1 on a usage error and 2 when a numerical
routine fails. Any long option can also be given in a ``--config`` file of
``key=value`` lines; options on the command line take precedence.
"""

from __future__ import annotations

import argparse
import io
import sys
from typing import Optional, Sequence

import numpy as np

from .asymptotics import TailProfile, bias_b1, bias_b2, rates, variance_v
from .bandwidth import MisePlan, select_bandwidth
from .distributions import parse_error, parse_target, smoothness_class
from .errors import DeconvolutionError
from .estimators import (
    DeconvFit,
    abs_moment,
    cdf_at,
    density_at,
    poly_moment,
    quantile,
    resample,
    standard_span,
)
from .kernels import parse_kernel
from .simlab import DEFAULT_H_GRID, ExperimentConfig, run_ise_experiment, run_mse_experiment
from .transforms import QuadratureSpec

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _ParserError(UsageError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _ParserError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got '{text}'") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _spec_type(parse):
    def convert(text):
        try:
            return parse(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return convert


def _add_numeric(p):
    p.add_argument("--rel-tol", type=float, default=1e-8, help="relative tolerance of the quadrature")
    p.add_argument("--panels", type=int, default=4, help="panels per oscillation period")


def _bandwidth_arg(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a bandwidth or 'auto', got '{text}'") from None


def _add_fit(p, kernel="4,2"):
    p.add_argument("--data", required=True, help="file with one observation per line")
    p.add_argument("--error", required=True, type=_spec_type(parse_error))
    p.add_argument("--h", "--bandwidth", dest="h", required=True, type=_bandwidth_arg,
                   help="bandwidth, or 'auto' for the one-step plug-in choice")
    p.add_argument("--kernel", default=parse_kernel(kernel), type=_spec_type(parse_kernel))
    _add_numeric(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deconvolve", description="Deconvolution estimators and experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file of key=value lines with option defaults")
    common.add_argument("--out", help="write output here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    add = sub.add_parser

    def add_parser(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("estimate", help="distribution (and density) estimate")
    _add_fit(p)
    p.add_argument("--x", type=_floats, help="evaluation points")
    p.add_argument("--grid", help="evaluation points, or a count spread over the standard span")
    p.add_argument("--density", action="store_true", help="estimate the density instead")

    p = sub.add_parser("quantile", help="quantile estimate")
    _add_fit(p)
    p.add_argument("--u", type=_floats, required=True)

    p = sub.add_parser("moments", help="polynomial and absolute moment estimates")
    _add_fit(p)
    p.add_argument("--q", type=_floats, default=[], help="absolute moment orders")
    p.add_argument("--r", type=_floats, default=[], help="polynomial moment orders")

    p = sub.add_parser("resample", help="draw from the estimated distribution")
    _add_fit(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=_seed, required=True)

    p = sub.add_parser("bandwidth", help="plug-in bandwidth")
    p.add_argument("--error", required=True, type=_spec_type(parse_error))
    p.add_argument("--kernel", default=parse_kernel("2,2"), type=_spec_type(parse_kernel))
    p.add_argument("--roughness", choices=("exact", "normal", "onestep"), default="onestep")
    p.add_argument("--target", type=_spec_type(parse_target))
    p.add_argument("--data")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--i-method", choices=("exact", "asymptotic"), default="exact")
    p.add_argument("--curve", help="CSV file for the criterion curve")

    p = sub.add_parser("simulate", help="Monte Carlo experiment")
    p.add_argument("--target", required=True, type=_spec_type(parse_target))
    p.add_argument("--error", required=True, type=_spec_type(parse_error))
    p.add_argument("--n", required=True, type=_positive_int)
    p.add_argument("--estimand", choices=("cdf", "quantile", "absmoment", "ise"), default="cdf")
    p.add_argument("--x", type=_floats)
    p.add_argument("--u", type=_floats)
    p.add_argument("--q", type=_floats)
    p.add_argument("--h-grid", type=_floats, default=list(DEFAULT_H_GRID))
    p.add_argument("--runs", type=_positive_int, default=500)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--kernel", default=None, type=_spec_type(parse_kernel))
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--ise-method", choices=("simpson", "parseval"), default="simpson")
    p.add_argument("--dump-runs", help="JSON-lines file of per-run estimates")
    _add_numeric(p)

    p = sub.add_parser("rates", help="convergence rates and bandwidth orders")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--q", type=float)
    p.add_argument("--C", type=float, default=1.0)

    p = sub.add_parser("asymp", help="asymptotic bias and variance constants")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--z", type=float, default=1.0)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--kernel", default=parse_kernel("4,2"), type=_spec_type(parse_kernel))
    p.add_argument("--h", type=float, help="bandwidth for the off-origin bias term")
    p.add_argument("--fx", type=float, default=1.0, help="density of X at x")
    p.add_argument("--convention", choices=("derived", "printed"), default="derived")

    p = sub.add_parser("check-smoothness", help="root-n feasibility of an error law")
    p.add_argument("--error", required=True, type=_spec_type(parse_error))
    p.add_argument("--q", type=float)
    return parser


def _expand_config(argv: list[str]) -> list[str]:
    """Splice ``--config`` entries in front of the explicit options."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file name")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2 :]
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    extra = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config line is not key=value: '{line}'")
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "yes"):
            extra.append(flag)
        elif value.lower() not in ("false", "no"):
            extra.append(f"{flag}={value}")
    # the subcommand is the first word that is not a top-level option or its value
    pos = 0
    while pos < len(rest) and rest[pos].startswith("-"):
        pos += 1 if "=" in rest[pos] else 2
    return rest[: pos + 1] + extra + rest[pos + 1 :]


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--x -0.8,0`` as ``--x=-0.8,0`` so argparse keeps the value."""
    out: list[str] = []
    for tok in argv:
        prev = out[-1] if out else ""
        if (tok[:1] == "-" and tok[1:2] in tuple("0123456789.") and prev.startswith("--")
                and "=" not in prev):
            out[-1] = f"{prev}={tok}"
        else:
            out.append(tok)
    return out


def _load_data(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, comments="#", ndmin=1)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read data: {exc}") from None


def _fit(args) -> DeconvFit:
    spec = QuadratureSpec(rel_tol=args.rel_tol, panels_per_period=args.panels)
    data = _load_data(args.data)
    h = args.h
    if h == "auto":
        plan = MisePlan(args.error, roughness="onestep", data=data)
        h = select_bandwidth(plan).h_opt
    return DeconvFit.create(data, args.error, h, args.kernel, spec)


def _csv(header: str, rows) -> str:
    out = io.StringIO()
    out.write(header + "\n")
    for row in rows:
        out.write(",".join(v if isinstance(v, str) else repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def _cmd_estimate(args) -> str:
    fit = _fit(args)
    if (args.x is None) == (args.grid is None):
        raise UsageError("give exactly one of --x and --grid")
    if args.x is not None:
        x = np.asarray(args.x)
    elif "," in args.grid:
        x = np.asarray(_floats(args.grid))
    else:
        try:
            count = int(args.grid)
        except ValueError:
            raise UsageError(f"--grid takes a count or a list, got '{args.grid}'") from None
        if count < 2:
            raise UsageError("--grid count must be at least 2")
        x = np.linspace(*standard_span(fit), count)
    if args.density:
        return _csv("x,fhat", zip(x, np.atleast_1d(density_at(fit, x))))
    return _csv("x,Fhat", zip(x, np.atleast_1d(cdf_at(fit, x))))


def _cmd_quantile(args) -> str:
    fit = _fit(args)
    return _csv("u,quantile", [(u, quantile(fit, u)) for u in args.u])


def _cmd_moments(args) -> str:
    if not args.q and not args.r:
        raise UsageError("give --q and/or --r")
    fit = _fit(args)
    rows = []
    for r in args.r:
        if r != int(r) or r < 1:
            raise UsageError("--r takes positive integers")
        rows.append(("poly", r, poly_moment(fit.data, fit.ctx.error, int(r))))
    rows += [("abs", q, abs_moment(fit, q)) for q in args.q]
    return _csv("kind,order,estimate", rows)


def _cmd_resample(args) -> str:
    fit = _fit(args)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    draws = resample(fit, args.m, rng)
    return "".join(repr(float(v)) + "\n" for v in draws)


def _cmd_bandwidth(args) -> str:
    data = _load_data(args.data) if args.data else None
    try:
        plan = MisePlan(args.error, args.n, args.kernel, args.roughness, args.target, data,
                        i_method=args.i_method)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = select_bandwidth(plan)
    if args.curve:
        with open(args.curve, "w") as fh:
            fh.write(_csv("h,mise", zip(res.h_grid, res.mise_curve)))
    return _csv("h_opt,mise_min", [(res.h_opt, res.mise_min)])


def _cmd_simulate(args) -> str:
    arg_list = {"cdf": args.x, "quantile": args.u, "absmoment": args.q, "ise": []}[args.estimand]
    if arg_list is None:
        flag = {"cdf": "--x", "quantile": "--u", "absmoment": "--q"}[args.estimand]
        raise UsageError(f"estimand '{args.estimand}' needs {flag}")
    kernel = args.kernel or parse_kernel("2,2" if args.estimand == "ise" else "4,2")
    spec = QuadratureSpec(rel_tol=args.rel_tol, panels_per_period=args.panels)
    try:
        cfg = ExperimentConfig(args.target, args.error, args.n, args.h_grid, args.estimand, arg_list,
                               args.runs, args.seed, kernel, spec, args.workers, args.ise_method)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = run_ise_experiment(cfg) if args.estimand == "ise" else run_mse_experiment(cfg)
    if args.dump_runs:
        with open(args.dump_runs, "w") as fh:
            summary.dump_runs(fh)
    return summary.to_csv()


def _cmd_rates(args) -> str:
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    rb = rates(args.alpha, args.beta, args.n, args.C, args.q)
    rho4 = "" if rb.rho4 is None else repr(rb.rho4)
    return _csv("rho1,rho2,rho3,rho4,h1,h2,h3,ell",
                [(rb.rho1, rb.rho2, rb.rho3, rho4, rb.h1, rb.h2, rb.h3, rb.ell)])


def _cmd_asymp(args) -> str:
    try:
        prof = TailProfile(args.alpha, args.z, args.beta, args.a, args.b)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = []
    if args.x == 0:
        rows.append(("b1", bias_b1(args.kernel, prof, args.convention)))
    else:
        if args.h is None:
            raise UsageError("the off-origin bias term needs --h")
        rows.append(("b2", bias_b2(args.h, args.x, prof)))
    rows.append(("v", variance_v(args.x, prof, args.kernel, args.fx, args.convention)))
    return _csv("quantity,value", rows)


def _cmd_check(args) -> str:
    return str(smoothness_class(args.error, args.q)) + "\n"


_COMMANDS = {
    "estimate": _cmd_estimate,
    "quantile": _cmd_quantile,
    "moments": _cmd_moments,
    "resample": _cmd_resample,
    "bandwidth": _cmd_bandwidth,
    "simulate": _cmd_simulate,
    "rates": _cmd_rates,
    "asymp": _cmd_asymp,
    "check-smoothness": _cmd_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_attach_negative_values(_expand_config(argv)))
        text = _COMMANDS[args.command](args)
    except _ParserError:
        return 1
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"deconvolve: error: {exc}\n")
        return 1
    except DeconvolutionError as exc:
        sys.stderr.write(f"deconvolve: numerical failure: {exc}\n")
        return 2
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0
