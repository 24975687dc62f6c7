"""Command-line front end.

Subcommands: ``run``, ``compare``, ``convergence``, ``figure`` and
``reference``. Exit codes: 0 success, 1 usage error, 2 numerical failure.

The reservoir follows dz/dt = +y*D(x, y), so that K = H + z is conserved.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys

import numpy as np

from . import experiments as ex
from .integrators import (
    STEPPERS,
    IncompatibleSchemeError,
    IntegrationError,
    SolverConfig,
    Starred,
)
from .storage import cached_reference, trajectory_columns, write_csv

EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key} needs a number, got {value!r}") from None


def _reference(text: str) -> ex.ReferenceSpec:
    try:
        return ex.ReferenceSpec.parse(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _add_system_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", choices=sorted(ex.DEFAULT_SETUPS), default="damped-ho")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="system parameter (b for damped-ho/duffing, a for vdp); repeatable")
    p.add_argument("--x0", type=float, help="initial position (default: published value)")
    p.add_argument("--y0", type=float, help="initial velocity (default: published value)")
    p.add_argument("--h", type=float, default=1e-3, help="time step")
    p.add_argument("--T", type=float, default=100.0, help="simulation period")
    p.add_argument("--tol", type=float, default=1e-15, help="fixed-point tolerance")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--starred", choices=[s.value for s in Starred], default="midpoint",
                   help="where the damping force is sampled inside a step")
    p.add_argument("--reservoir", choices=["on", "off"], default="on")
    p.add_argument("--reference", type=_reference, default=ex.ReferenceSpec(),
                   help="none | exact | rk4:H_REF:STRIDE")
    p.add_argument("--strict", action="store_true",
                   help="reject scheme/system pairs the method is not meant for")
    p.add_argument("--cache-dir", help="directory for cached reference runs")
    p.add_argument("--allow-stalls", action="store_true",
                   help="record stalled fixed-point solves instead of failing")
    p.add_argument("--out", help="output CSV path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resdg", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="integrate one system with one scheme")
    _add_system_args(p)
    p.add_argument("--integrator", choices=sorted(STEPPERS), default="en-gr")

    p = sub.add_parser("compare", help="several schemes on a shared grid and reference")
    _add_system_args(p)
    p.add_argument("--integrator", choices=sorted(STEPPERS), action="append", dest="integrators",
                   help="repeatable; default en-gr, st-gr, imr, sv")

    p = sub.add_parser("convergence", help="global error against step size and fitted order")
    _add_system_args(p)
    p.add_argument("--integrator", choices=sorted(STEPPERS), default="en-gr")
    p.add_argument("--hs", type=float, nargs="+", default=[1e-2, 5e-3, 2.5e-3])
    p.set_defaults(T=10.0)

    p = sub.add_parser("figure", help="dataset behind one of the published figures")
    p.add_argument("id", choices=sorted(ex.FIGURES))
    p.add_argument("--reference", type=_reference, default=ex.DEFAULT_REFERENCE,
                   help="reference for figures 4.1, 4.3 and 4.4 (default rk4:1e-06:1000)")
    p.add_argument("--cache-dir")
    p.add_argument("--out")

    p = sub.add_parser("reference", help="RK4 (3/8 rule) reference trajectory")
    _add_system_args(p)
    p.add_argument("--h-ref", type=float, default=1e-6)
    p.add_argument("--stride", type=int, default=1000)
    return parser


def spec_from_args(args) -> ex.RunSpec:
    cfg = SolverConfig(h=args.h, tol=args.tol, max_iter=args.max_iter, starred=args.starred,
                       reservoir=args.reservoir == "on", strict=args.strict)
    ic = None
    if args.x0 is not None or args.y0 is not None:
        _, default_ic = ex.DEFAULT_SETUPS[args.system]
        ic = (args.x0 if args.x0 is not None else default_ic[0],
              args.y0 if args.y0 is not None else default_ic[1])
    spec = ex.RunSpec(system=args.system, params=dict(args.param),
                      integrator=getattr(args, "integrator", None) or "en-gr", ic=ic, cfg=cfg,
                      T=args.T, output=args.out, reference=args.reference)
    return spec.resolved()


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _summary_stream(path):
    # keep stdout clean when it carries the CSV
    return sys.stderr if path in (None, "-") else sys.stdout


def _cmd_run(args) -> int:
    spec = spec_from_args(args)
    result = ex.run(spec, args.cache_dir, "record" if args.allow_stalls else "raise")
    with _output(args.out) as fh:
        write_csv(fh, result.columns(), spec.as_meta())
    print(f"{spec.integrator} on {spec.system}: {result.report.summary()}",
          file=_summary_stream(args.out))
    return 0


def _cmd_compare(args) -> int:
    spec = spec_from_args(args)
    names = args.integrators or ["en-gr", "st-gr", "imr", "sv"]
    cols, results = ex.compare(spec, names, args.cache_dir,
                               "record" if args.allow_stalls else "raise")
    meta = spec.as_meta()
    meta["integrator"] = names
    with _output(args.out) as fh:
        write_csv(fh, cols, meta)
    stream = _summary_stream(args.out)
    for res in results:
        print(f"{res.spec.integrator} on {spec.system}: {res.report.summary()}", file=stream)
    return 0


def _cmd_convergence(args) -> int:
    spec = spec_from_args(args)
    rows, order = ex.convergence(spec, args.hs, args.cache_dir)
    with _output(args.out) as fh:
        fh.write("h,max_error\n")
        for h, err in rows:
            fh.write(f"{h:.17g},{err:.17g}\n")
        fh.write(f"# order={order:.6f}\n")
    print(f"{spec.integrator} on {spec.system}: fitted order {order:.4f}",
          file=_summary_stream(args.out))
    return 0


def _cmd_figure(args) -> int:
    data = ex.figure(args.id, args.reference, args.cache_dir)
    with _output(args.out) as fh:
        write_csv(fh, data.columns, data.meta, data.trailer)
    stream = _summary_stream(args.out)
    for key, series in data.columns.items():
        if key != "t":
            print(f"figure {args.id} {key}: max={float(np.nanmax(series)):.3e}",
                  file=stream)
    for line in data.trailer:
        print(f"figure {args.id} {line}", file=stream)
    return 0


def _cmd_reference(args) -> int:
    spec = spec_from_args(args)
    model = spec.model()
    traj = cached_reference(model, spec.ic, args.h_ref, args.stride, spec.T, args.cache_dir)
    meta = spec.as_meta()
    meta.update(integrator="rk4-38", h_ref=args.h_ref, stride=args.stride)
    del meta["cfg"], meta["reference"]
    with _output(args.out) as fh:
        write_csv(fh, trajectory_columns(model, traj), meta)
    print(f"reference on {spec.system}: {len(traj)} samples, final x={traj.x[-1]:.17g}",
          file=_summary_stream(args.out))
    return 0


COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "convergence": _cmd_convergence,
    "figure": _cmd_figure,
    "reference": _cmd_reference,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except IncompatibleSchemeError as err:
        print(f"resdg: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrationError as err:
        print(f"resdg: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as err:
        print(f"resdg: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
