"""Command line entry point: ``vpmcf run|sweep|oracle|check``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure during
time stepping (the failing step index is printed on standard error).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from .dynamics import NumericalError, StepFailure
from .harness import ConfigError, RunConfig, check_history, run_experiment, sweep
from .oracle import ExtinctionError, oracle_integrate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpmcf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides [run] output_dir)")

    s = sub.add_parser("sweep", help="refinement sweep over dt, eps or n")
    s.add_argument("config")
    s.add_argument("--param", required=True, choices=["dt", "eps", "n"])
    s.add_argument("--factors", required=True, type=_floats, help="comma separated, e.g. 1,0.5,0.25")
    s.add_argument("--dt-power", type=float, default=2.0, help="eps sweep scales dt by factor**p")
    s.add_argument("-o", "--output")

    o = sub.add_parser("oracle", help="integrate the sharp-interface sphere system")
    o.add_argument("radii", type=_floats)
    o.add_argument("--d", type=int, default=2)
    o.add_argument("--T", type=float, required=True)
    o.add_argument("--law", choices=["vpmcf", "mcf"], default="vpmcf")
    o.add_argument("--samples", type=int, default=0, help="resample onto this many equal times")

    c = sub.add_parser("check", help="recompute diagnostics from stored snapshots")
    c.add_argument("history_dir")
    return p


def _cmd_oracle(args) -> int:
    tr = oracle_integrate(args.radii, args.T, d=args.d, law=args.law)
    w = csv.writer(sys.stdout)
    w.writerow(["t"] + [f"R{i}" for i in range(len(args.radii))])
    if args.samples > 1:
        import numpy as np

        for t in np.linspace(0.0, tr.t[-1], args.samples):
            w.writerow([repr(float(t))] + [repr(float(r)) for r in tr.at(t)])
    else:
        for t, R in zip(tr.t, tr.R):
            w.writerow([repr(float(t))] + [repr(float(r)) for r in R])
    if tr.extinct:
        print(f"extinction at t = {tr.extinction_time!r}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            res = run_experiment(RunConfig.load(args.config), args.output)
            print(res.out_dir)
        elif args.command == "sweep":
            print(sweep(RunConfig.load(args.config), args.param, args.factors, args.output, args.dt_power))
        elif args.command == "oracle":
            return _cmd_oracle(args)
        elif args.command == "check":
            out, diffs = check_history(args.history_dir)
            print(out)
            for k, v in diffs.items():
                print(f"{k}: max |diff| = {v:.3e}")
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ExtinctionError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StepFailure as exc:
        print(f"numerical failure at step {exc.step_index}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
