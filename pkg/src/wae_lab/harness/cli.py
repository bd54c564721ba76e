"""Command-line entry point: ``lab <subcommand> --config PATH [--seed U64] [--out DIR]``.

Exit status is 0 when every check of the experiment passes, 2 when a check
fails and 1 on any error.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import platform
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy

from ..errors import LabError
from ..rates import RateFit
from ..rng import GENERATOR_NAME
from .config import KINDS, ExperimentSpec, load_config
from .experiments import ExperimentResult, read_results, refit, run_experiment

log = logging.getLogger("wae_lab")

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


def results_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("experiment,n,replicate,metric,value\n")
    for e, n, r, m, v in sorted(rows):
        buf.write(f"{e},{n},{r},{m},{v:.17g}\n")
    return buf.getvalue()


def fit_csv(fit: Optional[RateFit]) -> str:
    if fit is None:
        return "slope,stderr,intercept\nnan,nan,nan\n"
    return f"slope,stderr,intercept\n{fit.slope:.17g},{fit.stderr:.17g},{fit.intercept:.17g}\n"


def meta_txt(spec: ExperimentSpec, checks: Dict[str, bool]) -> str:
    import ot

    lines = [
        f"experiment = {spec.kind}",
        f"seed = {spec.seed}",
        f"generator = {GENERATOR_NAME}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"pot = {ot.__version__}",
        "",
        "[checks]",
        *(f"{k} = {'pass' if v else 'FAIL'}" for k, v in sorted(checks.items())),
        "",
        "[config]",
        spec.echo(),
        "",
    ]
    return "\n".join(lines)


def write_outputs(out: str, spec: ExperimentSpec, result: ExperimentResult) -> None:
    os.makedirs(out, exist_ok=True)
    files = {
        "results.csv": results_csv(result.rows),
        "fit.csv": fit_csv(result.fit),
        "meta.txt": meta_txt(spec, result.checks),
        **result.extras,
    }
    for name, text in files.items():
        with open(os.path.join(out, name), "w", newline="\n") as fh:
            fh.write(text)


def _report(path: str, out: Optional[str]) -> int:
    src = os.path.join(path, "results.csv") if os.path.isdir(path) else path
    with open(src) as fh:
        rows = read_results(fh.read())
    fits = refit(rows)
    buf = io.StringIO()
    buf.write("experiment,metric,slope,stderr,intercept\n")
    for (e, m), f in fits.items():
        buf.write(f"{e},{m},{f.slope:.17g},{f.stderr:.17g},{f.intercept:.17g}\n")
    text = buf.getvalue()
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "fit.csv"), "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Monte Carlo checks of WAE consistency rates")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        if kind == "report":
            p.add_argument("--config", required=True, help="results.csv file or the directory holding it")
        else:
            p.add_argument("--config", required=True, help="flat key = value config file")
            p.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "report":
            return _report(args.config, args.out)
        spec = load_config(args.config, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise LabError("--seed must be an unsigned 64-bit integer")
            spec = spec.with_(seed=args.seed)
        result = run_experiment(spec)
        out = args.out or os.path.join("runs", f"{spec.kind}-{spec.seed}")
        write_outputs(out, spec, result)
    except (LabError, OSError, ValueError) as exc:
        print(f"lab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for k, v in sorted(result.checks.items()):
        print(f"{k}: {'pass' if v else 'FAIL'}")
    if spec.kind == "dim":
        print(f"s_hat = {result.summary['s_hat']:.4f}")
    elif result.fit is not None:
        print(f"slope = {result.fit.slope:.4f} +/- {result.fit.stderr:.4f}")
    print(f"wrote {out}")
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
