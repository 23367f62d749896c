"""Command-line front end.

Subcommands: simulate, sweep-ic, sweep-noise, certify, synth-gains,
iss-probe.  Exit codes: 0 success, 1 configuration error, 2 certification
or convergence failure, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import sys

from .dynamics import DivergenceError
from .gains import SynthesisError
from .harness import (
    ConfigError,
    ConvergenceFailure,
    build_experiment,
    load_config,
    run_certify,
    run_iss_probe,
    run_simulate,
    run_sweep_ic,
    run_sweep_noise,
    run_synth_gains,
)
from .lyapunov import CertificationError

COMMANDS = {
    "simulate": run_simulate,
    "sweep-ic": run_sweep_ic,
    "sweep-noise": run_sweep_noise,
    "certify": run_certify,
    "synth-gains": run_synth_gains,
    "iss-probe": run_iss_probe,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-final", type=float, default=None, dest="t_final")
    p.add_argument("--threshold", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxtdiff",
        description="Fixed-time differentiator experiments: simulation, "
        "certification and gain synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config)
        overrides = {
            k: getattr(args, k)
            for k in ("seed", "workers", "dt", "t_final", "threshold")
            if getattr(args, k) is not None
        }
        exp = build_experiment(doc, overrides)
        out_dir = args.out or (doc.get("output") or {}).get("dir") or "out"
        code = COMMANDS[args.command](exp, out_dir)
    except ConfigError as ex:
        for problem in ex.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except (CertificationError, SynthesisError, ConvergenceFailure) as ex:
        print(f"failure: {ex}", file=sys.stderr)
        return 2
    except DivergenceError as ex:
        print(f"divergence: {ex}", file=sys.stderr)
        return 3
    if code != 0:
        print(f"{args.command}: finished with code {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
