"""Command line entry point: one subcommand per experiment.

Exit codes: 0 ok, 1 usage or config error, 2 guard violation,
3 acceptance-gate failure (self-test).
"""

from __future__ import annotations

import argparse
import sys

import scipy.fft as sfft

from .harness import EXPERIMENTS, keys_help, load_config, run_experiment


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v)


def _grid(text):
    n, L = text.split(",")
    return int(n), float(L)


def _model(text):
    vals = _floats(text)
    if len(vals) not in (2, 4):
        raise argparse.ArgumentTypeError("--model takes Q2,mu2 (srh) or Q0,mu0,Q1,mu1 (nls)")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="FFT worker threads")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--model", type=_model, help="planted parameters Q0,mu0,Q1,mu1 or Q2,mu2")
    common.add_argument("--family", choices=("nls", "srh"))
    common.add_argument("--grid", type=_grid, metavar="n,L")
    common.add_argument("--T", type=float, help="half window")
    common.add_argument("--dt", type=float, help="Strang step")
    common.add_argument("--lambdas", type=_floats, help="comma-separated dilations")
    common.add_argument("--eps", type=_floats, help="comma-separated amplitudes")
    common.add_argument("--depth", type=int, help="binary digits J")

    p = argparse.ArgumentParser(
        prog="yukawa-scattering",
        description="Yukawa-Hartree scattering experiments.",
        epilog=keys_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, parents=[common], epilog=keys_help(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "evolve":
            sp.add_argument("--kind", choices=("free", "yukawa", "semirel", "nls", "srh"))
            sp.add_argument("--t", type=float, help="final time")
            sp.add_argument("--dump", choices=("fields", "norms"))
        if name == "scatter":
            sp.add_argument("--lambda", dest="lam", type=float, help="single dilation")
    return p


def _overrides(args) -> dict:
    o = {"experiment": args.experiment}
    if args.out:
        o["out"] = args.out
    if args.model:
        if len(args.model) == 2:
            o.update(Q2=args.model[0], mu2=args.model[1], family="srh")
        else:
            o.update(Q0=args.model[0], mu0=args.model[1], Q1=args.model[2], mu1=args.model[3])
    if args.family:
        o["family"] = args.family
    if args.grid:
        o["n"], o["L"] = args.grid
    for key in ("T", "dt", "lambdas", "eps", "depth"):
        if getattr(args, key) is not None:
            o[key] = getattr(args, key)
    for key in ("kind", "t", "dump"):
        if getattr(args, key, None) is not None:
            o[key] = getattr(args, key)
    if getattr(args, "lam", None) is not None:
        o["lambdas"] = (args.lam,)
    return o


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = load_config(args.config or "", _overrides(args))
    except (ValueError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 1
    with sfft.set_workers(args.threads):
        outcome = run_experiment(cfg)
    for msg in outcome.messages:
        print(msg, file=sys.stderr)
    for path in outcome.files:
        print(f"wrote {path}")
    if cfg.experiment == "self-test":
        for name, value, tol, ok in outcome.rows:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3g} < {tol:.3g}")
    if outcome.result_line:
        print(outcome.result_line)
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
