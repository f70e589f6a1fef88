"""Command-line front end.

Subcommands: ``simulate`` (write a snapshot file), ``estimate`` (run one
method on a snapshot file or a freshly generated scenario), ``sweep``
(Monte-Carlo grid from a JSON spec) and ``crb`` (print the bound).
Angles on the command line are degrees.  ``DOAMP_OUT_DIR`` supplies the
default directory for output paths.

Exit codes: 0 success, 1 usage/parse errors, 2 shortfall (fewer peaks
than sources), 3 divergence.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .array_model import build_grid
from .baselines import RefineConfig, crb, dft_two_stage, ml_grid
from .inference import AlgoConfig, DivergenceError, estimate_doas
from .simulate import (
    SnapshotFormatError,
    draw_scenario,
    generate_snapshots,
    load_snapshots,
    save_snapshots,
)
from .sweep import SweepSpec, run_sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SHORTFALL = 2
EXIT_DIVERGED = 3


def _out_path(name: str | None, default: str) -> Path:
    base = Path(os.environ.get("DOAMP_OUT_DIR", "."))
    if name is None:
        return base / default
    p = Path(name)
    return p if p.is_absolute() else base / p


def _parse_intervals(text: str):
    # "lo:hi,lo:hi" in degrees; "30:30" pins an angle.
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        try:
            out.append((float(lo), float(hi)))
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"bad interval {part!r}; expected lo:hi in degrees"
            ) from None
    return out


def _load_algo_config(path) -> AlgoConfig:
    if path is None:
        return AlgoConfig()
    with open(path) as fh:
        return AlgoConfig(**json.load(fh))


def _generate(args):
    scenario = draw_scenario(args.intervals, args.T, args.seed)
    return generate_snapshots(scenario, args.M, args.snr, args.seed + 1)


def cmd_simulate(args) -> int:
    snaps = _generate(args)
    path = _out_path(args.out, "snapshots.csv")
    save_snapshots(snaps, path)
    thetas = ",".join(f"{np.rad2deg(t):.6f}" for t in snaps.scenario.thetas)
    print(f"wrote {path} (M={snaps.M}, T={snaps.T}, thetas_deg=[{thetas}])")
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.infile is not None:
        snaps = load_snapshots(args.infile)
    else:
        snaps = _generate(args)
    config = _load_algo_config(args.config)
    grid = build_grid(snaps.M, args.L)
    start = time.perf_counter()
    iterations = 0
    try:
        if args.method == "mp":
            estimates, _, trace = estimate_doas(snaps.Y, grid, args.K, config)
            iterations = len(trace)
        else:
            raw = np.fft.fft(snaps.Y, axis=0, norm="ortho")
            if args.method == "dft":
                estimates = dft_two_stage(
                    raw, args.K, RefineConfig(P=args.P, half_width=args.half_width)
                )
            else:
                estimates = ml_grid(raw, args.K, args.ml_grid_step)
                iterations = estimates[0].iterations if estimates else 0
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    runtime_ms = (time.perf_counter() - start) * 1e3

    for e in estimates:
        print(
            f"theta_deg={np.rad2deg(e.theta_hat)!r} w={e.w} "
            f"alpha={e.alpha_hat!r} power={e.power!r}"
        )
    print(f"iterations={iterations} method={args.method} K={args.K}")
    print(f"runtime_ms={runtime_ms:.3f}", file=sys.stderr)

    if args.out is not None:
        path = _out_path(args.out, "estimates.csv")
        with open(path, "w") as fh:
            fh.write("method,theta_deg,w,alpha_hat,power,iterations,converged\n")
            for e in estimates:
                fh.write(
                    f"{args.method},{np.rad2deg(e.theta_hat)!r},{e.w},"
                    f"{e.alpha_hat!r},{e.power!r},{e.iterations},"
                    f"{'true' if e.converged else 'false'}\n"
                )
    if len(estimates) < args.K:
        print(
            f"shortfall: found {len(estimates)} of {args.K} sources",
            file=sys.stderr,
        )
        return EXIT_SHORTFALL
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_json(args.spec)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.methods is not None:
        overrides["methods"] = tuple(args.methods.split(","))
    if args.base_seed is not None:
        overrides["base_seed"] = args.base_seed
    if overrides:
        spec = SweepSpec.from_dict({**spec.to_dict(), **overrides})
    out_dir = _out_path(args.out, "sweep_out")
    records, summary = run_sweep(spec, jobs=args.jobs, out_dir=out_dir)
    print(f"wrote {out_dir}/records.csv ({len(records)} rows) and summary.csv")
    for row in summary:
        print(
            f"method={row.method} snr_db={row.snr_db} T={row.T} "
            f"mean_mse_deg2={row.mean_mse_deg2!r} "
            f"success_rate={row.success_rate:.2f} ({row.trials} trials)"
        )
    return EXIT_OK


def cmd_crb(args) -> int:
    thetas_rad = np.deg2rad(np.asarray(args.thetas, dtype=float))
    bound_rad2 = crb(thetas_rad, args.M, args.T, args.snr)
    bound_deg2 = bound_rad2 * (180.0 / np.pi) ** 2
    print("theta_deg,crb_rad2,crb_deg2")
    for t, br, bd in zip(args.thetas, bound_rad2, bound_deg2):
        print(f"{t!r},{br!r},{bd!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doamp", description="Block-sparse DOA estimation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_generate_args(p):
        p.add_argument("--intervals", type=_parse_intervals,
                       default=[(-60, -50), (-20, -10), (20, 30)],
                       help="angle intervals lo:hi,... in degrees")
        p.add_argument("--snr", type=float, default=0.0, help="SNR in dB")
        p.add_argument("--T", type=int, default=10, help="snapshot count")
        p.add_argument("--M", type=int, default=128, help="array elements")
        p.add_argument("--seed", type=int, default=0, help="base RNG seed")

    p_sim = sub.add_parser("simulate", help="generate a snapshot file")
    add_generate_args(p_sim)
    p_sim.add_argument("--out", help="output snapshot file")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate directions")
    p_est.add_argument("--method", choices=("mp", "dft", "ml"), default="mp")
    src = p_est.add_mutually_exclusive_group()
    src.add_argument("--in", dest="infile", help="snapshot file to read")
    src.add_argument("--generate", action="store_true",
                     help="generate a scenario instead of reading a file")
    add_generate_args(p_est)
    p_est.add_argument("--K", type=int, default=3, help="source count")
    p_est.add_argument("--L", type=int, default=7, help="kernel slots")
    p_est.add_argument("--config", help="JSON file of estimator settings")
    p_est.add_argument("--P", type=int, default=20, help="DFT refine sub-grid")
    p_est.add_argument("--half-width", type=int, default=3, dest="half_width")
    p_est.add_argument("--ml-grid-step", type=float, default=0.1,
                       dest="ml_grid_step", help="ML grid step in degrees")
    p_est.add_argument("--out", help="also write estimates as CSV")
    p_est.set_defaults(func=cmd_estimate)

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    p_sweep.add_argument("--spec", required=True, help="sweep spec JSON file")
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--trials", type=int, help="override spec trials")
    p_sweep.add_argument("--methods", help="override methods, comma separated")
    p_sweep.add_argument("--base-seed", type=int, dest="base_seed",
                         help="override spec base seed")
    p_sweep.set_defaults(func=cmd_sweep)

    p_crb = sub.add_parser("crb", help="print the angle-variance bound")
    p_crb.add_argument("--thetas", type=float, nargs="+", required=True,
                       help="true angles in degrees")
    p_crb.add_argument("--M", type=int, default=128)
    p_crb.add_argument("--T", type=int, default=10)
    p_crb.add_argument("--snr", type=float, default=0.0)
    p_crb.set_defaults(func=cmd_crb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SnapshotFormatError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
