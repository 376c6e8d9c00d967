"""Command-line front door over the tape format and the CSV outputs.

Subcommands: ``compile`` (tape -> kernel source), ``eval`` (tape + input
CSV -> output CSV through the batched runtime), ``bench`` (timing table),
``quad-roa`` and ``quad-sweep`` (quadcopter stability masks and parameter
sweeps).  Exit codes: 0 success, 2 usage error, 1 runtime failure.

Batch data format: headerless CSV, one batch element per row, input (or
output) nonzeros concatenated in tape order.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import quadsim
from .batchrt import BatchWorkspace, batch_eval
from .codegen import write_kernel
from .tape import load

__all__ = ["run", "main", "build_parser"]


def _floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _read_batch_csv(path: str) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValueError(
                f"{path}: row {lineno} has {len(row)} values, expected {width}"
            )
    return np.array(rows, dtype=float)


def _write_batch_csv(stream, matrix: np.ndarray) -> None:
    writer = csv.writer(stream)
    for row in matrix:
        writer.writerow([repr(float(v)) for v in row])


# ------------------------------------------------------------- subcommands


def _cmd_compile(args) -> int:
    tape = load(args.tape)
    out = args.output if args.output else str(Path(args.tape).with_suffix(".cu"))
    kernel = write_kernel(tape, out, block_size=args.block_size)
    print(
        f"wrote {out}: kernel {kernel.function_name}, "
        f"{kernel.n_instructions} instructions",
        file=sys.stderr,
    )
    return 0


def _cmd_eval(args) -> int:
    tape = load(args.tape)
    data = _read_batch_csv(args.input)
    width = sum(tape.nnz_in)
    if data.shape[1] != width:
        raise ValueError(
            f"{args.input}: rows have {data.shape[1]} values but tape "
            f"{tape.name!r} takes {width} input nonzeros per element"
        )
    batch = args.batch if args.batch is not None else data.shape[0]
    if batch != data.shape[0]:
        raise ValueError(
            f"--batch {batch} does not match {data.shape[0]} data rows in {args.input}"
        )
    ws = BatchWorkspace(tape, batch)
    col = 0
    for i, nnz in enumerate(tape.nnz_in):
        ws.set_input(i, data[:, col : col + nnz])
        col += nnz
    batch_eval(tape, ws, n_threads=args.threads)
    out = np.hstack([ws.output_matrix(j) for j in range(tape.n_out)])
    if args.output:
        with open(args.output, "w", newline="") as fh:
            _write_batch_csv(fh, out)
    else:
        _write_batch_csv(sys.stdout, out)
    return 0


def _cmd_bench(args) -> int:
    cases = [bench_mod.gen_ldlt_case(n) for n in args.sizes]
    records = bench_mod.run_benchmark(
        cases,
        args.batches,
        n_threads=args.threads,
        repetitions=args.repetitions,
    )
    bench_mod.write_bench_csv(args.output, records)
    print(f"wrote {args.output}: {len(records)} rows", file=sys.stderr)
    return 0


def _cmd_quad_roa(args) -> int:
    params = quadsim.QuadParams()
    momentum_x = np.linspace(-args.momentum_x_max, args.momentum_x_max, args.grid)
    momentum_omega = np.linspace(
        -args.momentum_omega_max, args.momentum_omega_max, args.grid
    )
    u_max_values = (
        args.u_max
        if args.u_max is not None
        else [k * params.hover_thrust for k in (2.0, 4.0, 8.0)]
    )
    masks = quadsim.roa_scan(
        momentum_x,
        momentum_omega,
        u_max_values,
        params=params,
        steps=args.steps,
        n_threads=args.threads,
    )
    quadsim.write_roa_csv(args.output, u_max_values, momentum_x, momentum_omega, masks)
    stable = ", ".join(f"{m.sum()}/{m.size}" for m in masks)
    print(f"wrote {args.output}: stable cells {stable}", file=sys.stderr)
    return 0


def _cmd_quad_sweep(args) -> int:
    params = quadsim.QuadParams()
    z0 = np.array(args.z0, dtype=float)
    rows = quadsim.param_sweep(
        args.param,
        args.values,
        z0=z0,
        params=params,
        steps=args.steps,
        n_threads=args.threads,
    )
    quadsim.write_sweep_csv(args.output, rows)
    print(f"wrote {args.output}: {len(rows)} rows", file=sys.stderr)
    return 0


# ------------------------------------------------------------------ parser


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads for batch evaluation (default: VECSYM_THREADS "
        "environment variable if set, else the detected CPU count)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecsym",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser(
        "compile",
        help="emit batched kernel source from a tape file",
        description="Emit CUDA-style batched kernel source for a saved tape. "
        "Statements follow the fixed work/inputs/outputs array convention "
        "with one environment per thread (default launch block size 512).",
        formatter_class=fmt,
    )
    p.add_argument("tape", help="tape file to compile")
    p.add_argument(
        "-o",
        "--output",
        default=None,
        help="output path (default: tape file name with a .cu suffix)",
    )
    p.add_argument("--block-size", type=int, default=512, help="launch block size to record")
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser(
        "eval",
        help="run a tape over a batch and write the outputs as CSV",
        description="Evaluate a saved tape over a batch. The input file is "
        "headerless CSV with one batch element per row and input nonzeros "
        "concatenated in tape order; the output CSV mirrors that layout for "
        "the tape outputs.",
        formatter_class=fmt,
    )
    p.add_argument("tape", help="tape file to evaluate")
    p.add_argument("--input", required=True, help="headerless CSV of batch inputs")
    p.add_argument(
        "--batch",
        type=int,
        default=None,
        help="batch size; must match the input row count (default: row count)",
    )
    p.add_argument(
        "-o", "--output", default=None, help="output CSV path (default: stdout)"
    )
    _add_threads(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser(
        "bench",
        help="time serial vs batched evaluation and write bench.csv",
        description="Time serial vs batched evaluation on graded-size SPD "
        "solve tapes. Protocol defaults: 2 warm-up calls, median of 5 "
        "repetitions per measurement, one thread for the serial baseline; "
        "speedup is always t_serial_total / t_batch.",
        formatter_class=fmt,
    )
    p.add_argument(
        "--sizes",
        type=_ints,
        default=list(bench_mod.DEFAULT_SIZES),
        help="comma-separated SPD system sizes (instruction counts step "
        "through roughly 1e1..1e5)",
    )
    p.add_argument(
        "--batches",
        type=_ints,
        default=list(bench_mod.DEFAULT_BATCH_SIZES),
        help="comma-separated batch sizes",
    )
    p.add_argument(
        "--repetitions",
        type=int,
        default=bench_mod.MIN_REPETITIONS,
        help="timed repetitions per measurement (median reported, minimum 5)",
    )
    p.add_argument("-o", "--output", default="bench.csv", help="output CSV path")
    _add_threads(p)
    p.set_defaults(func=_cmd_bench)

    quad_defaults = quadsim.QuadParams()
    quad_blurb = (
        "Quadcopter model defaults: mass 0.5, inertia 0.01, arm length 0.15, "
        "gravity 9.81, time step 0.02, state weights diag(10,10,10,1,1,1), "
        "thrust weights diag(1,1), thrust limit twice the hover thrust "
        f"({quad_defaults.u_max}), gain from 15 fixed doubling iterations; "
        "a rollout counts as stable when the final state's weighted norm is "
        f"below {quadsim.STABILITY_NORM_TOLERANCE} after the horizon."
    )

    p = sub.add_parser(
        "quad-roa",
        help="scan initial-momenta stability regions and write roa.csv",
        description="Region-of-attraction scan over initial linear/angular "
        "momentum for one or more thrust limits. " + quad_blurb,
        formatter_class=fmt,
    )
    p.add_argument("--grid", type=int, default=41, help="points per momentum axis")
    p.add_argument(
        "--momentum-x-max",
        type=float,
        default=2.5,
        help="linear momentum axis spans [-max, max]",
    )
    p.add_argument(
        "--momentum-omega-max",
        type=float,
        default=0.06,
        help="angular momentum axis spans [-max, max]",
    )
    p.add_argument(
        "--u-max",
        type=_floats,
        default=None,
        help="comma-separated thrust limits (default: 2x, 4x, 8x hover thrust)",
    )
    p.add_argument(
        "--steps", type=int, default=quadsim.DEFAULT_STEPS, help="rollout horizon"
    )
    p.add_argument("-o", "--output", default="roa.csv", help="output CSV path")
    _add_threads(p)
    p.set_defaults(func=_cmd_quad_roa)

    p = sub.add_parser(
        "quad-sweep",
        help="sweep one model parameter and write sweep.csv trajectories",
        description="Roll out the closed loop for several values of one "
        "parameter and write every (state, thrust) row. " + quad_blurb,
        formatter_class=fmt,
    )
    p.add_argument(
        "--param",
        default="q_px",
        choices=list(quadsim.THETA_NAMES),
        help="parameter to vary",
    )
    p.add_argument(
        "--values",
        type=_floats,
        default=[5.0, 10.0, 20.0, 40.0, 80.0],
        help="comma-separated parameter values",
    )
    p.add_argument(
        "--z0",
        type=_floats,
        default=[1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
        help="initial state p_x,p_y,phi,v_x,v_y,omega",
    )
    p.add_argument(
        "--steps", type=int, default=quadsim.DEFAULT_STEPS, help="rollout horizon"
    )
    p.add_argument("-o", "--output", default="sweep.csv", help="output CSV path")
    _add_threads(p)
    p.set_defaults(func=_cmd_quad_sweep)

    return parser


def run(argv=None) -> int:
    """Parse and execute one invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"vecsym {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
