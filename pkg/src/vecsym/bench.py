"""Serial-vs-batched throughput benchmarks on the reference runtime.

Cases are graded-size symmetric positive-definite solve functions
(``(A_nonzeros, b) -> x`` via the symbolic LDL^T factorization), flattened
to tapes.  For each (case, batch size) pair the harness reports the median
single-instance evaluation time scaled by the batch size against the
median lock-step batch evaluation time; speedup is always the quotient of
those two columns, never an independent measurement.

All timing runs in one memory space on the host CPU; there is no separate
accelerator or transfer-cost axis.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .batchrt import BatchWorkspace, batch_eval, default_thread_count, serial_eval
from .ocpkit import ldlt_solve
from .symcore import OpCode, SymbolicFunction, horzcat, sym, vertcat
from .tape import InstructionTape, flatten

__all__ = [
    "DEFAULT_SIZES",
    "DEFAULT_BATCH_SIZES",
    "BenchCase",
    "BenchRecord",
    "gen_ldlt_case",
    "default_cases",
    "case_inputs",
    "run_benchmark",
    "write_bench_csv",
]

# System sizes whose arithmetic instruction counts step through roughly
# 1e1, 1e2, 1e3, 1e4, 1e5 (the count grows ~cubically in n).
DEFAULT_SIZES = (2, 5, 12, 25, 57)
DEFAULT_BATCH_SIZES = (1, 16, 256, 4096)

MIN_REPETITIONS = 5
WARMUP_CALLS = 2
_MIN_TIMER_TICKS = 100  # every measurement must span at least this many ticks
_MAX_INNER_CALLS = 1_000_000_000

_PLUMBING_OPS = frozenset(
    {int(OpCode.CONST), int(OpCode.INPUT), int(OpCode.OUTPUT), int(OpCode.ASSIGN)}
)


@dataclass(frozen=True)
class BenchCase:
    """One graded-size solve function.

    ``n_instructions`` counts arithmetic instructions (the per-element
    dispatch work); input/output plumbing is excluded so the count tracks
    the cubic flop growth.
    """

    n: int
    tape: InstructionTape
    n_instructions: int


@dataclass(frozen=True)
class BenchRecord:
    """One timing row; ``speedup`` is derived from the two time columns."""

    n_instructions: int
    batch_size: int
    n_threads: int
    t_serial_total: float
    t_batch: float
    repetitions: int

    def __post_init__(self):
        if not (self.t_serial_total > 0 and self.t_batch > 0):
            raise ValueError("timings must be positive")

    @property
    def speedup(self) -> float:
        return self.t_serial_total / self.t_batch


def _lower_index(n: int):
    """Row-major lower-triangle packing order: (0,0), (1,0), (1,1), ..."""
    index = {}
    for i in range(n):
        for j in range(i + 1):
            index[(i, j)] = len(index)
    return index


def gen_ldlt_case(n: int) -> BenchCase:
    """Symbolic dense SPD solve ``(A_nonzeros, b) -> x`` flattened to a tape.

    ``A_nonzeros`` holds the row-major lower triangle (n(n+1)/2 values);
    the mirrored upper entries reuse the same graph nodes, so the factored
    matrix is symmetric by construction.
    """
    if n < 2:
        raise ValueError(f"system size must be >= 2, got {n}")
    packed = sym("A_low", n * (n + 1) // 2)
    rhs = sym("b", n)
    index = _lower_index(n)
    rows = [
        horzcat([packed[index[(i, j)] if j <= i else index[(j, i)]] for j in range(n)])
        for i in range(n)
    ]
    x = ldlt_solve(vertcat(rows), rhs)
    tape = flatten(SymbolicFunction(f"ldlt_solve_{n}", [packed, rhs], [x]))
    code, _ = tape.packed()
    arith = int(sum(1 for op in code[:, 0] if int(op) not in _PLUMBING_OPS))
    return BenchCase(n=n, tape=tape, n_instructions=arith)


def default_cases() -> list[BenchCase]:
    return [gen_ldlt_case(n) for n in DEFAULT_SIZES]


def case_inputs(case: BenchCase, rng: np.random.Generator) -> list[np.ndarray]:
    """Random well-conditioned SPD inputs for one instance of ``case``."""
    n = case.n
    m = rng.normal(size=(n, n))
    spd = m @ m.T + n * np.eye(n)
    return [spd[np.tril_indices(n)], rng.normal(size=n)]


def _median_call_time(fn, repetitions: int) -> float:
    """Median per-call seconds; loops fast calls until the timer resolves."""
    floor = time.get_clock_info("perf_counter").resolution * _MIN_TIMER_TICKS
    inner = 1
    while True:
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        elapsed = time.perf_counter() - start
        if elapsed >= floor:
            break
        if inner >= _MAX_INNER_CALLS:
            raise RuntimeError(
                f"timer resolution insufficient: {inner} calls span {elapsed:.3e}s "
                f"< {floor:.3e}s"
            )
        inner *= 10
    samples = [elapsed / inner]
    for _ in range(repetitions - 1):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - start) / inner)
    return statistics.median(samples)


def run_benchmark(
    cases,
    batch_sizes,
    n_threads: int | None = None,
    repetitions: int = MIN_REPETITIONS,
    rng_seed: int = 0,
) -> list[BenchRecord]:
    """Time every (case, batch size) pair; two warm-up calls precede timing.

    The serial baseline is a single-instance evaluation on one thread; its
    median time scales by the batch size to give ``t_serial_total``.
    """
    cases = list(cases)
    batch_sizes = [int(b) for b in batch_sizes]
    if not cases or not batch_sizes:
        raise ValueError("need at least one case and one batch size")
    if any(b < 1 for b in batch_sizes):
        raise ValueError("batch sizes must be >= 1")
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"repetitions must be >= {MIN_REPETITIONS}, got {repetitions}")
    n_threads = default_thread_count() if n_threads is None else int(n_threads)
    rng = np.random.default_rng(rng_seed)

    records: list[BenchRecord] = []
    for case in cases:
        inputs = case_inputs(case, rng)
        for _ in range(WARMUP_CALLS):
            serial_eval(case.tape, inputs)
        t_serial = _median_call_time(lambda: serial_eval(case.tape, inputs), repetitions)
        for batch in batch_sizes:
            ws = BatchWorkspace(case.tape, batch)
            ws.set_input(0, np.tile(inputs[0], (batch, 1)))
            ws.set_input(1, np.tile(inputs[1], (batch, 1)))
            for _ in range(WARMUP_CALLS):
                batch_eval(case.tape, ws, n_threads=n_threads)
            t_batch = _median_call_time(
                lambda: batch_eval(case.tape, ws, n_threads=n_threads), repetitions
            )
            records.append(
                BenchRecord(
                    n_instructions=case.n_instructions,
                    batch_size=batch,
                    n_threads=n_threads,
                    t_serial_total=batch * t_serial,
                    t_batch=t_batch,
                    repetitions=repetitions,
                )
            )
    return records


CSV_HEADER = ("n_instructions", "batch_size", "n_threads", "t_serial_total", "t_batch", "speedup")


def write_bench_csv(path, records) -> None:
    """Write records under the fixed six-column header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.n_instructions,
                    rec.batch_size,
                    rec.n_threads,
                    repr(rec.t_serial_total),
                    repr(rec.t_batch),
                    repr(rec.speedup),
                ]
            )
