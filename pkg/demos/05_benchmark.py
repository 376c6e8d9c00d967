"""
Measuring batched-evaluation throughput
=======================================

`vecsym.bench` generates symbolic LDL^T solve tapes of growing size — the
arithmetic grows cubically in the system dimension, so a handful of sizes
spans several decades of instruction count — and times serial evaluation
against lock-step batch evaluation.
"""

import csv
import tempfile
from pathlib import Path

from vecsym import bench
from vecsym.batchrt import default_thread_count

# Build solver tapes for a few system sizes. n_instructions counts only the
# arithmetic rows, not the input/output plumbing.
cases = [bench.gen_ldlt_case(n) for n in (2, 5, 12)]
for case in cases:
    print(
        f"n={case.n:2d}: {case.n_instructions:6d} arithmetic instructions "
        f"({case.tape.n_instructions} total rows)"
    )

# Each case is timed serially (one element at a time) and batched, with two
# warm-up calls and the median of five repetitions.
threads = default_thread_count()
print(f"\ntiming with {threads} worker thread(s)")
records = bench.run_benchmark(cases, batch_sizes=[1, 16, 256], n_threads=threads)

print(f"\n{'instr':>7} {'batch':>6} {'serial total':>13} {'batch total':>12} {'speedup':>8}")
for rec in records:
    print(
        f"{rec.n_instructions:7d} {rec.batch_size:6d} "
        f"{rec.t_serial_total:13.6f} {rec.t_batch:12.6f} {rec.speedup:8.2f}"
    )

# The records serialize to the benchmark CSV schema.
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "bench.csv"
    bench.write_bench_csv(out, records)
    rows = list(csv.reader(out.open()))
print(f"\nCSV: {len(rows) - 1} data rows, header: {','.join(rows[0])}")

# On a single-core host the batch path mostly demonstrates bookkeeping
# amortization; with more cores the same call spreads elements across
# threads. Either way the numbers come from the same bit-exact runtime the
# tests verify.
best = max(records, key=lambda r: r.speedup)
print(
    f"best observed: batch {best.batch_size} on the {best.n_instructions}-instruction "
    f"case, {best.speedup:.2f}x over one-at-a-time evaluation"
)
