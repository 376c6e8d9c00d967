"""Batched tape execution: many independent instances in lock step.

``serial_eval`` runs one instance and defines ground truth; ``batch_eval``
runs every element of a :class:`BatchWorkspace` through the same instruction
stream and is bit-identical to per-element ``serial_eval`` by construction
(both paths execute the same compiled interpreter).  The batch dimension is
partitioned into contiguous chunks, one worker thread per chunk; elements
never read or write each other's state, so results are independent of the
chunking.

All buffers live in ordinary process memory; nothing in the hot path copies
or converts batches.
"""

from __future__ import annotations

import os
import threading

import numpy as np

from ._kernels import run_range
from .tape import InstructionTape

__all__ = [
    "BatchWorkspace",
    "serial_eval",
    "batch_eval",
    "default_thread_count",
]


def default_thread_count() -> int:
    """Worker count used when ``batch_eval`` is not given one explicitly.

    The environment variable ``VECSYM_THREADS`` overrides the detected CPU
    count.
    """
    env = os.environ.get("VECSYM_THREADS")
    if env is not None and env.strip():
        try:
            n = int(env)
        except ValueError:
            raise ValueError(
                f"VECSYM_THREADS must be a positive integer, got {env!r}"
            ) from None
        if n < 1:
            raise ValueError(f"VECSYM_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _int_vec(xs) -> np.ndarray:
    return np.asarray(list(xs), dtype=np.int64)


def _offsets(nnz: np.ndarray, batch_size: int) -> np.ndarray:
    off = np.zeros(nnz.size + 1, dtype=np.int64)
    np.cumsum(nnz * batch_size, out=off[1:])
    return off


def _tape_meta(tape: InstructionTape):
    """Cached (nnz_in, unit in_off, nnz_out, unit out_off) int64 arrays.

    Stashed on the tape (it is immutable) so repeated evaluations skip the
    metadata rebuild.
    """
    meta = tape._meta_cache
    if meta is None:
        nnz_in = _int_vec(tape.nnz_in)
        nnz_out = _int_vec(tape.nnz_out)
        meta = (nnz_in, _offsets(nnz_in, 1), nnz_out, _offsets(nnz_out, 1))
        tape._meta_cache = meta
    return meta


class BatchWorkspace:
    """Preallocated env-major buffers for one (tape, batch size) pairing.

    ``inputs[i]`` and ``outputs[j]`` are flat contiguous arrays of length
    ``batch_size * nnz`` holding element ``e``'s ``k``-th stored nonzero at
    ``e * nnz + k``; ``work`` has length ``batch_size * n_w`` with element
    ``e`` owning the slice ``[e*n_w, (e+1)*n_w)``.  The layout matches the
    emitted kernel source, so the same buffers serve either runtime.  Input,
    work, and output storage never alias.  A workspace must not be shared by
    concurrent ``batch_eval`` calls.
    """

    __slots__ = (
        "batch_size",
        "inputs",
        "work",
        "outputs",
        "_in_buf",
        "_out_buf",
        "_in_off",
        "_out_off",
        "_nnz_in",
        "_nnz_out",
        "_n_w",
        "_tape_name",
    )

    def __init__(self, tape: InstructionTape, batch_size: int):
        batch_size = int(batch_size)
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.batch_size = batch_size
        self._n_w = tape.n_w
        self._nnz_in = tuple(tape.nnz_in)
        self._nnz_out = tuple(tape.nnz_out)
        self._tape_name = tape.name
        self._in_off = _offsets(_int_vec(self._nnz_in), batch_size)
        self._out_off = _offsets(_int_vec(self._nnz_out), batch_size)
        self._in_buf = np.zeros(int(self._in_off[-1]), dtype=np.float64)
        self._out_buf = np.zeros(int(self._out_off[-1]), dtype=np.float64)
        self.work = np.zeros(batch_size * tape.n_w, dtype=np.float64)
        self.inputs = [
            self._in_buf[int(self._in_off[i]) : int(self._in_off[i + 1])]
            for i in range(len(self._nnz_in))
        ]
        self.outputs = [
            self._out_buf[int(self._out_off[j]) : int(self._out_off[j + 1])]
            for j in range(len(self._nnz_out))
        ]

    # -- convenience views / fills --

    def input_matrix(self, i: int) -> np.ndarray:
        """Writable (batch_size, nnz_in[i]) view of input ``i``."""
        return self.inputs[i].reshape(self.batch_size, self._nnz_in[i])

    def output_matrix(self, j: int) -> np.ndarray:
        """(batch_size, nnz_out[j]) view of output ``j``."""
        return self.outputs[j].reshape(self.batch_size, self._nnz_out[j])

    def set_input(self, i: int, values) -> None:
        """Fill input ``i`` for all elements.

        Accepts one instance's nonzeros (broadcast to the whole batch) or a
        (batch_size, nnz) array of per-element values.
        """
        v = np.asarray(values, dtype=np.float64)
        nnz = self._nnz_in[i]
        if v.ndim <= 1:
            if v.size != nnz:
                raise ValueError(f"input {i}: expected {nnz} values, got {v.size}")
            self.input_matrix(i)[:, :] = v.ravel()
        else:
            if v.shape != (self.batch_size, nnz):
                raise ValueError(
                    f"input {i}: expected shape ({self.batch_size}, {nnz}), got {v.shape}"
                )
            self.input_matrix(i)[:, :] = v

    def matches(self, tape: InstructionTape) -> bool:
        """True when this workspace's buffer geometry matches ``tape``."""
        return (
            self._n_w == tape.n_w
            and self._nnz_in == tuple(tape.nnz_in)
            and self._nnz_out == tuple(tape.nnz_out)
        )

    def __repr__(self) -> str:
        return (
            f"BatchWorkspace(batch_size={self.batch_size}, n_w={self._n_w}, "
            f"nnz_in={list(self._nnz_in)}, nnz_out={list(self._nnz_out)})"
        )


def serial_eval(tape: InstructionTape, input_values) -> list[np.ndarray]:
    """Evaluate one instance; the reference semantics for all batched paths."""
    ins = [np.ascontiguousarray(v, dtype=np.float64).ravel() for v in input_values]
    if len(ins) != tape.n_in:
        raise ValueError(f"expected {tape.n_in} inputs, got {len(ins)}")
    nnz_in, in_off, nnz_out, out_off = _tape_meta(tape)
    for k, (v, nz) in enumerate(zip(ins, tape.nnz_in)):
        if v.size != nz:
            raise ValueError(f"input {k}: expected {nz} values, got {v.size}")
    in_buf = np.concatenate(ins) if ins else np.zeros(0, dtype=np.float64)
    out_buf = np.zeros(int(out_off[-1]), dtype=np.float64)
    work = np.zeros(tape.n_w, dtype=np.float64)
    code, values = tape.packed()
    run_range(code, values, tape.n_w, in_buf, in_off, nnz_in, out_buf, out_off, nnz_out, work, 0, 1)
    return [out_buf[int(out_off[j]) : int(out_off[j + 1])] for j in range(tape.n_out)]


def _chunk_bounds(batch_size: int, n_workers: int) -> list[tuple[int, int]]:
    bounds = [batch_size * k // n_workers for k in range(n_workers + 1)]
    return [(bounds[k], bounds[k + 1]) for k in range(n_workers) if bounds[k] < bounds[k + 1]]


def batch_eval(
    tape: InstructionTape,
    ws: BatchWorkspace,
    n_threads: int | None = None,
) -> list[np.ndarray]:
    """Evaluate every batch element of ``ws`` through ``tape``.

    Each element's outputs are bit-identical to ``serial_eval`` on that
    element's inputs for any thread count.  Returns ``ws.outputs``.
    """
    if not ws.matches(tape):
        raise ValueError(
            f"workspace/tape mismatch: workspace is laid out for n_w={ws._n_w}, "
            f"nnz_in={list(ws._nnz_in)}, nnz_out={list(ws._nnz_out)} but tape "
            f"{tape.name!r} needs n_w={tape.n_w}, nnz_in={tape.nnz_in}, "
            f"nnz_out={tape.nnz_out}"
        )
    if n_threads is not None and n_threads < 1:
        raise ValueError(f"n_threads must be >= 1, got {n_threads}")
    n_workers = n_threads if n_threads is not None else default_thread_count()
    n_workers = min(n_workers, ws.batch_size)
    code, values = tape.packed()
    nnz_in, _, nnz_out, _ = _tape_meta(tape)
    args = (
        code,
        values,
        tape.n_w,
        ws._in_buf,
        ws._in_off,
        nnz_in,
        ws._out_buf,
        ws._out_off,
        nnz_out,
        ws.work,
    )
    chunks = _chunk_bounds(ws.batch_size, n_workers)
    if len(chunks) <= 1:
        run_range(*args, 0, ws.batch_size)
        return ws.outputs
    # the compiled kernel releases the GIL, so chunks genuinely overlap; the
    # calling thread takes the first chunk while workers take the rest
    threads = [
        threading.Thread(target=run_range, args=args + (lo, hi), daemon=True)
        for lo, hi in chunks[1:]
    ]
    for t in threads:
        t.start()
    run_range(*args, chunks[0][0], chunks[0][1])
    for t in threads:
        t.join()
    return ws.outputs
