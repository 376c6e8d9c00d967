"""Flatten expression graphs into linear instruction tapes.

A tape is the portable, data-only form of a function: a list of fixed-width
instructions over a dense work buffer of ``n_w`` scalar slots.  Work slots
are recycled with a linear-scan liveness allocator, so ``n_w`` is usually far
smaller than the node count.  Tapes serialize to a versioned, line-oriented
JSON text (one instruction per line) and are validated on construction:
every index is bounds-checked and every work slot is written before read.

Instruction field conventions (fixed record ``[op, out, in0, in1, in2, value]``,
unused fields hold the sentinel -1):

======== ======================= =========================================
opcode   out                     in0 / in1 / in2
======== ======================= =========================================
CONST    destination work slot   -- / -- / --           (value = constant)
INPUT    destination work slot   input index / nonzero offset / --
OUTPUT   output index            source work slot / nonzero offset / --
others   destination work slot   operand work slots, arity-many
======== ======================= =========================================
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .symcore import OpCode, Sparsity, SymbolicFunction, arity, topo_order

__all__ = [
    "FORMAT_VERSION",
    "Instruction",
    "InstructionTape",
    "flatten",
    "serialize",
    "deserialize",
    "save",
    "load",
]

FORMAT_VERSION = 1

_SENTINEL = -1

# ops that write a work slot and read arity-many work slots
_WORK_OPS = frozenset(
    op for op in OpCode if op not in (OpCode.CONST, OpCode.INPUT, OpCode.OUTPUT)
)


@dataclass(frozen=True)
class Instruction:
    """One fixed-width tape row."""

    op: OpCode
    out: int
    in0: int
    in1: int
    in2: int
    value: float

    def __str__(self) -> str:
        return (
            f"{self.op.name} out={self.out} in=({self.in0},{self.in1},{self.in2})"
            + (f" value={self.value!r}" if self.op == OpCode.CONST else "")
        )


class _TapeError(ValueError):
    pass


def _err(i: int, msg: str) -> _TapeError:
    return _TapeError(f"instruction {i}: {msg}")


class InstructionTape:
    """A validated linear program over a dense work buffer.

    Rows are stored packed (int32 code, float64 values) so million-row tapes
    stay cheap; ``instructions`` materializes dataclass rows on demand.
    """

    __slots__ = (
        "name",
        "format_version",
        "n_w",
        "input_sparsity",
        "output_sparsity",
        "_code",
        "_values",
        "_rows_cache",
        "_meta_cache",
    )

    def __init__(
        self,
        name: str,
        code: np.ndarray,
        values: np.ndarray,
        n_w: int,
        input_sparsity: list[Sparsity],
        output_sparsity: list[Sparsity],
    ):
        if not name.isidentifier():
            raise ValueError(f"tape name {name!r} is not a valid identifier")
        code = np.ascontiguousarray(np.asarray(code, dtype=np.int32).reshape(-1, 5))
        values = np.ascontiguousarray(np.asarray(values, dtype=np.float64).ravel())
        if values.shape[0] != code.shape[0]:
            raise ValueError("code and value arrays disagree on instruction count")
        self.name = name
        self.format_version = FORMAT_VERSION
        self.n_w = int(n_w)
        self.input_sparsity = list(input_sparsity)
        self.output_sparsity = list(output_sparsity)
        self._code = code
        self._values = values
        self._rows_cache = None
        self._meta_cache = None
        self._validate()

    # -- metadata --

    @property
    def n_instructions(self) -> int:
        return self._code.shape[0]

    @property
    def nnz_in(self) -> list[int]:
        return [sp.nnz for sp in self.input_sparsity]

    @property
    def nnz_out(self) -> list[int]:
        return [sp.nnz for sp in self.output_sparsity]

    @property
    def n_in(self) -> int:
        return len(self.input_sparsity)

    @property
    def n_out(self) -> int:
        return len(self.output_sparsity)

    @property
    def instructions(self) -> tuple[Instruction, ...]:
        if self._rows_cache is None:
            rows = []
            for i in range(self.n_instructions):
                op, out, in0, in1, in2 = (int(v) for v in self._code[i])
                rows.append(
                    Instruction(OpCode(op), out, in0, in1, in2, float(self._values[i]))
                )
            self._rows_cache = tuple(rows)
        return self._rows_cache

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """(int32 code rows, float64 const values) — read-only views."""
        return self._code, self._values

    def __repr__(self) -> str:
        return (
            f"InstructionTape({self.name!r}, {self.n_instructions} instructions, "
            f"n_w={self.n_w}, nnz_in={self.nnz_in}, nnz_out={self.nnz_out})"
        )

    # -- validation --

    def _validate(self) -> None:
        code = self._code
        n = code.shape[0]
        if self.n_w < 0:
            raise ValueError("n_w must be nonnegative")
        nnz_in = np.array(self.nnz_in or [0], dtype=np.int64)
        nnz_out = np.array(self.nnz_out or [0], dtype=np.int64)
        ops = code[:, 0]
        known = np.isin(ops, [int(o) for o in OpCode])
        if not known.all():
            i = int(np.argmin(known))
            raise _err(i, f"unknown opcode {int(ops[i])}")

        out, in0, in1, in2 = (code[:, k].astype(np.int64) for k in (1, 2, 3, 4))
        is_const = ops == int(OpCode.CONST)
        is_input = ops == int(OpCode.INPUT)
        is_output = ops == int(OpCode.OUTPUT)
        is_work = ~(is_const | is_input | is_output)
        arity_of = np.zeros(n, dtype=np.int64)
        for op in _WORK_OPS:
            arity_of[ops == int(op)] = arity(op)

        def first_bad(mask: np.ndarray, msg: str) -> None:
            if mask.any():
                i = int(np.argmax(mask))
                raise _err(i, msg.format(i=i, op=OpCode(int(ops[i])).name))

        # destination / source slot ranges
        first_bad(
            (is_const | is_input | is_work) & ((out < 0) | (out >= self.n_w)),
            "work index out of range (n_w=%d)" % self.n_w,
        )
        first_bad(
            is_output & ((out < 0) | (out >= max(self.n_out, 1)) | (self.n_out == 0)),
            "output index out of range (%d outputs)" % self.n_out,
        )
        first_bad(
            is_input & ((in0 < 0) | (in0 >= max(self.n_in, 1)) | (self.n_in == 0)),
            "input index out of range (%d inputs)" % self.n_in,
        )
        safe_in0 = np.clip(in0, 0, max(self.n_in - 1, 0))
        first_bad(
            is_input & ((in1 < 0) | (in1 >= nnz_in[safe_in0])),
            "nonzero offset out of range for input",
        )
        safe_out = np.clip(out, 0, max(self.n_out - 1, 0))
        first_bad(
            is_output & ((in1 < 0) | (in1 >= nnz_out[safe_out])),
            "nonzero offset out of range for output",
        )
        first_bad(
            is_output & ((in0 < 0) | (in0 >= self.n_w)),
            "work index out of range (n_w=%d)" % self.n_w,
        )

        # arity-consistent operand fields and -1 sentinels
        operands = np.stack([in0, in1, in2], axis=1)
        for k in range(3):
            used = is_work & (arity_of > k)
            first_bad(
                used & ((operands[:, k] < 0) | (operands[:, k] >= self.n_w)),
                "work index out of range (n_w=%d)" % self.n_w,
            )
            unused = is_work & (arity_of <= k)
            first_bad(unused & (operands[:, k] != _SENTINEL), "expected -1 sentinel in unused field")
        first_bad(is_const & (operands != _SENTINEL).any(axis=1), "expected -1 sentinels for CONST")
        first_bad(is_input & (in2 != _SENTINEL), "expected -1 sentinel in unused field")
        first_bad(is_output & (in2 != _SENTINEL), "expected -1 sentinel in unused field")

        # write-before-read over work slots
        pos = np.arange(n, dtype=np.int64)
        writers = ~is_output
        first_write = np.full(self.n_w if self.n_w else 1, n, dtype=np.int64)
        np.minimum.at(first_write, out[writers], pos[writers])
        read_pos: list[np.ndarray] = []
        read_slot: list[np.ndarray] = []
        for k in range(3):
            m = is_work & (arity_of > k)
            read_pos.append(pos[m])
            read_slot.append(operands[m, k])
        read_pos.append(pos[is_output])
        read_slot.append(in0[is_output])
        rp = np.concatenate(read_pos)
        rs = np.concatenate(read_slot)
        bad = first_write[rs] >= rp
        if bad.any():
            i = int(rp[bad].min())
            raise _err(i, "work slot read before any write")

    # -- reference single-element execution (debug aid; batchrt is the fast path)

    def trace(self, input_values: list[np.ndarray]) -> list[np.ndarray]:
        from .symcore import eval_op

        if len(input_values) != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {len(input_values)}")
        ins = [np.asarray(v, dtype=float).ravel() for v in input_values]
        for v, sp in zip(ins, self.input_sparsity):
            if v.size != sp.nnz:
                raise ValueError("input nonzero count mismatch")
        work = np.zeros(self.n_w)
        outs = [np.zeros(sp.nnz) for sp in self.output_sparsity]
        for i in range(self.n_instructions):
            op, out, in0, in1, in2 = (int(v) for v in self._code[i])
            op = OpCode(op)
            if op == OpCode.CONST:
                work[out] = self._values[i]
            elif op == OpCode.INPUT:
                work[out] = ins[in0][in1]
            elif op == OpCode.OUTPUT:
                outs[out][in1] = work[in0]
            else:
                args = [work[j] for j in (in0, in1, in2)[: arity(op)]]
                work[out] = eval_op(op, args)
        return outs


# ---------------------------------------------------------------------------
# flattening
# ---------------------------------------------------------------------------


def flatten(f: SymbolicFunction) -> InstructionTape:
    """Linearize a function: one instruction per reachable node plus one
    OUTPUT store per stored output nonzero. Work slots are reused as soon as
    their node's last reader has executed; the destination prefers the first
    operand slot released by the current instruction (in-place style)."""
    order = topo_order(list(f.outputs))
    stores: list[tuple[int, int, object]] = []
    for oi, m in enumerate(f.outputs):
        for k, node in enumerate(m.nodes):
            stores.append((oi, k, node))

    n_nodes = len(order)
    last_use: dict[int, int] = {}
    for pos, node in enumerate(order):
        for a in node.args:
            last_use[id(a)] = pos
    for spos, (_, _, node) in enumerate(stores):
        last_use[id(node)] = n_nodes + spos

    input_index = {id(s): i for i, s in enumerate(f.input_symbols)}

    slot_of: dict[int, int] = {}
    free: list[int] = []
    n_w = 0
    rows: list[tuple[int, int, int, int, int, float]] = []

    for pos, node in enumerate(order):
        # release operand slots whose last reader is this instruction
        released: list[int] = []
        for a in dict.fromkeys(node.args):
            if last_use.get(id(a)) == pos:
                released.append(slot_of[id(a)])
        if released:
            dest = released[0]
            for s in released[1:]:
                heapq.heappush(free, s)
        elif free:
            dest = heapq.heappop(free)
        else:
            dest = n_w
            n_w += 1
        slot_of[id(node)] = dest

        if node.op == OpCode.CONST:
            rows.append((int(OpCode.CONST), dest, -1, -1, -1, node.value))
        elif node.op == OpCode.INPUT:
            symbol, k = node.slot
            idx = input_index.get(id(symbol))
            if idx is None:  # unreachable for validated SymbolicFunction
                raise ValueError(f"graph references undeclared input {symbol.name!r}")
            rows.append((int(OpCode.INPUT), dest, idx, k, -1, 0.0))
        else:
            ops = [slot_of[id(a)] for a in node.args]
            while len(ops) < 3:
                ops.append(-1)
            rows.append((int(node.op), dest, ops[0], ops[1], ops[2], 0.0))

    for spos, (oi, k, node) in enumerate(stores):
        rows.append((int(OpCode.OUTPUT), oi, slot_of[id(node)], k, -1, 0.0))
        # (released slots after stores don't matter; the tape is complete)

    code = np.array([r[:5] for r in rows], dtype=np.int32).reshape(-1, 5)
    values = np.array([r[5] for r in rows], dtype=np.float64)
    return InstructionTape(
        f.name,
        code,
        values,
        n_w,
        [m.sparsity for m in f.inputs],
        [m.sparsity for m in f.outputs],
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _sparsity_to_obj(sp: Sparsity) -> dict:
    return {
        "rows": sp.rows,
        "cols": sp.cols,
        "colptr": list(sp.colptr),
        "rowidx": list(sp.rowidx),
    }


def _sparsity_from_obj(obj: dict, what: str) -> Sparsity:
    try:
        return Sparsity(obj["rows"], obj["cols"], obj["colptr"], obj["rowidx"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"malformed {what} sparsity: {e}") from None


def serialize(t: InstructionTape) -> str:
    """Versioned, deterministic, line-oriented JSON text (one row per line)."""
    head = [
        '{',
        '"format": "vecsym-tape",',
        f'"format_version": {t.format_version},',
        f'"name": {json.dumps(t.name)},',
        f'"n_w": {t.n_w},',
        f'"n_instructions": {t.n_instructions},',
        f'"input_sparsity": {json.dumps([_sparsity_to_obj(s) for s in t.input_sparsity])},',
        f'"output_sparsity": {json.dumps([_sparsity_to_obj(s) for s in t.output_sparsity])},',
        '"columns": ["op", "out", "in0", "in1", "in2", "value"],',
        '"instructions": [',
    ]
    code, values = t.packed()
    nrows = code.shape[0]
    lines = []
    for i in range(nrows):
        op, out, in0, in1, in2 = (int(v) for v in code[i])
        val = float(values[i])
        row = f'["{OpCode(op).name}", {out}, {in0}, {in1}, {in2}, {json.dumps(val)}]'
        lines.append(row + ("," if i + 1 < nrows else ""))
    return "\n".join(head + lines + ["]", "}"]) + "\n"


def deserialize(text: str) -> InstructionTape:
    """Parse and validate tape text; diagnostics name the offending row."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"not a tape file: invalid JSON ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != "vecsym-tape":
        raise ValueError("not a tape file: missing 'vecsym-tape' format marker")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"unsupported tape format_version {version!r} (this build reads {FORMAT_VERSION})"
        )
    for key in ("name", "n_w", "n_instructions", "input_sparsity", "output_sparsity", "instructions"):
        if key not in doc:
            raise ValueError(f"not a tape file: missing field {key!r}")
    in_sp = [_sparsity_from_obj(o, f"input {i}") for i, o in enumerate(doc["input_sparsity"])]
    out_sp = [_sparsity_from_obj(o, f"output {i}") for i, o in enumerate(doc["output_sparsity"])]
    raw = doc["instructions"]
    if not isinstance(raw, list):
        raise ValueError("instructions must be a list")
    if len(raw) != doc["n_instructions"]:
        raise ValueError(
            f"n_instructions is {doc['n_instructions']} but {len(raw)} rows are present"
        )
    by_name = {op.name: int(op) for op in OpCode}
    code = np.empty((len(raw), 5), dtype=np.int32)
    values = np.zeros(len(raw), dtype=np.float64)
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != 6:
            raise _err(i, "expected a 6-field row [op, out, in0, in1, in2, value]")
        opname = row[0]
        opnum = by_name.get(opname)
        if opnum is None:
            raise _err(i, f"unknown opcode {opname!r}")
        for k in range(1, 5):
            if not isinstance(row[k], int):
                raise _err(i, f"index field {k} must be an integer, got {row[k]!r}")
        if not isinstance(row[5], (int, float)):
            raise _err(i, f"value field must be a number, got {row[5]!r}")
        code[i] = (opnum, row[1], row[2], row[3], row[4])
        values[i] = float(row[5])
    name = doc["name"]
    if not isinstance(name, str):
        raise ValueError("tape name must be a string")
    return InstructionTape(name, code, values, int(doc["n_w"]), in_sp, out_sp)


def save(t: InstructionTape, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(t))


def load(path) -> InstructionTape:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize(fh.read())
