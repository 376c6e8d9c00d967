"""Hash-consed scalar expression graphs with sparse matrix structure.

Everything downstream (tapes, kernels, solvers) is built from one node type:
an immutable scalar expression over a small closed set of atomic operations.
Structurally identical nodes are shared ("hash-consing"), so common
subexpressions are represented once and graph size is the true measure of
work.  Matrices are thin wrappers pairing a compressed-column sparsity
pattern with one scalar node per stored nonzero; structural zeros are never
materialized as nodes.

Scalar semantics are IEEE-total: division by zero yields +-inf, domain
errors yield nan, and min/max follow C's fmin/fmax (a nan operand loses).
The pure-Python evaluator here, the batch interpreter, and emitted C source
all implement the same semantics so results can be compared bit-for-bit.
"""

from __future__ import annotations

import enum
import keyword
import math
import struct
import weakref
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "OpCode",
    "arity",
    "eval_op",
    "Sparsity",
    "Expr",
    "Symbol",
    "MatrixExpr",
    "sym",
    "const",
    "constant",
    "apply",
    "matmul",
    "transpose",
    "vertcat",
    "horzcat",
    "diag",
    "dot",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "sq",
    "power",
    "atan2",
    "fabs",
    "fmin",
    "fmax",
    "step",
    "if_else",
    "topo_order",
    "node_count",
    "input_slots",
    "evaluate",
    "substitute",
    "jacobian",
    "hessian",
    "SymbolicFunction",
]


class OpCode(enum.IntEnum):
    """Atomic scalar operations. Integer values are the wire format."""

    CONST = 0
    INPUT = 1
    OUTPUT = 2
    ASSIGN = 3
    ADD = 4
    SUB = 5
    MUL = 6
    DIV = 7
    NEG = 8
    EXP = 9
    LOG = 10
    POW = 11
    SQRT = 12
    SQ = 13
    SIN = 14
    COS = 15
    TAN = 16
    ATAN2 = 17
    FABS = 18
    FMIN = 19
    FMAX = 20
    STEP = 21
    IF_ELSE = 22


_ARITY: dict[OpCode, int] = {
    OpCode.CONST: 0,
    OpCode.INPUT: 0,
    OpCode.OUTPUT: 1,
    OpCode.ASSIGN: 1,
    OpCode.ADD: 2,
    OpCode.SUB: 2,
    OpCode.MUL: 2,
    OpCode.DIV: 2,
    OpCode.NEG: 1,
    OpCode.EXP: 1,
    OpCode.LOG: 1,
    OpCode.POW: 2,
    OpCode.SQRT: 1,
    OpCode.SQ: 1,
    OpCode.SIN: 1,
    OpCode.COS: 1,
    OpCode.TAN: 1,
    OpCode.ATAN2: 2,
    OpCode.FABS: 1,
    OpCode.FMIN: 2,
    OpCode.FMAX: 2,
    OpCode.STEP: 1,
    OpCode.IF_ELSE: 3,
}


def arity(op: OpCode) -> int:
    """Number of operands consumed by ``op``."""
    return _ARITY[OpCode(op)]


# ---------------------------------------------------------------------------
# IEEE-total scalar semantics
# ---------------------------------------------------------------------------
#
# CPython's float/math layer raises where C99 libm returns a special value;
# these wrappers translate to the C behaviour so the Python evaluator agrees
# *bitwise* with the compiled interpreter. Invalid operations produce the
# x86 "indefinite" quiet NaN (sign bit set); NaN operands pass through.

_INF = float("inf")
_NAN = float("nan")
_NAN_INDEF = struct.unpack("<d", bytes.fromhex("000000000000f8ff"))[0]  # -nan


def _div(a: float, b: float) -> float:
    if a != a and b != b:
        return a  # both NaN: compiled code keeps the first operand's payload
    try:
        return a / b
    except ZeroDivisionError:
        if a != a:
            return a
        if a == 0.0:
            return _NAN_INDEF
        return _INF if (a > 0.0) == (math.copysign(1.0, b) > 0.0) else -_INF


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        return _INF


def _log(a: float) -> float:
    if a > 0.0:
        return math.log(a)
    if a == 0.0:
        return -_INF
    if a != a:
        return a
    return _NAN


def _is_odd_integer(b: float) -> bool:
    return math.isfinite(b) and b == int(b) and int(b) % 2 != 0


def _pow(a: float, b: float) -> float:
    if a != a:
        if b == 0.0:
            return 1.0
        if b == b and _is_odd_integer(b):
            return _NAN  # compiled pow drops the NaN sign on odd-integer exponents
        return a
    if b != b:
        return 1.0 if a == 1.0 else b
    try:
        return math.pow(a, b)
    except OverflowError:
        # finite overflow: sign follows a negative base raised to an odd integer
        return -_INF if (a < 0.0 and _is_odd_integer(b)) else _INF
    except ValueError:
        if a == 0.0:  # 0^negative: divide-by-zero style infinity
            if _is_odd_integer(b) and math.copysign(1.0, a) < 0.0:
                return -_INF
            return _INF
        return _NAN_INDEF  # negative base, non-integer exponent


def _sqrt(a: float) -> float:
    if a > 0.0 or a == 0.0:  # includes sqrt(-0.0) == -0.0
        return math.sqrt(a)
    if a != a:
        return a
    return _NAN_INDEF


def _trig(fn: Callable[[float], float], a: float) -> float:
    try:
        return fn(a)
    except ValueError:  # fn(+-inf) in CPython; hardware yields indefinite NaN
        return _NAN_INDEF


def _atan2(a: float, b: float) -> float:
    if b != b:
        return b  # compiled atan2 propagates the second operand's NaN first
    if a != a:
        return a
    return math.atan2(a, b)


def _fmin(a: float, b: float) -> float:
    if a != a:
        return b
    if b != b:
        return a
    return a if a <= b else b


def _fmax(a: float, b: float) -> float:
    if a != a:
        return b
    if b != b:
        return a
    return a if a >= b else b


def eval_op(op: OpCode, args: Sequence[float], value: float = 0.0) -> float:
    """Evaluate one atomic operation on Python floats (IEEE-total)."""
    if op == OpCode.CONST:
        return value
    if op == OpCode.ADD:
        a, b = args[0], args[1]
        return a if (a != a and b != b) else a + b
    if op == OpCode.SUB:
        a, b = args[0], args[1]
        return a if (a != a and b != b) else a - b
    if op == OpCode.MUL:
        a, b = args[0], args[1]
        return a if (a != a and b != b) else a * b
    if op == OpCode.DIV:
        return _div(args[0], args[1])
    if op == OpCode.NEG:
        return -args[0]
    if op == OpCode.EXP:
        return _exp(args[0])
    if op == OpCode.LOG:
        return _log(args[0])
    if op == OpCode.POW:
        return _pow(args[0], args[1])
    if op == OpCode.SQRT:
        return _sqrt(args[0])
    if op == OpCode.SQ:
        return args[0] * args[0]
    if op == OpCode.SIN:
        return _trig(math.sin, args[0])
    if op == OpCode.COS:
        return _trig(math.cos, args[0])
    if op == OpCode.TAN:
        return _trig(math.tan, args[0])
    if op == OpCode.ATAN2:
        return _atan2(args[0], args[1])
    if op == OpCode.FABS:
        return math.fabs(args[0])
    if op == OpCode.FMIN:
        return _fmin(args[0], args[1])
    if op == OpCode.FMAX:
        return _fmax(args[0], args[1])
    if op == OpCode.STEP:
        return 1.0 if args[0] > 0.0 else 0.0
    if op == OpCode.IF_ELSE:
        return args[1] if args[0] != 0.0 else args[2]
    if op in (OpCode.ASSIGN, OpCode.OUTPUT):
        return args[0]
    raise ValueError(f"cannot evaluate opcode {op!r}")


# ---------------------------------------------------------------------------
# Sparsity
# ---------------------------------------------------------------------------


class Sparsity:
    """Compressed-column sparsity pattern (immutable).

    Row indices are strictly increasing within each column; stored-nonzero
    ordinal k therefore enumerates entries in column-major order.
    """

    __slots__ = ("rows", "cols", "colptr", "rowidx", "_index")

    def __init__(self, rows: int, cols: int, colptr: Sequence[int], rowidx: Sequence[int]):
        rows = int(rows)
        cols = int(cols)
        colptr = tuple(int(p) for p in colptr)
        rowidx = tuple(int(r) for r in rowidx)
        if rows < 0 or cols < 0:
            raise ValueError("negative dimension")
        if len(colptr) != cols + 1 or colptr[0] != 0 or colptr[-1] != len(rowidx):
            raise ValueError("malformed column pointer")
        for c in range(cols):
            lo, hi = colptr[c], colptr[c + 1]
            if hi < lo:
                raise ValueError("column pointer not non-decreasing")
            prev = -1
            for r in rowidx[lo:hi]:
                if not 0 <= r < rows:
                    raise ValueError(f"row index {r} out of range for {rows} rows")
                if r <= prev:
                    raise ValueError("row indices must strictly increase within a column")
                prev = r
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "colptr", colptr)
        object.__setattr__(self, "rowidx", rowidx)
        object.__setattr__(
            self,
            "_index",
            {
                (rowidx[k], c): k
                for c in range(cols)
                for k in range(colptr[c], colptr[c + 1])
            },
        )

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Sparsity is immutable")

    # -- constructors --

    @staticmethod
    def dense(rows: int, cols: int) -> "Sparsity":
        colptr = [c * rows for c in range(cols + 1)]
        rowidx = [r for _ in range(cols) for r in range(rows)]
        return Sparsity(rows, cols, colptr, rowidx)

    @staticmethod
    def diagonal(n: int) -> "Sparsity":
        return Sparsity(n, n, list(range(n + 1)), list(range(n)))

    @staticmethod
    def empty(rows: int, cols: int) -> "Sparsity":
        return Sparsity(rows, cols, [0] * (cols + 1), [])

    @staticmethod
    def from_coords(rows: int, cols: int, coords: Iterable[tuple[int, int]]) -> "Sparsity":
        by_col: dict[int, set[int]] = {}
        for r, c in coords:
            if not (0 <= r < rows and 0 <= c < cols):
                raise ValueError(f"coordinate ({r}, {c}) out of range")
            by_col.setdefault(c, set()).add(r)
        colptr = [0]
        rowidx: list[int] = []
        for c in range(cols):
            for r in sorted(by_col.get(c, ())):
                rowidx.append(r)
            colptr.append(len(rowidx))
        return Sparsity(rows, cols, colptr, rowidx)

    # -- queries --

    @property
    def nnz(self) -> int:
        return len(self.rowidx)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def coords(self) -> list[tuple[int, int]]:
        """Stored coordinates in column-major (ordinal) order."""
        out = []
        for c in range(self.cols):
            for k in range(self.colptr[c], self.colptr[c + 1]):
                out.append((self.rowidx[k], c))
        return out

    def index_of(self, r: int, c: int) -> int:
        """Ordinal of stored entry (r, c), or -1 if structurally zero."""
        return self._index.get((r, c), -1)

    def is_dense(self) -> bool:
        return self.nnz == self.rows * self.cols

    def to_mask(self) -> np.ndarray:
        mask = np.zeros((self.rows, self.cols), dtype=bool)
        for r, c in self.coords():
            mask[r, c] = True
        return mask

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Sparsity)
            and self.rows == other.rows
            and self.cols == other.cols
            and self.colptr == other.colptr
            and self.rowidx == other.rowidx
        )

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.colptr, self.rowidx))

    def __repr__(self) -> str:
        kind = "dense" if self.is_dense() else f"{self.nnz} nnz"
        return f"Sparsity({self.rows}x{self.cols}, {kind})"


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------


class Symbol:
    """Identity of a named matrix input (leaf group)."""

    __slots__ = ("name", "sparsity", "__weakref__")

    def __init__(self, name: str, sparsity: Sparsity):
        if not name.isidentifier() or keyword.iskeyword(name):
            raise ValueError(f"symbol name {name!r} is not a valid identifier")
        self.name = name
        self.sparsity = sparsity

    def __repr__(self) -> str:
        return f"Symbol({self.name!r}, {self.sparsity.rows}x{self.sparsity.cols})"


class Expr:
    """One immutable scalar node. Use module factories, not the constructor."""

    __slots__ = ("op", "args", "value", "slot", "__weakref__")

    op: OpCode
    args: tuple["Expr", ...]
    value: float  # CONST payload (0.0 otherwise)
    slot: tuple[Symbol, int] | None  # (symbol, nonzero ordinal) for INPUT

    def __init__(self, op, args, value, slot):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "slot", slot)

    def __setattr__(self, name, val):  # pragma: no cover - immutability guard
        raise AttributeError("Expr is immutable")

    def is_const(self, v: float | None = None) -> bool:
        if self.op != OpCode.CONST:
            return False
        if v is None:
            return True
        return self.value == v and math.copysign(1.0, self.value) == math.copysign(1.0, v)

    def __repr__(self) -> str:
        if self.op == OpCode.CONST:
            return f"Expr(CONST {self.value!r})"
        if self.op == OpCode.INPUT:
            symref, k = self.slot
            return f"Expr(INPUT {symref.name}[{k}])"
        return f"Expr({self.op.name}/{len(self.args)})"


_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def _intern(key: tuple, make: Callable[[], Expr]) -> Expr:
    node = _INTERN.get(key)
    if node is None:
        node = make()
        _INTERN[key] = node
    return node


def const(v: float) -> Expr:
    """A CONST leaf. Distinguishes -0.0 from 0.0 and interns nan."""
    v = float(v)
    key = ("c", struct.pack("<d", v))
    return _intern(key, lambda: Expr(OpCode.CONST, (), v, None))


def _input_node(symbol: Symbol, k: int) -> Expr:
    key = ("i", id(symbol), k)
    return _intern(key, lambda: Expr(OpCode.INPUT, (), 0.0, (symbol, k)))


def apply_node(op: OpCode, *args: Expr) -> Expr:
    """Build (or reuse) one interior node; folds when all operands are CONST.

    No algebraic rewriting happens here: x + 0, x * 1 etc. are kept as built.
    """
    op = OpCode(op)
    if op in (OpCode.CONST, OpCode.INPUT):
        raise ValueError(f"{op.name} nodes are leaves; use const()/sym()")
    if op == OpCode.OUTPUT:
        raise ValueError("OUTPUT exists only at the instruction level")
    want = _ARITY[op]
    if len(args) != want:
        raise ValueError(f"{op.name} takes {want} operand(s), got {len(args)}")
    for a in args:
        if not isinstance(a, Expr):
            raise TypeError(f"operand must be Expr, got {type(a).__name__}")
    if all(a.op == OpCode.CONST for a in args):
        return const(eval_op(op, [a.value for a in args]))
    key = (int(op),) + tuple(id(a) for a in args)
    return _intern(key, lambda: Expr(op, tuple(args), 0.0, None))


# -- structural-zero-aware builder helpers (None == structural zero) --------
#
# Used by matrix algebra, AD, and substitution so that terms known to be zero
# by *structure* never become nodes, and exact literal 1.0/0.0 factors created
# by the builders themselves collapse.  These shortcuts look only at structure
# and exact constant bits, never at runtime data.


def _sz_neg(a: Expr | None) -> Expr | None:
    if a is None:
        return None
    if a.op == OpCode.CONST:
        return const(-a.value)
    return apply_node(OpCode.NEG, a)


def _sz_add(a: Expr | None, b: Expr | None) -> Expr | None:
    if a is None:
        return b
    if b is None:
        return a
    return apply_node(OpCode.ADD, a, b)


def _sz_sub(a: Expr | None, b: Expr | None) -> Expr | None:
    if b is None:
        return a
    if a is None:
        return _sz_neg(b)
    return apply_node(OpCode.SUB, a, b)


def _sz_mul(a: Expr | None, b: Expr | None) -> Expr | None:
    if a is None or b is None:
        return None
    if a.is_const(0.0) or b.is_const(0.0):
        return None
    if a.is_const(1.0):
        return b
    if b.is_const(1.0):
        return a
    return apply_node(OpCode.MUL, a, b)


def _sz_div(num: Expr | None, den: Expr | None) -> Expr | None:
    if num is None:
        return None
    if den is None:
        den = const(0.0)  # honest: structural zero denominator -> runtime inf
    if den.is_const(1.0):
        return num
    return apply_node(OpCode.DIV, num, den)


def _or_zero(a: Expr | None) -> Expr:
    return const(0.0) if a is None else a


# ---------------------------------------------------------------------------
# Matrix expressions
# ---------------------------------------------------------------------------

Grid = list  # list[list[Expr | None]]


class MatrixExpr:
    """A sparsity pattern plus one scalar node per stored nonzero."""

    __slots__ = ("sparsity", "nodes")

    def __init__(self, sparsity: Sparsity, nodes: Sequence[Expr]):
        if len(nodes) != sparsity.nnz:
            raise ValueError(
                f"{sparsity.nnz} stored entries but {len(nodes)} nodes supplied"
            )
        for n in nodes:
            if not isinstance(n, Expr):
                raise TypeError(f"matrix entries must be Expr, got {type(n).__name__}")
        object.__setattr__(self, "sparsity", sparsity)
        object.__setattr__(self, "nodes", tuple(nodes))

    def __setattr__(self, name, val):  # pragma: no cover - immutability guard
        raise AttributeError("MatrixExpr is immutable")

    # -- constructors --

    @staticmethod
    def from_grid(grid: Grid) -> "MatrixExpr":
        rows = len(grid)
        cols = len(grid[0]) if rows else 0
        coords = []
        nodes = []
        for c in range(cols):
            for r in range(rows):
                e = grid[r][c]
                if e is not None:
                    coords.append((r, c))
                    nodes.append(e)
        sp = Sparsity.from_coords(rows, cols, coords)
        return MatrixExpr(sp, nodes)

    @staticmethod
    def zeros(rows: int, cols: int = 1) -> "MatrixExpr":
        return MatrixExpr(Sparsity.empty(rows, cols), [])

    @staticmethod
    def eye(n: int) -> "MatrixExpr":
        return MatrixExpr(Sparsity.diagonal(n), [const(1.0)] * n)

    @staticmethod
    def from_values(values) -> "MatrixExpr":
        """Dense numeric array -> CONST matrix; exact zeros become structural."""
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ValueError("expected at most 2 dimensions")
        grid: Grid = [
            [None if arr[r, c] == 0.0 else const(arr[r, c]) for c in range(arr.shape[1])]
            for r in range(arr.shape[0])
        ]
        return MatrixExpr.from_grid(grid) if arr.size else MatrixExpr.zeros(*arr.shape)

    # -- queries --

    @property
    def shape(self) -> tuple[int, int]:
        return self.sparsity.shape

    @property
    def rows(self) -> int:
        return self.sparsity.rows

    @property
    def cols(self) -> int:
        return self.sparsity.cols

    @property
    def nnz(self) -> int:
        return self.sparsity.nnz

    def is_scalar(self) -> bool:
        return self.shape == (1, 1)

    def element(self, r: int, c: int = 0) -> Expr | None:
        k = self.sparsity.index_of(r, c)
        return None if k < 0 else self.nodes[k]

    def to_grid(self) -> Grid:
        grid: Grid = [[None] * self.cols for _ in range(self.rows)]
        for k, (r, c) in enumerate(self.sparsity.coords()):
            grid[r][c] = self.nodes[k]
        return grid

    def scalar(self) -> Expr:
        """The single entry of a 1x1 matrix (structural zero -> CONST 0)."""
        if not self.is_scalar():
            raise ValueError(f"expected 1x1, got {self.rows}x{self.cols}")
        return _or_zero(self.element(0, 0))

    def owner_symbol(self) -> Symbol:
        """The symbol this matrix is a pristine view of; error otherwise."""
        if self.nnz == 0:
            raise ValueError("empty matrix is not a symbol")
        symref = None
        for k, n in enumerate(self.nodes):
            if n.op != OpCode.INPUT or n.slot[1] != k:
                raise ValueError("matrix is not an unmodified input symbol")
            if symref is None:
                symref = n.slot[0]
            elif n.slot[0] is not symref:
                raise ValueError("matrix mixes entries of different symbols")
        if symref.sparsity != self.sparsity:
            raise ValueError("matrix is a reordered or sliced view of its symbol")
        return symref

    # -- operators --

    def __add__(self, other):
        return _ewise_linear(self, other, OpCode.ADD)

    def __radd__(self, other):
        return _ewise_linear(_coerce(other, like=self), self, OpCode.ADD)

    def __sub__(self, other):
        return _ewise_linear(self, other, OpCode.SUB)

    def __rsub__(self, other):
        return _ewise_linear(_coerce(other, like=self), self, OpCode.SUB)

    def __mul__(self, other):
        return _ewise_mul(self, other)

    def __rmul__(self, other):
        return _ewise_mul(self, other)

    def __truediv__(self, other):
        return _ewise_div(self, other)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __neg__(self):
        return MatrixExpr(self.sparsity, [apply_node(OpCode.NEG, n) for n in self.nodes])

    def __pow__(self, expo):
        e = const(float(expo))
        return MatrixExpr(
            self.sparsity, [apply_node(OpCode.POW, n, e) for n in self.nodes]
        )

    @property
    def T(self) -> "MatrixExpr":
        return transpose(self)

    def __getitem__(self, key) -> "MatrixExpr":
        if not isinstance(key, tuple):
            key = (key, slice(None)) if self.cols > 1 else (key, 0)
        ri, ci = key
        rsel = _axis_select(ri, self.rows)
        csel = _axis_select(ci, self.cols)
        grid = self.to_grid()
        sub: Grid = [[grid[r][c] for c in csel] for r in rsel]
        if not sub or not sub[0]:
            return MatrixExpr.zeros(len(rsel), len(csel))
        return MatrixExpr.from_grid(sub)

    def __repr__(self) -> str:
        return f"MatrixExpr({self.rows}x{self.cols}, nnz={self.nnz})"


def _axis_select(idx, n: int) -> list[int]:
    if isinstance(idx, slice):
        return list(range(*idx.indices(n)))
    if isinstance(idx, (list, tuple, np.ndarray)):
        return [int(i) for i in idx]
    i = int(idx)
    if i < 0:
        i += n
    if not 0 <= i < n:
        raise IndexError(f"index {idx} out of range for axis of length {n}")
    return [i]


def _coerce(x, like: MatrixExpr | None = None) -> MatrixExpr:
    if isinstance(x, MatrixExpr):
        return x
    if isinstance(x, Expr):
        return MatrixExpr(Sparsity.dense(1, 1), [x])
    if isinstance(x, (int, float, np.floating, np.integer)):
        return constant(float(x))
    if isinstance(x, np.ndarray):
        return MatrixExpr.from_values(x)
    raise TypeError(f"cannot interpret {type(x).__name__} as a matrix expression")


def constant(v: float) -> MatrixExpr:
    """1x1 constant matrix (stored even when zero, so it stays addressable)."""
    return MatrixExpr(Sparsity.dense(1, 1), [const(v)])


def sym(name: str, rows: int = 1, cols: int = 1, sparsity: Sparsity | None = None) -> MatrixExpr:
    """Declare a named matrix input; returns its nonzeros as INPUT nodes."""
    if sparsity is None:
        if rows < 1 or cols < 1:
            raise ValueError(f"symbol {name!r}: dimensions must be at least 1")
        sparsity = Sparsity.dense(rows, cols)
    else:
        if sparsity.rows < 1 or sparsity.cols < 1:
            raise ValueError(f"symbol {name!r}: dimensions must be at least 1")
    symbol = Symbol(name, sparsity)
    return MatrixExpr(sparsity, [_input_node(symbol, k) for k in range(sparsity.nnz)])


def apply(op: OpCode, *operands) -> MatrixExpr:
    """Elementwise primitive application (the raw scalar-op surface).

    Operands must share one sparsity pattern (scalars broadcast); no
    simplification besides all-constant folding.
    """
    op = OpCode(op)
    mats = [_coerce(x) for x in operands]
    if not mats:
        raise ValueError("apply needs at least one operand")
    return _ewise_apply(op, mats)


def _ewise_apply(op: OpCode, mats: list[MatrixExpr]) -> MatrixExpr:
    shapes = {m.shape for m in mats if not m.is_scalar()}
    if len(shapes) > 1:
        raise ValueError(f"elementwise {op.name}: mismatched shapes {sorted(shapes)}")
    if shapes:
        proto = next(m for m in mats if not m.is_scalar())
        pats = {m.sparsity for m in mats if not m.is_scalar()}
        if len(pats) > 1:
            raise ValueError(f"elementwise {op.name}: operands have different sparsity")
    else:
        proto = mats[0]
    nodes = []
    for k in range(proto.nnz):
        argnodes = [m.scalar() if m.is_scalar() and proto is not m else m.nodes[k] for m in mats]
        if proto.is_scalar():
            argnodes = [m.scalar() for m in mats]
        nodes.append(apply_node(op, *argnodes))
    return MatrixExpr(proto.sparsity, nodes)


def _ewise_linear(a: MatrixExpr, b, op: OpCode) -> MatrixExpr:
    """ADD/SUB with pattern union (structural zeros stay absent)."""
    a = _coerce(a)
    b = _coerce(b, like=a)
    if a.is_scalar() and not b.is_scalar():
        a = _broadcast_scalar(a, b.sparsity)
    if b.is_scalar() and not a.is_scalar():
        b = _broadcast_scalar(b, a.sparsity)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape} in {op.name}")
    ga, gb = a.to_grid(), b.to_grid()
    out: Grid = [
        [
            (_sz_add if op == OpCode.ADD else _sz_sub)(ga[r][c], gb[r][c])
            for c in range(a.cols)
        ]
        for r in range(a.rows)
    ]
    return MatrixExpr.from_grid(out) if a.rows and a.cols else MatrixExpr.zeros(*a.shape)


def _broadcast_scalar(s: MatrixExpr, pattern: Sparsity) -> MatrixExpr:
    node = s.scalar()
    return MatrixExpr(pattern, [node] * pattern.nnz)


def _ewise_mul(a: MatrixExpr, other) -> MatrixExpr:
    b = _coerce(other, like=a)
    if b.is_scalar() and not a.is_scalar():
        s = b.scalar()
        return MatrixExpr(a.sparsity, [apply_node(OpCode.MUL, n, s) for n in a.nodes])
    if a.is_scalar() and not b.is_scalar():
        s = a.scalar()
        return MatrixExpr(b.sparsity, [apply_node(OpCode.MUL, s, n) for n in b.nodes])
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape} in elementwise MUL")
    ga, gb = a.to_grid(), b.to_grid()
    out: Grid = [
        [_sz_mul(ga[r][c], gb[r][c]) for c in range(a.cols)] for r in range(a.rows)
    ]
    return MatrixExpr.from_grid(out) if a.rows and a.cols else MatrixExpr.zeros(*a.shape)


def _ewise_div(a: MatrixExpr, other) -> MatrixExpr:
    b = _coerce(other, like=a)
    if not b.is_scalar():
        raise ValueError("elementwise division supports scalar divisors only")
    s = b.scalar()
    return MatrixExpr(a.sparsity, [apply_node(OpCode.DIV, n, s) for n in a.nodes])


# -- structured operations ---------------------------------------------------


def matmul(a: MatrixExpr, b: MatrixExpr) -> MatrixExpr:
    """Matrix product; structurally zero products are never materialized."""
    a, b = _coerce(a), _coerce(b)
    if a.cols != b.rows:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    ga, gb = a.to_grid(), b.to_grid()
    out: Grid = [[None] * b.cols for _ in range(a.rows)]
    for r in range(a.rows):
        for c in range(b.cols):
            acc: Expr | None = None
            for k in range(a.cols):
                acc = _sz_add(acc, _sz_mul(ga[r][k], gb[k][c]))
            out[r][c] = acc
    if a.rows == 0 or b.cols == 0:
        return MatrixExpr.zeros(a.rows, b.cols)
    return MatrixExpr.from_grid(out)


def transpose(m: MatrixExpr) -> MatrixExpr:
    grid = m.to_grid()
    out: Grid = [[grid[r][c] for r in range(m.rows)] for c in range(m.cols)]
    if m.rows == 0 or m.cols == 0:
        return MatrixExpr.zeros(m.cols, m.rows)
    return MatrixExpr.from_grid(out)


def vertcat(parts: Sequence[MatrixExpr]) -> MatrixExpr:
    parts = [_coerce(p) for p in parts]
    if not parts:
        raise ValueError("vertcat of nothing")
    cols = parts[0].cols
    grid: Grid = []
    for p in parts:
        if p.cols != cols:
            raise ValueError("vertcat: column counts differ")
        grid.extend(p.to_grid())
    return MatrixExpr.from_grid(grid) if grid else MatrixExpr.zeros(0, cols)


def horzcat(parts: Sequence[MatrixExpr]) -> MatrixExpr:
    parts = [_coerce(p) for p in parts]
    if not parts:
        raise ValueError("horzcat of nothing")
    rows = parts[0].rows
    grids = []
    for p in parts:
        if p.rows != rows:
            raise ValueError("horzcat: row counts differ")
        grids.append(p.to_grid())
    grid: Grid = [sum((g[r] for g in grids), []) for r in range(rows)]
    return MatrixExpr.from_grid(grid) if rows else MatrixExpr.zeros(rows, sum(p.cols for p in parts))


def diag(v: MatrixExpr) -> MatrixExpr:
    """Column vector -> diagonal matrix (structural zeros preserved)."""
    v = _coerce(v)
    if v.cols != 1:
        raise ValueError("diag expects a column vector")
    grid: Grid = [[None] * v.rows for _ in range(v.rows)]
    for r in range(v.rows):
        grid[r][r] = v.element(r, 0)
    return MatrixExpr.from_grid(grid)


def dot(a: MatrixExpr, b: MatrixExpr) -> MatrixExpr:
    """Inner product of two column vectors (1x1 result)."""
    a, b = _coerce(a), _coerce(b)
    if a.cols != 1 or b.cols != 1 or a.rows != b.rows:
        raise ValueError("dot expects two column vectors of equal length")
    return matmul(transpose(a), b)


def _unary(op: OpCode):
    def fn(x):
        return apply(op, x)

    fn.__name__ = op.name.lower()
    return fn


sin = _unary(OpCode.SIN)
cos = _unary(OpCode.COS)
tan = _unary(OpCode.TAN)
exp = _unary(OpCode.EXP)
log = _unary(OpCode.LOG)
sqrt = _unary(OpCode.SQRT)
sq = _unary(OpCode.SQ)
fabs = _unary(OpCode.FABS)
step = _unary(OpCode.STEP)


def power(x, y) -> MatrixExpr:
    return apply(OpCode.POW, x, y)


def atan2(y, x) -> MatrixExpr:
    return apply(OpCode.ATAN2, y, x)


def fmin(a, b) -> MatrixExpr:
    return apply(OpCode.FMIN, a, b)


def fmax(a, b) -> MatrixExpr:
    return apply(OpCode.FMAX, a, b)


def if_else(cond, then, otherwise) -> MatrixExpr:
    """Branch-free select: evaluates both sides, picks by cond != 0."""
    return apply(OpCode.IF_ELSE, cond, then, otherwise)


# ---------------------------------------------------------------------------
# Graph walks
# ---------------------------------------------------------------------------


def _roots_of(what) -> list[Expr]:
    if isinstance(what, Expr):
        return [what]
    if isinstance(what, MatrixExpr):
        return list(what.nodes)
    roots: list[Expr] = []
    for item in what:
        roots.extend(_roots_of(item))
    return roots


def topo_order(roots) -> list[Expr]:
    """Children-before-parents ordering of all nodes reachable from roots.

    Iterative (graphs can be deep); deterministic for a fixed root order.
    """
    roots = _roots_of(roots)
    seen: set[int] = set()
    order: list[Expr] = []
    stack: list[tuple[Expr, bool]] = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for a in reversed(node.args):
            if id(a) not in seen:
                stack.append((a, False))
    return order


def node_count(what) -> int:
    return len(topo_order(what))


def input_slots(what) -> list[Symbol]:
    """Symbols referenced by the graph, in first-encounter order."""
    seen: dict[int, Symbol] = {}
    for n in topo_order(what):
        if n.op == OpCode.INPUT:
            symref = n.slot[0]
            seen.setdefault(id(symref), symref)
    return list(seen.values())


def _binding_values(symbol: Symbol, value) -> list[float]:
    """Dense user array -> per-nonzero values for one symbol."""
    sp = symbol.sparsity
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        if sp.shape != (1, 1):
            raise ValueError(f"symbol {symbol.name!r} is {sp.rows}x{sp.cols}, got a scalar")
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if sp.cols == 1 and arr.size == sp.rows:
            arr = arr.reshape(-1, 1)
        elif sp.rows == 1 and arr.size == sp.cols:
            arr = arr.reshape(1, -1)
        else:
            raise ValueError(
                f"symbol {symbol.name!r}: flat array of {arr.size} does not fit {sp.rows}x{sp.cols}"
            )
    if arr.shape != sp.shape:
        raise ValueError(
            f"symbol {symbol.name!r}: expected shape {sp.shape}, got {arr.shape}"
        )
    return [float(arr[r, c]) for r, c in sp.coords()]


def evaluate(outputs, bindings: Mapping) -> list[np.ndarray]:
    """Reference evaluation of matrix expressions on numeric inputs.

    ``bindings`` maps Symbol (or a pristine symbol MatrixExpr) to dense
    arrays. Returns dense float arrays, one per output. Pure Python —
    this is the independent oracle the compiled paths are checked against.
    """
    outs = [_coerce(o) for o in (outputs if isinstance(outputs, (list, tuple)) else [outputs])]
    slot_vals: dict[tuple[int, int], float] = {}
    for key, value in bindings.items():
        symbol = key if isinstance(key, Symbol) else key.owner_symbol()
        vals = _binding_values(symbol, value)
        for k, v in enumerate(vals):
            slot_vals[(id(symbol), k)] = v

    vals: dict[int, float] = {}
    for n in topo_order(outs):
        if n.op == OpCode.CONST:
            vals[id(n)] = n.value
        elif n.op == OpCode.INPUT:
            symref, k = n.slot
            try:
                vals[id(n)] = slot_vals[(id(symref), k)]
            except KeyError:
                raise ValueError(f"no value bound for symbol {symref.name!r}") from None
        else:
            vals[id(n)] = eval_op(n.op, [vals[id(a)] for a in n.args], n.value)

    results = []
    for m in outs:
        arr = np.zeros(m.shape, dtype=float)
        for k, (r, c) in enumerate(m.sparsity.coords()):
            arr[r, c] = vals[id(m.nodes[k])]
        results.append(arr)
    return results


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


def _rebuild(op: OpCode, args: list[Expr | None], value: float) -> Expr | None:
    """Rebuild a node whose operands may have become structural zeros."""
    if op == OpCode.CONST:
        return const(value)
    if op == OpCode.ADD:
        return _sz_add(args[0], args[1])
    if op == OpCode.SUB:
        return _sz_sub(args[0], args[1])
    if op == OpCode.MUL:
        return _sz_mul(args[0], args[1])
    if op == OpCode.DIV:
        return _sz_div(args[0], args[1])
    if op == OpCode.NEG:
        return _sz_neg(args[0])
    if op == OpCode.SQ and args[0] is None:
        return None
    if op == OpCode.FABS and args[0] is None:
        return None
    if op == OpCode.ASSIGN:
        return None if args[0] is None else apply_node(op, args[0])
    # Remaining ops are not annihilated by a zero operand: materialize zeros.
    return apply_node(op, *[_or_zero(a) for a in args])


def substitute(what, mapping: Mapping):
    """Graft replacement subgraphs onto INPUT leaves.

    ``mapping`` maps Symbol (or pristine symbol MatrixExpr) to MatrixExpr
    replacements of the same shape (patterns may differ; missing entries are
    structural zeros). Rebuilt entries that fold to literal 0.0 are pruned to
    structural zeros. Accepts one MatrixExpr or a sequence; returns the same.
    """
    single = isinstance(what, (MatrixExpr, Expr))
    mats = [_coerce(m) for m in (_roots_to_mats(what) if not single else [what])]

    repl: dict[tuple[int, int], Expr | None] = {}
    mapped_syms: set[int] = set()
    for key, target in mapping.items():
        symbol = key if isinstance(key, Symbol) else key.owner_symbol()
        target = _coerce(target)
        if target.shape != symbol.sparsity.shape:
            raise ValueError(
                f"substitution for {symbol.name!r}: shape {target.shape} != {symbol.sparsity.shape}"
            )
        mapped_syms.add(id(symbol))
        for k, (r, c) in enumerate(symbol.sparsity.coords()):
            repl[(id(symbol), k)] = target.element(r, c)

    memo: dict[int, Expr | None] = {}
    all_nodes = topo_order(mats)
    for n in all_nodes:
        if n.op == OpCode.INPUT:
            symref, k = n.slot
            memo[id(n)] = repl[(id(symref), k)] if id(symref) in mapped_syms else n
        elif n.op == OpCode.CONST:
            memo[id(n)] = n
        else:
            new_args = [memo[id(a)] for a in n.args]
            if all(na is a for na, a in zip(new_args, n.args)):
                memo[id(n)] = n
            else:
                memo[id(n)] = _rebuild(n.op, new_args, n.value)

    results = []
    for m in mats:
        grid: Grid = [[None] * m.cols for _ in range(m.rows)]
        for k, (r, c) in enumerate(m.sparsity.coords()):
            e = memo[id(m.nodes[k])]
            if e is not None and e.is_const(0.0):
                e = None  # prune entries that folded to literal zero
            grid[r][c] = e
        if m.rows and m.cols:
            results.append(MatrixExpr.from_grid(grid))
        else:
            results.append(MatrixExpr.zeros(*m.shape))
    return results[0] if single else results


def _roots_to_mats(seq) -> list[MatrixExpr]:
    return [m for m in seq]


# ---------------------------------------------------------------------------
# Automatic differentiation
# ---------------------------------------------------------------------------


def _wrt_slots(wrt: MatrixExpr) -> list[Expr]:
    nodes = list(wrt.nodes)
    if not nodes:
        raise ValueError("differentiation target has no stored entries")
    seen: set[int] = set()
    for n in nodes:
        if n.op != OpCode.INPUT:
            raise ValueError("can only differentiate with respect to declared inputs")
        if id(n) in seen:
            raise ValueError("differentiation target repeats an entry")
        seen.add(id(n))
    return nodes


def _numel_index(r: int, c: int, rows: int) -> int:
    return c * rows + r  # column-major flattening


def _forward_diffs(roots: list[Expr], wrt_nodes: list[Expr]) -> dict[int, dict[int, Expr]]:
    """Per-node sparse derivative vectors d(node)/d(wrt_j), structural zeros omitted."""
    seed_of = {id(n): j for j, n in enumerate(wrt_nodes)}
    diffs: dict[int, dict[int, Expr]] = {}
    for n in topo_order(roots):
        nid = id(n)
        if n.op == OpCode.INPUT:
            j = seed_of.get(nid)
            diffs[nid] = {} if j is None else {j: const(1.0)}
            continue
        if n.op == OpCode.CONST:
            diffs[nid] = {}
            continue
        argd = [diffs[id(a)] for a in n.args]
        keys = sorted(set().union(*argd)) if argd else []
        out: dict[int, Expr] = {}
        for j in keys:
            d = _diff_rule(n, [ad.get(j) for ad in argd])
            if d is not None:
                out[j] = d
        diffs[nid] = out
    return diffs


def _diff_rule(n: Expr, d: list[Expr | None]) -> Expr | None:
    """d(n)/dx given operand derivatives (None == structurally zero)."""
    op = n.op
    a = n.args
    if op == OpCode.ADD:
        return _sz_add(d[0], d[1])
    if op == OpCode.SUB:
        return _sz_sub(d[0], d[1])
    if op == OpCode.MUL:
        return _sz_add(_sz_mul(d[0], a[1]), _sz_mul(a[0], d[1]))
    if op == OpCode.DIV:
        # d(a/b) = (da - (a/b)*db) / b, reusing the quotient node itself
        num = _sz_sub(d[0], _sz_mul(n, d[1]))
        return None if num is None else apply_node(OpCode.DIV, num, a[1])
    if op == OpCode.NEG:
        return _sz_neg(d[0])
    if op == OpCode.ASSIGN:
        return d[0]
    if op == OpCode.EXP:
        return _sz_mul(n, d[0])
    if op == OpCode.LOG:
        return _sz_div(d[0], a[0])
    if op == OpCode.POW:
        base, expo = a
        if expo.op == OpCode.CONST:
            if d[0] is None:
                return None
            pm1 = apply_node(OpCode.POW, base, const(expo.value - 1.0))
            return _sz_mul(_sz_mul(expo, pm1), d[0])
        # general a^b: n * (db*log(a) + b*da/a)
        term = _sz_add(
            _sz_mul(d[1], apply_node(OpCode.LOG, base)),
            _sz_mul(expo, _sz_div(d[0], base)),
        )
        return _sz_mul(n, term)
    if op == OpCode.SQRT:
        return _sz_div(d[0], _sz_mul(const(2.0), n))
    if op == OpCode.SQ:
        return _sz_mul(_sz_mul(const(2.0), a[0]), d[0])
    if op == OpCode.SIN:
        return _sz_mul(apply_node(OpCode.COS, a[0]), d[0])
    if op == OpCode.COS:
        return _sz_neg(_sz_mul(apply_node(OpCode.SIN, a[0]), d[0]))
    if op == OpCode.TAN:
        c = apply_node(OpCode.COS, a[0])
        return _sz_div(d[0], apply_node(OpCode.SQ, c))
    if op == OpCode.ATAN2:
        den = apply_node(OpCode.ADD, apply_node(OpCode.SQ, a[0]), apply_node(OpCode.SQ, a[1]))
        num = _sz_sub(_sz_mul(a[1], d[0]), _sz_mul(a[0], d[1]))
        return _sz_div(num, den)
    if op == OpCode.FABS:
        # subgradient: sign(a) with sign(0) = 0
        sign = apply_node(
            OpCode.SUB,
            apply_node(OpCode.STEP, a[0]),
            apply_node(OpCode.STEP, apply_node(OpCode.NEG, a[0])),
        )
        return _sz_mul(sign, d[0])
    if op == OpCode.FMIN:
        if d[0] is None and d[1] is None:
            return None
        # ties take the first argument's derivative: b wins only when a > b
        sel = apply_node(OpCode.STEP, apply_node(OpCode.SUB, a[0], a[1]))
        return apply_node(OpCode.IF_ELSE, sel, _or_zero(d[1]), _or_zero(d[0]))
    if op == OpCode.FMAX:
        if d[0] is None and d[1] is None:
            return None
        sel = apply_node(OpCode.STEP, apply_node(OpCode.SUB, a[1], a[0]))
        return apply_node(OpCode.IF_ELSE, sel, _or_zero(d[1]), _or_zero(d[0]))
    if op == OpCode.STEP:
        return None  # flat almost everywhere; convention: derivative 0
    if op == OpCode.IF_ELSE:
        if d[1] is None and d[2] is None:
            return None
        return apply_node(OpCode.IF_ELSE, a[0], _or_zero(d[1]), _or_zero(d[2]))
    raise ValueError(f"no derivative rule for {op.name}")


def jacobian(f: MatrixExpr, wrt: MatrixExpr) -> MatrixExpr:
    """d f / d wrt with shape (numel(f), numel(wrt)), column-major indexing.

    Structural zeros are omitted; an f independent of wrt yields an
    all-structural-zero Jacobian (not an error).
    """
    f = _coerce(f)
    wrt = _coerce(wrt)
    wrt_nodes = _wrt_slots(wrt)
    diffs = _forward_diffs(list(f.nodes), wrt_nodes)
    wrt_pos = [  # ordinal -> column-major element index in wrt
        _numel_index(r, c, wrt.rows) for r, c in wrt.sparsity.coords()
    ]
    nrows = f.rows * f.cols
    ncols = wrt.rows * wrt.cols
    grid: Grid = [[None] * ncols for _ in range(nrows)]
    for k, (r, c) in enumerate(f.sparsity.coords()):
        row = _numel_index(r, c, f.rows)
        for j, dnode in diffs[id(f.nodes[k])].items():
            grid[row][wrt_pos[j]] = dnode
    if nrows == 0 or ncols == 0:
        return MatrixExpr.zeros(nrows, ncols)
    return MatrixExpr.from_grid(grid)


def hessian(f: MatrixExpr, wrt: MatrixExpr) -> MatrixExpr:
    """Second derivative of a scalar; symmetric by shared-node construction.

    Only the lower triangle is differentiated; the upper triangle mirrors the
    same nodes, so H[i][j] is H[j][i], not merely equal in value.
    """
    f = _coerce(f)
    if not f.is_scalar():
        raise ValueError(f"hessian needs a scalar (1x1), got {f.rows}x{f.cols}")
    wrt = _coerce(wrt)
    g = jacobian(f, wrt)  # 1 x n
    n = g.cols
    ggrid = g.to_grid()[0]
    grid: Grid = [[None] * n for _ in range(n)]
    wrt_nodes = _wrt_slots(wrt)
    wrt_pos = [_numel_index(r, c, wrt.rows) for r, c in wrt.sparsity.coords()]
    live = [gi for gi in ggrid if gi is not None]
    all_diffs = _forward_diffs(live, wrt_nodes) if live else {}
    for i in range(n):
        gi = ggrid[i]
        if gi is None:
            continue
        for j, dnode in all_diffs[id(gi)].items():
            jj = wrt_pos[j]
            if jj <= i:  # lower triangle only; mirror shares the node
                grid[i][jj] = dnode
                grid[jj][i] = dnode
    if n == 0:
        return MatrixExpr.zeros(0, 0)
    return MatrixExpr.from_grid(grid)


# ---------------------------------------------------------------------------
# Functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolicFunction:
    """A named set of matrix inputs and matrix outputs over one shared graph."""

    name: str
    inputs: tuple[MatrixExpr, ...]
    outputs: tuple[MatrixExpr, ...]
    input_symbols: tuple[Symbol, ...]

    def __init__(self, name: str, inputs: Sequence[MatrixExpr], outputs: Sequence[MatrixExpr]):
        if not name.isidentifier():
            raise ValueError(f"function name {name!r} is not a valid identifier")
        inputs = tuple(_coerce(i) for i in inputs)
        outputs = tuple(_coerce(o) for o in outputs)
        symbols = []
        names: set[str] = set()
        for m in inputs:
            symbol = m.owner_symbol()
            if symbol.name in names:
                raise ValueError(f"duplicate input name {symbol.name!r} in function {name!r}")
            names.add(symbol.name)
            symbols.append(symbol)
        declared = {id(s) for s in symbols}
        for m in outputs:
            for symref in input_slots(m):
                if id(symref) not in declared:
                    raise ValueError(
                        f"function {name!r}: output uses undeclared input {symref.name!r}"
                    )
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "input_symbols", tuple(symbols))

    @property
    def n_in(self) -> int:
        return len(self.inputs)

    @property
    def n_out(self) -> int:
        return len(self.outputs)

    @property
    def input_sparsity(self) -> list[Sparsity]:
        return [m.sparsity for m in self.inputs]

    @property
    def output_sparsity(self) -> list[Sparsity]:
        return [m.sparsity for m in self.outputs]

    @property
    def nnz_in(self) -> list[int]:
        return [m.nnz for m in self.inputs]

    @property
    def nnz_out(self) -> list[int]:
        return [m.nnz for m in self.outputs]

    def eval(self, *values) -> list[np.ndarray]:
        """Numeric reference evaluation (see ``evaluate``)."""
        if len(values) != self.n_in:
            raise ValueError(f"{self.name} expects {self.n_in} inputs, got {len(values)}")
        bindings = {s: v for s, v in zip(self.input_symbols, values)}
        return evaluate(list(self.outputs), bindings)

    def compose(self, *args: MatrixExpr) -> list[MatrixExpr]:
        """Symbolic call: substitute argument expressions for the inputs."""
        if len(args) != self.n_in:
            raise ValueError(f"{self.name} expects {self.n_in} inputs, got {len(args)}")
        mapping = {s: a for s, a in zip(self.input_symbols, args)}
        return substitute(list(self.outputs), mapping)

    def __repr__(self) -> str:
        ins = ", ".join(f"{s.name}[{m.rows}x{m.cols}]" for s, m in zip(self.input_symbols, self.inputs))
        return f"SymbolicFunction({self.name}: {ins} -> {self.n_out} output(s))"
