"""Compiled interpreter core for batched tape evaluation.

One function, ``run_range``, executes a packed instruction tape for a
contiguous range of batch elements.  The dispatch is a static switch over
opcode wire values; the instruction stream is walked once per block of
``ELEMENT_BLOCK`` elements so each instruction's dispatch cost is amortized
while the block's work slice (ELEMENT_BLOCK * n_w doubles) stays
cache-resident.

Scalar semantics are IEEE-total and must agree *bitwise* with
``symcore.eval_op``: invalid operations (0/0, sqrt of a negative,
trig of an infinity, a negative base raised to a non-integer power)
produce the hardware "indefinite" quiet NaN, NaN operands pass through
unchanged, and ``log`` of a negative yields the positive quiet NaN.
"""

from __future__ import annotations

import math

from numba import njit

from .symcore import OpCode

__all__ = ["ELEMENT_BLOCK", "run_range"]

ELEMENT_BLOCK = 16

_CONST = int(OpCode.CONST)
_INPUT = int(OpCode.INPUT)
_OUTPUT = int(OpCode.OUTPUT)
_ASSIGN = int(OpCode.ASSIGN)
_ADD = int(OpCode.ADD)
_SUB = int(OpCode.SUB)
_MUL = int(OpCode.MUL)
_DIV = int(OpCode.DIV)
_NEG = int(OpCode.NEG)
_EXP = int(OpCode.EXP)
_LOG = int(OpCode.LOG)
_POW = int(OpCode.POW)
_SQRT = int(OpCode.SQRT)
_SQ = int(OpCode.SQ)
_SIN = int(OpCode.SIN)
_COS = int(OpCode.COS)
_TAN = int(OpCode.TAN)
_ATAN2 = int(OpCode.ATAN2)
_FABS = int(OpCode.FABS)
_FMIN = int(OpCode.FMIN)
_FMAX = int(OpCode.FMAX)
_STEP = int(OpCode.STEP)
_IF_ELSE = int(OpCode.IF_ELSE)


@njit(cache=True, nogil=True, error_model="numpy", boundscheck=False)
def run_range(
    code,
    values,
    n_w,
    in_buf,
    in_off,
    nnz_in,
    out_buf,
    out_off,
    nnz_out,
    work,
    e0,
    e1,
):
    """Execute every instruction for batch elements ``e0 <= e < e1``.

    ``work`` is env-major: element ``e`` owns ``work[e*n_w : (e+1)*n_w]``.
    Inputs and outputs are flat env-major buffers; input ``i`` holds element
    ``e``'s ``k``-th nonzero at ``in_buf[in_off[i] + e*nnz_in[i] + k]`` and
    outputs mirror that with ``out_off``/``nnz_out``.  Elements are fully
    independent, so disjoint ranges may run concurrently on one workspace.
    """
    n_instr = code.shape[0]
    for b0 in range(e0, e1, ELEMENT_BLOCK):
        b1 = min(b0 + ELEMENT_BLOCK, e1)
        for i in range(n_instr):
            op = code[i, 0]
            out = code[i, 1]
            a = code[i, 2]
            b = code[i, 3]
            c = code[i, 4]
            if op == _MUL:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = work[w + a] * work[w + b]
            elif op == _ADD:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = work[w + a] + work[w + b]
            elif op == _SUB:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = work[w + a] - work[w + b]
            elif op == _DIV:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = work[w + a] / work[w + b]
            elif op == _IF_ELSE:
                for e in range(b0, b1):
                    w = e * n_w
                    if work[w + a] != 0.0:
                        work[w + out] = work[w + b]
                    else:
                        work[w + out] = work[w + c]
            elif op == _STEP:
                for e in range(b0, b1):
                    w = e * n_w
                    if work[w + a] > 0.0:
                        work[w + out] = 1.0
                    else:
                        work[w + out] = 0.0
            elif op == _FMAX:
                for e in range(b0, b1):
                    w = e * n_w
                    x = work[w + a]
                    y = work[w + b]
                    if x != x:
                        r = y
                    elif y != y:
                        r = x
                    elif x >= y:
                        r = x
                    else:
                        r = y
                    work[w + out] = r
            elif op == _FMIN:
                for e in range(b0, b1):
                    w = e * n_w
                    x = work[w + a]
                    y = work[w + b]
                    if x != x:
                        r = y
                    elif y != y:
                        r = x
                    elif x <= y:
                        r = x
                    else:
                        r = y
                    work[w + out] = r
            elif op == _NEG:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = -work[w + a]
            elif op == _SQ:
                for e in range(b0, b1):
                    w = e * n_w
                    x = work[w + a]
                    work[w + out] = x * x
            elif op == _CONST:
                v = values[i]
                for e in range(b0, b1):
                    work[e * n_w + out] = v
            elif op == _INPUT:
                base = in_off[a]
                nz = nnz_in[a]
                for e in range(b0, b1):
                    work[e * n_w + out] = in_buf[base + e * nz + b]
            elif op == _OUTPUT:
                base = out_off[out]
                nz = nnz_out[out]
                for e in range(b0, b1):
                    out_buf[base + e * nz + b] = work[e * n_w + a]
            elif op == _SQRT:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.sqrt(work[w + a])
            elif op == _FABS:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = abs(work[w + a])
            elif op == _EXP:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.exp(work[w + a])
            elif op == _LOG:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.log(work[w + a])
            elif op == _POW:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.pow(work[w + a], work[w + b])
            elif op == _SIN:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.sin(work[w + a])
            elif op == _COS:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.cos(work[w + a])
            elif op == _TAN:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.tan(work[w + a])
            elif op == _ATAN2:
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = math.atan2(work[w + a], work[w + b])
            else:  # ASSIGN
                for e in range(b0, b1):
                    w = e * n_w
                    work[w + out] = work[w + a]
