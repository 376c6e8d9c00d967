"""vecsym: symbolic scalar-expression compiler and batched evaluation toolkit.

Build sparse matrix expressions over hash-consed scalar graphs, differentiate
them, flatten them to instruction tapes, and evaluate thousands of independent
parameterizations in lock-step — or emit the equivalent GPU-style kernel
source. On top of the core sit fixed-iteration trajectory optimizers and a
planar quadcopter stability-analysis toolkit.
"""

from __future__ import annotations

from .symcore import (
    MatrixExpr,
    OpCode,
    Sparsity,
    Symbol,
    SymbolicFunction,
    apply,
    atan2,
    const,
    constant,
    cos,
    diag,
    dot,
    evaluate,
    exp,
    fabs,
    fmax,
    fmin,
    hessian,
    horzcat,
    if_else,
    jacobian,
    log,
    matmul,
    node_count,
    power,
    sin,
    sq,
    sqrt,
    step,
    substitute,
    sym,
    tan,
    topo_order,
    transpose,
    vertcat,
)

__version__ = "0.1.0"
