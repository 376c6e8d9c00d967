"""Emit batched GPU-style kernel source from an instruction tape.

One thread evaluates one batch element: thread ``idx`` owns the work-buffer
window ``work[idx * n_w : (idx + 1) * n_w]`` and the strided element
``idx * nnz + k`` of every input/output array.  The whole tape becomes a
single kernel (one launch per evaluation), each instruction one statement.

Emission is deterministic: the same tape yields byte-identical source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .symcore import OpCode
from .tape import FORMAT_VERSION, InstructionTape

__all__ = ["KernelSource", "STATEMENT_TEMPLATES", "DEFAULT_BLOCK_SIZE", "emit_kernel", "write_kernel"]

DEFAULT_BLOCK_SIZE = 256

INDEX_CONVENTION = (
    "idx = blockIdx.x * blockDim.x + threadIdx.x; env_idx = idx * n_w; "
    "thread idx reads/writes element idx of each input/output, strided by its nnz"
)

# one statement per instruction; placeholders: {out} {in0} {in1} {in2} {value}
STATEMENT_TEMPLATES: dict[OpCode, str] = {
    OpCode.CONST: "work[env_idx + {out}] = {value};",
    OpCode.INPUT: "work[env_idx + {out}] = inputs[{in0}][idx * nnz_in[{in0}] + {in1}];",
    OpCode.OUTPUT: "outputs[{out}][idx * nnz_out[{out}] + {in1}] = work[env_idx + {in0}];",
    OpCode.ASSIGN: "work[env_idx + {out}] = work[env_idx + {in0}];",
    OpCode.ADD: "work[env_idx + {out}] = work[env_idx + {in0}] + work[env_idx + {in1}];",
    OpCode.SUB: "work[env_idx + {out}] = work[env_idx + {in0}] - work[env_idx + {in1}];",
    OpCode.MUL: "work[env_idx + {out}] = work[env_idx + {in0}] * work[env_idx + {in1}];",
    OpCode.DIV: "work[env_idx + {out}] = work[env_idx + {in0}] / work[env_idx + {in1}];",
    OpCode.NEG: "work[env_idx + {out}] = -work[env_idx + {in0}];",
    OpCode.EXP: "work[env_idx + {out}] = exp(work[env_idx + {in0}]);",
    OpCode.LOG: "work[env_idx + {out}] = log(work[env_idx + {in0}]);",
    OpCode.POW: "work[env_idx + {out}] = pow(work[env_idx + {in0}], work[env_idx + {in1}]);",
    OpCode.SQRT: "work[env_idx + {out}] = sqrt(work[env_idx + {in0}]);",
    OpCode.SQ: "work[env_idx + {out}] = work[env_idx + {in0}] * work[env_idx + {in0}];",
    OpCode.SIN: "work[env_idx + {out}] = sin(work[env_idx + {in0}]);",
    OpCode.COS: "work[env_idx + {out}] = cos(work[env_idx + {in0}]);",
    OpCode.TAN: "work[env_idx + {out}] = tan(work[env_idx + {in0}]);",
    OpCode.ATAN2: "work[env_idx + {out}] = atan2(work[env_idx + {in0}], work[env_idx + {in1}]);",
    OpCode.FABS: "work[env_idx + {out}] = fabs(work[env_idx + {in0}]);",
    OpCode.FMIN: "work[env_idx + {out}] = fmin(work[env_idx + {in0}], work[env_idx + {in1}]);",
    OpCode.FMAX: "work[env_idx + {out}] = fmax(work[env_idx + {in0}], work[env_idx + {in1}]);",
    OpCode.STEP: "work[env_idx + {out}] = (work[env_idx + {in0}] > 0.0) ? 1.0 : 0.0;",
    OpCode.IF_ELSE: (
        "work[env_idx + {out}] = (work[env_idx + {in0}] != 0.0) ? "
        "work[env_idx + {in1}] : work[env_idx + {in2}];"
    ),
}

# the table must cover the opcode set exactly; fail at import, not mid-emit
assert set(STATEMENT_TEMPLATES) == set(OpCode), "statement template table is not total"


@dataclass(frozen=True)
class KernelSource:
    """Emitted kernel text plus the layout facts a caller needs to launch it."""

    function_name: str
    source_text: str
    n_w: int
    nnz_in: list[int]
    nnz_out: list[int]
    n_instructions: int
    index_convention: str
    launch_block_size: int

    def __str__(self) -> str:
        return self.source_text


def _c_literal(v: float) -> str:
    if math.isnan(v):
        return "(0.0 / 0.0)"
    if math.isinf(v):
        return "(1.0 / 0.0)" if v > 0 else "(-1.0 / 0.0)"
    text = repr(float(v))
    return text


def emit_kernel(t: InstructionTape, block_size: int = DEFAULT_BLOCK_SIZE) -> KernelSource:
    """Render the whole tape as one kernel; statement count == instruction count.

    ``block_size`` is a launch parameter, not a code-shape parameter: it is
    recorded for the caller (and in the header comment) but every emission of
    the same tape yields byte-identical statements regardless of it.
    """
    if block_size < 1:
        raise ValueError("block_size must be positive")
    code, values = t.packed()
    n = code.shape[0]
    fname = f"{t.name}_kernel"
    stmts = []
    for i in range(n):
        op, out, in0, in1, in2 = (int(v) for v in code[i])
        stmts.append(
            STATEMENT_TEMPLATES[OpCode(op)].format(
                out=out, in0=in0, in1=in1, in2=in2, value=_c_literal(float(values[i]))
            )
        )
    nnz_in = t.nnz_in
    nnz_out = t.nnz_out
    grid = f"(batch_size + {block_size} - 1) / {block_size}"
    lines = [
        f"// {t.name}: generated batched evaluation kernel (tape format_version {FORMAT_VERSION})",
        f"// n_instructions = {n}, n_w = {t.n_w}",
        f"// one thread per batch element; {INDEX_CONVENTION}",
        f"// suggested launch: {fname}<<<{grid}, {block_size}>>>(inputs, work, outputs, batch_size)",
        "",
        f"#define n_w {t.n_w}",
        "",
        f"static const int nnz_in[{max(len(nnz_in), 1)}] = {{{', '.join(str(v) for v in nnz_in) or '0'}}};",
        f"static const int nnz_out[{max(len(nnz_out), 1)}] = {{{', '.join(str(v) for v in nnz_out) or '0'}}};",
        "",
        f"__global__ void {fname} (",
        "        const double *inputs[],",
        "        double *work,",
        "        double *outputs[],",
        "        const int batch_size) {",
        "",
        "    int idx = blockIdx.x * blockDim.x + threadIdx.x;",
        "    int env_idx = idx * n_w;",
        "    if (idx < batch_size) {",
    ]
    lines.extend(f"        {s}" for s in stmts)
    lines.extend(["    }", "}", ""])
    return KernelSource(
        function_name=fname,
        source_text="\n".join(lines),
        n_w=t.n_w,
        nnz_in=nnz_in,
        nnz_out=nnz_out,
        n_instructions=n,
        index_convention=INDEX_CONVENTION,
        launch_block_size=block_size,
    )


def write_kernel(t: InstructionTape, path=None, block_size: int = DEFAULT_BLOCK_SIZE) -> KernelSource:
    """Emit and write ``<name>.cu`` (or an explicit path); returns the source."""
    ks = emit_kernel(t, block_size=block_size)
    if path is None:
        path = f"{t.name}.cu"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ks.source_text)
    return ks
