"""
From a symbolic expression to an instruction tape to kernel source
==================================================================

The whole pipeline on one tiny function: build f(x) = (sin(x) + x)^2 as a
hash-consed scalar graph, differentiate it, flatten it to a flat instruction
tape, serialize the tape to its text format, and emit the GPU-style batched
kernel for it.
"""

import numpy as np

from vecsym import SymbolicFunction, hessian, jacobian, sin, sym
from vecsym.codegen import emit_kernel
from vecsym.tape import deserialize, flatten, serialize

# Scalar symbols are 1x1 matrix expressions; arithmetic builds a DAG in which
# structurally identical subexpressions are shared (hash-consing), so `y`
# below appears once in memory even though it is used twice by `y * y`.
x = sym("x")
y = sin(x) + x
f = SymbolicFunction("example", [x], [y * y])

print("f(1.0)        =", f.eval(np.array([1.0]))[0].item())
print("exact value   =", (np.sin(1.0) + 1.0) ** 2)

# Derivatives are graphs too — the same machinery evaluates them.
df = SymbolicFunction("df", [x], [jacobian(f.outputs[0], x)])
d2f = SymbolicFunction("d2f", [x], [hessian(f.outputs[0], x)])
print("f'(1.0)       =", df.eval(np.array([1.0]))[0].item())
print("f''(1.0)      =", d2f.eval(np.array([1.0]))[0].item())

# Flattening walks the graph in topological order and assigns each live node
# a slot in a reusable work array. Dead code or duplicated work never makes
# it onto the tape.
tape = flatten(f)
print()
print(f"tape: {tape.n_instructions} instructions, work array of {tape.n_w} slots")

# The text form is line-oriented JSON: a header object, then one row per
# instruction. It survives a round trip exactly.
text = serialize(tape)
print()
print(text)
assert serialize(deserialize(text)) == text

# Finally, the same tape can be compiled to batched kernel source, in which
# thread `idx` evaluates one element of the batch.
kernel = emit_kernel(tape)
print(kernel.source_text)
