"""Instruction tapes: flattening, slot reuse, validation, serialization."""

from __future__ import annotations

import math
import random
from pathlib import Path

import numpy as np
import pytest

from oracles import random_input_values, random_tape_function
from vecsym import symcore as sc
from vecsym import tape as tp
from vecsym.symcore import OpCode, SymbolicFunction
from vecsym.tape import InstructionTape, deserialize, flatten, serialize

GOLDEN = Path(__file__).parent / "golden"


def example_function() -> SymbolicFunction:
    x = sc.sym("x")
    y = sc.sin(x) + x
    return SymbolicFunction("example", [x], [y * y])


def test_running_example_flattens_to_the_reference_five_rows():
    t = flatten(example_function())
    assert t.n_instructions == 5
    assert t.n_w == 2
    rows = [(r.op, r.out, r.in0, r.in1, r.in2) for r in t.instructions]
    assert rows == [
        (OpCode.INPUT, 0, 0, 0, -1),
        (OpCode.SIN, 1, 0, -1, -1),
        (OpCode.ADD, 1, 1, 0, -1),
        (OpCode.MUL, 1, 1, 1, -1),
        (OpCode.OUTPUT, 0, 1, 0, -1),
    ]
    assert t.nnz_in == [1]
    assert t.nnz_out == [1]


def test_constant_function_flattens_to_const_plus_store():
    f = SymbolicFunction("k", [], [sc.constant(3.5)])
    t = flatten(f)
    assert [r.op for r in t.instructions] == [OpCode.CONST, OpCode.OUTPUT]
    assert t.n_w == 1
    assert t.instructions[0].value == 3.5
    assert t.trace([])[0][0] == 3.5


def test_instruction_count_identity_on_random_graphs():
    rng = random.Random(1411)
    for _ in range(8):
        f = random_tape_function(rng, n_ops=rng.randint(10, 80))
        t = flatten(f)
        reachable = sc.node_count(list(f.outputs))
        n_out_nnz = sum(m.nnz for m in f.outputs)
        assert t.n_instructions == reachable + n_out_nnz
        assert t.n_w <= reachable  # slot reuse never exceeds node count


def test_work_slots_written_before_read_and_recycled():
    rng = random.Random(99)
    f = random_tape_function(rng, n_ops=60)
    t = flatten(f)
    written: set[int] = set()
    for r in t.instructions:
        if r.op == OpCode.OUTPUT:
            assert r.in0 in written
        else:
            if r.op not in (OpCode.CONST, OpCode.INPUT):
                used = [r.in0, r.in1, r.in2][: sc.arity(r.op)]
                assert all(u in written for u in used)
            written.add(r.out)
    assert t.n_w == len(set(written))


def test_flatten_is_deterministic_across_rebuilds():
    t1 = flatten(example_function())
    t2 = flatten(example_function())
    assert serialize(t1) == serialize(t2)


def test_trace_matches_reference_evaluation():
    rng = random.Random(4242)
    for _ in range(5):
        f = random_tape_function(rng, n_ops=40)
        t = flatten(f)
        vals = random_input_values(rng, f)
        want = f.eval(*vals)
        got = t.trace([np.array([v[r, c] for r, c in m.sparsity.coords()]) for m, v in zip(f.inputs, vals)])
        for g, w, m in zip(got, want, f.outputs):
            dense = np.zeros(m.shape)
            for k, (r, c) in enumerate(m.sparsity.coords()):
                dense[r, c] = g[k]
            both_nan = np.isnan(dense) & np.isnan(w)
            assert np.array_equal(dense[~both_nan], w[~both_nan])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_serialized_text_matches_committed_golden_file():
    text = serialize(flatten(example_function()))
    golden = (GOLDEN / "example.tape.json").read_text()
    assert text == golden


def test_serialize_roundtrip_is_identity():
    rng = random.Random(7)
    for _ in range(6):
        t = flatten(random_tape_function(rng, n_ops=rng.randint(5, 120)))
        text = serialize(t)
        t2 = deserialize(text)
        assert serialize(t2) == text
        c1, v1 = t.packed()
        c2, v2 = t2.packed()
        assert np.array_equal(c1, c2)
        assert np.array_equal(v1, v2, equal_nan=True)
        assert t2.input_sparsity == t.input_sparsity
        assert t2.output_sparsity == t.output_sparsity
        assert t2.n_w == t.n_w and t2.name == t.name


def test_serialized_form_is_line_oriented_json():
    import json

    t = flatten(example_function())
    text = serialize(t)
    doc = json.loads(text)
    assert doc["format"] == "vecsym-tape"
    assert doc["format_version"] == tp.FORMAT_VERSION
    # one instruction per line
    rows = [ln for ln in text.splitlines() if ln.startswith('["')]
    assert len(rows) == t.n_instructions


def test_deserialize_rejects_unknown_opcode_by_name():
    text = serialize(flatten(example_function()))
    bad = text.replace('["SIN"', '["SINH"', 1)
    with pytest.raises(ValueError, match=r"instruction 1: unknown opcode 'SINH'"):
        deserialize(bad)


def test_deserialize_rejects_out_of_bounds_index_with_position():
    text = serialize(flatten(example_function()))
    bad = text.replace('["ADD", 1, 1, 0, -1', '["ADD", 1, 1, 9, -1', 1)
    with pytest.raises(ValueError, match="instruction 2"):
        deserialize(bad)


def test_deserialize_rejects_version_mismatch():
    text = serialize(flatten(example_function()))
    bad = text.replace('"format_version": 1,', '"format_version": 99,', 1)
    with pytest.raises(ValueError, match="format_version"):
        deserialize(bad)


def test_deserialize_rejects_malformed_documents():
    with pytest.raises(ValueError, match="invalid JSON"):
        deserialize("{ not json")
    with pytest.raises(ValueError, match="format marker"):
        deserialize('{"format": "something-else"}')
    text = serialize(flatten(example_function()))
    bad = text.replace('"n_instructions": 5,', '"n_instructions": 4,', 1)
    with pytest.raises(ValueError, match="rows are present"):
        deserialize(bad)


def test_validation_catches_read_before_write():
    t = flatten(example_function())
    code, values = t.packed()
    code = code.copy()
    code[1, 2] = 1  # SIN now reads slot 1, which is first written by itself
    with pytest.raises(ValueError, match="read before any write"):
        InstructionTape(t.name, code, values, t.n_w, t.input_sparsity, t.output_sparsity)


def test_validation_catches_bad_sentinels_and_ranges():
    t = flatten(example_function())
    code, values = t.packed()
    bad = code.copy()
    bad[1, 3] = 0  # SIN's unused in1 must stay -1
    with pytest.raises(ValueError, match="sentinel"):
        InstructionTape(t.name, bad, values, t.n_w, t.input_sparsity, t.output_sparsity)
    bad = code.copy()
    bad[0, 1] = 7  # INPUT destination beyond n_w
    with pytest.raises(ValueError, match="out of range"):
        InstructionTape(t.name, bad, values, t.n_w, t.input_sparsity, t.output_sparsity)


def test_save_and_load(tmp_path):
    t = flatten(example_function())
    p = tmp_path / "example.tape.json"
    tp.save(t, p)
    t2 = tp.load(p)
    assert serialize(t2) == serialize(t)


def test_multi_io_tape_traces_correctly():
    A = sc.sym("A", 2, 2)
    x = sc.sym("x", 2)
    f = SymbolicFunction("affine", [A, x], [A @ x, sc.dot(x, x)])
    t = flatten(f)
    got = t.trace([np.array([1.0, 3.0, 2.0, 4.0]), np.array([5.0, 6.0])])
    np.testing.assert_array_equal(got[0], [17.0, 39.0])  # column-major A
    np.testing.assert_array_equal(got[1], [61.0])
