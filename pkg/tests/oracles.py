"""Independent numeric oracles used across the test suite.

Everything here is deliberately implemented without the package under test:
central finite differences, dense LDL^T / LU, plain Riccati fixed-point
iteration, and brute-force active-set QP enumeration. Tests freeze or
recompute expected values through these, never through the library itself.
"""

from __future__ import annotations

import math
import random

import numpy as np


def fd_jacobian(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of fn: R^n -> R^m."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float)).ravel()
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fp = np.atleast_1d(np.asarray(fn(xp), dtype=float)).ravel()
        fm = np.atleast_1d(np.asarray(fn(xm), dtype=float)).ravel()
        J[:, j] = (fp - fm) / (2.0 * h)
    return J


def fd_hessian(fn, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar fn: R^n -> R."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            xpp, xpm, xmp, xmm = (x.copy() for _ in range(4))
            xpp[i] += h
            xpp[j] += h
            xpm[i] += h
            xpm[j] -= h
            xmp[i] -= h
            xmp[j] += h
            xmm[i] -= h
            xmm[j] -= h
            val = (fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)) / (4.0 * h * h)
            H[i, j] = H[j, i] = val
    return H


def dense_ldlt(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unpivoted LDL^T of a symmetric matrix: A = L D L^T, L unit lower."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    L = np.eye(n)
    d = np.zeros(n)
    for j in range(n):
        d[j] = A[j, j] - np.sum(L[j, :j] ** 2 * d[:j])
        for i in range(j + 1, n):
            L[i, j] = (A[i, j] - np.sum(L[i, :j] * L[j, :j] * d[:j])) / d[j]
    return L, d


def dense_ldlt_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    L, d = dense_ldlt(A)
    n = len(d)
    y = np.zeros(n)
    for i in range(n):
        y[i] = b[i] - L[i, :i] @ y[:i]
    y = y / d
    x = np.zeros(n)
    for i in reversed(range(n)):
        x[i] = y[i] - L[i + 1 :, i] @ x[i + 1 :]
    return x


def riccati_fixed_point(A, B, Q, R, iters: int) -> np.ndarray:
    """Plain DARE fixed-point iteration S <- Q + A'SA - A'SB (R+B'SB)^-1 B'SA."""
    A, B, Q, R = (np.asarray(m, dtype=float) for m in (A, B, Q, R))
    S = Q.copy()
    for _ in range(iters):
        BtSB = R + B.T @ S @ B
        S = Q + A.T @ S @ A - A.T @ S @ B @ np.linalg.solve(BtSB, B.T @ S @ A)
        S = 0.5 * (S + S.T)
    return S


def dare_residual(S, A, B, Q, R) -> float:
    BtSB = R + B.T @ S @ B
    rhs = Q + A.T @ S @ A - A.T @ S @ B @ np.linalg.solve(BtSB, B.T @ S @ A)
    return float(np.max(np.abs(S - rhs)))


def active_set_qp(P, c, A_eq, b_eq, A_in, b_in) -> np.ndarray | None:
    """Brute-force QP oracle: min 1/2 x'Px + c'x  s.t. A_eq x = b_eq, A_in x <= b_in.

    Enumerates every active set of the inequality constraints, solves the
    equality-constrained KKT system, and keeps the best feasible candidate
    with nonnegative multipliers on the active inequalities.
    """
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    A_in = np.zeros((0, n)) if A_in is None else np.asarray(A_in, dtype=float).reshape(-1, n)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).ravel()
    m = A_in.shape[0]
    best = None
    best_obj = math.inf
    for mask in range(1 << m):
        act = [i for i in range(m) if mask >> i & 1]
        Aact = np.vstack([A_eq, A_in[act]])
        bact = np.concatenate([b_eq, b_in[act]])
        k = Aact.shape[0]
        KKT = np.block([[P, Aact.T], [Aact, np.zeros((k, k))]])
        rhs = np.concatenate([-c, bact])
        try:
            sol = np.linalg.solve(KKT, rhs)
        except np.linalg.LinAlgError:
            continue
        x, lam = sol[:n], sol[n:]
        if m and np.any(A_in @ x - b_in > 1e-9):
            continue
        if len(act) and np.any(lam[len(b_eq) :] < -1e-9):
            continue
        obj = 0.5 * x @ P @ x + c @ x
        if obj < best_obj - 1e-12:
            best_obj = obj
            best = x
    return best


# ---------------------------------------------------------------------------
# Random smooth expression graphs (for AD-vs-FD and tape sweeps)
# ---------------------------------------------------------------------------


def random_smooth_graph(rng: random.Random, n_vars: int, n_ops: int):
    """Build a random smooth scalar graph over the package's primitives.

    Returns (vecsym MatrixExpr output, vecsym symbol, reference_fn) where
    reference_fn is an independent pure-math closure over the same structure.
    Only smooth, domain-safe compositions are drawn so central differences
    converge: divisions and logs go through 2 + (.)^2 style guards.
    """
    from vecsym import symcore as sc

    x = sc.sym("x", n_vars)
    pool_sym = [x[i] for i in range(n_vars)]
    pool_ref = [(lambda v, i=i: v[i]) for i in range(n_vars)]
    for k in range(3):
        val = rng.uniform(-1.5, 1.5)
        pool_sym.append(sc.constant(val))
        pool_ref.append(lambda v, val=val: val)

    def pick():
        i = rng.randrange(len(pool_sym))
        return pool_sym[i], pool_ref[i]

    for _ in range(n_ops):
        choice = rng.randrange(10)
        a_s, a_r = pick()
        b_s, b_r = pick()
        if choice == 0:
            s, r = a_s + b_s, (lambda v, a=a_r, b=b_r: a(v) + b(v))
        elif choice == 1:
            s, r = a_s - b_s, (lambda v, a=a_r, b=b_r: a(v) - b(v))
        elif choice == 2:
            s, r = a_s * b_s, (lambda v, a=a_r, b=b_r: a(v) * b(v))
        elif choice == 3:
            den_s = sc.constant(2.0) + sc.sq(b_s)
            s = sc.apply(sc.OpCode.DIV, a_s, den_s)
            r = lambda v, a=a_r, b=b_r: a(v) / (2.0 + b(v) ** 2)
        elif choice == 4:
            s, r = sc.sin(a_s), (lambda v, a=a_r: math.sin(a(v)))
        elif choice == 5:
            s, r = sc.cos(a_s), (lambda v, a=a_r: math.cos(a(v)))
        elif choice == 6:
            arg_s = sc.constant(2.0) + sc.sq(a_s)
            s = sc.log(arg_s)
            r = lambda v, a=a_r: math.log(2.0 + a(v) ** 2)
        elif choice == 7:
            arg_s = sc.constant(2.0) + sc.sq(a_s)
            s = sc.sqrt(arg_s)
            r = lambda v, a=a_r: math.sqrt(2.0 + a(v) ** 2)
        elif choice == 8:
            s = sc.exp(sc.constant(0.25) * a_s)
            r = lambda v, a=a_r: math.exp(0.25 * a(v))
        else:
            s, r = sc.atan2(a_s, sc.constant(2.0) + sc.sq(b_s)), (
                lambda v, a=a_r, b=b_r: math.atan2(a(v), 2.0 + b(v) ** 2)
            )
        pool_sym.append(s)
        pool_ref.append(r)

    # combine the last few entries so the output touches most of the pool
    out_s, out_r = pool_sym[-1], pool_ref[-1]
    for j in range(2, min(5, len(pool_sym))):
        o_s, o_r = pool_sym[-j], pool_ref[-j]
        out_s = out_s + o_s
        out_r = lambda v, a=out_r, b=o_r: a(v) + b(v)
    return out_s, x, out_r


def random_tape_function(rng: random.Random, name: str = "randf", n_ops: int = 30):
    """Random function over the full opcode set (kinks and specials included).

    Used for tape/runtime sweeps where the reference is the pure-Python graph
    evaluator, so no smoothness or domain safety is required.
    """
    from vecsym import symcore as sc

    OpCode = sc.OpCode
    n_inputs = rng.randint(1, 3)
    syms = [sc.sym(f"x{i}", rng.randint(1, 5)) for i in range(n_inputs)]
    pool = [s[k] for s in syms for k in range(s.rows)]
    for _ in range(2):
        pool.append(sc.constant(round(rng.uniform(-2.0, 2.0), 3)))

    unary = [
        OpCode.NEG,
        OpCode.EXP,
        OpCode.LOG,
        OpCode.SQRT,
        OpCode.SQ,
        OpCode.SIN,
        OpCode.COS,
        OpCode.TAN,
        OpCode.FABS,
        OpCode.STEP,
        OpCode.ASSIGN,
    ]
    binary = [
        OpCode.ADD,
        OpCode.SUB,
        OpCode.MUL,
        OpCode.DIV,
        OpCode.POW,
        OpCode.ATAN2,
        OpCode.FMIN,
        OpCode.FMAX,
    ]

    def pick():
        # bias towards recent nodes so graphs grow deep as well as wide
        if rng.random() < 0.5 and len(pool) > 8:
            return pool[rng.randrange(len(pool) - 8, len(pool))]
        return pool[rng.randrange(len(pool))]

    for _ in range(n_ops):
        kind = rng.random()
        if kind < 0.35:
            pool.append(sc.apply(rng.choice(unary), pick()))
        elif kind < 0.9:
            pool.append(sc.apply(rng.choice(binary), pick(), pick()))
        else:
            pool.append(sc.if_else(pick(), pick(), pick()))

    n_out = rng.randint(1, 2)
    outs = []
    tail = pool[-(3 * n_out) :]
    step = max(1, len(tail) // n_out)
    for oi in range(n_out):
        part = tail[oi * step : (oi + 1) * step] or [pool[-1]]
        outs.append(sc.vertcat(part))
    return sc.SymbolicFunction(name, syms, outs)


def random_input_values(rng: random.Random, f, lo: float = -2.0, hi: float = 2.0):
    """One dense random value array per declared input of f."""
    return [
        np.array([[rng.uniform(lo, hi) for _ in range(m.cols)] for _ in range(m.rows)])
        for m in f.inputs
    ]
