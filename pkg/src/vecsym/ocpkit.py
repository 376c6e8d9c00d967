"""Fixed-iteration optimal-control solver builders.

Everything here constructs *expressions*, not numbers: transcribing a
trajectory optimization problem into a sparse NLP, assembling SQP subproblem
data symbolically, folding inequalities into a smooth penalty with
activity-reweighting, solving KKT systems by an LDL^T factorization expanded
to scalar operations, and synthesizing LQR gains with a structured doubling
recurrence.  The result of ``fixed_iteration_solver`` is a single
``SymbolicFunction`` with a data-independent operation count — no branches,
no line search, no early exit — so it can be flattened to a tape and run for
thousands of problem instances in lock step.

Conventions: inequality constraints are ``G_ineq(X) <= 0``; equality
constraints ``G_eq(X) = 0`` with the initial condition and dynamics defects
as the leading rows; multipliers enter the Lagrangian as ``J + lam' G_eq``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .symcore import (
    Expr,
    MatrixExpr,
    OpCode,
    SymbolicFunction,
    _coerce,
    _or_zero,
    _sz_add,
    _sz_div,
    _sz_mul,
    _sz_sub,
    apply,
    apply_node,
    const,
    constant,
    dot,
    hessian,
    horzcat,
    jacobian,
    substitute,
    sym,
    vertcat,
)

__all__ = [
    "PIVOT_CLAMP",
    "SolverConfig",
    "OcpSpec",
    "NlpForm",
    "QpData",
    "transcribe",
    "build_qp",
    "ldlt_factor",
    "ldlt_solve",
    "lu_solve",
    "penalty_qp_step",
    "penalty_multipliers",
    "fixed_iteration_solver",
    "lqr_synthesis",
]

# magnitude pivots are pushed away from zero (sign-preserving), keeping every
# division on the factorization path well-defined for any runtime data
PIVOT_CLAMP = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Iteration counts and penalty schedule for the fixed-count solver."""

    M: int = 1
    M_inner: int = 3
    mu0: float = 10.0
    alpha_mu: float = 10.0
    hessian_regularization: float = 1e-6

    def __post_init__(self):
        if self.M < 0:
            raise ValueError(f"M must be >= 0, got {self.M}")
        if self.M_inner < 1:
            raise ValueError(f"M_inner must be >= 1, got {self.M_inner}")
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be > 0, got {self.mu0}")
        if not self.alpha_mu > 1:
            raise ValueError(f"alpha_mu must be > 1, got {self.alpha_mu}")
        if self.hessian_regularization < 0:
            raise ValueError(
                f"hessian_regularization must be >= 0, got {self.hessian_regularization}"
            )


@dataclass(frozen=True)
class OcpSpec:
    """A discrete finite-horizon trajectory optimization problem.

    Builders receive a stage's state and control as column MatrixExprs and
    return expressions over them (plus any symbols in ``parameters``):

    - ``dynamics(x, u)`` -> next state, shape (n_x, 1); stages 0..T-1.
    - ``stage_cost(x, u)`` -> scalar; stages 0..T-1.
    - ``terminal_cost(x, u)`` -> scalar; stage T only.
    - ``stage_eq(x, u)`` / ``stage_ineq(x, u)`` -> column vectors applied at
      every stage 0..T; equalities hold at 0, inequalities as ``<= 0``.

    ``x0`` may be a pristine symbol to use as the initial-state parameter;
    one named ``x0_bar`` is created otherwise.
    """

    n_x: int
    n_u: int
    T: int
    dynamics: Callable[[MatrixExpr, MatrixExpr], MatrixExpr]
    stage_cost: Callable[[MatrixExpr, MatrixExpr], MatrixExpr] | None = None
    terminal_cost: Callable[[MatrixExpr, MatrixExpr], MatrixExpr] | None = None
    stage_eq: Callable[[MatrixExpr, MatrixExpr], MatrixExpr] | None = None
    stage_ineq: Callable[[MatrixExpr, MatrixExpr], MatrixExpr] | None = None
    parameters: tuple = ()
    x0: MatrixExpr | None = None

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 1:
            raise ValueError(
                f"state/control dimensions must be >= 1, got n_x={self.n_x}, n_u={self.n_u}"
            )
        if self.T < 1:
            raise ValueError(f"horizon T must be >= 1, got {self.T}")
        if not callable(self.dynamics):
            raise TypeError("dynamics must be callable")
        if self.x0 is not None and self.x0.shape != (self.n_x, 1):
            raise ValueError(
                f"x0 parameter has shape {self.x0.shape}, expected ({self.n_x}, 1)"
            )


@dataclass(frozen=True)
class NlpForm:
    """Stacked NLP: min J(X) s.t. G_eq(X) = 0, G_ineq(X) <= 0.

    The decision vector is X = (x_0..x_T, u_0..u_T); the initial-condition
    rows x_0 - x0_param and the dynamics defects x_{i+1} - f(x_i, u_i) lead
    G_eq.  ``x0_param`` (and any user parameters) stay symbolic, so one
    built solver serves every problem instance.
    """

    X: MatrixExpr
    J: MatrixExpr
    G_eq: MatrixExpr
    G_ineq: MatrixExpr
    x0_param: MatrixExpr
    parameters: tuple
    n_x: int
    n_u: int
    T: int

    @property
    def N(self) -> int:
        return self.X.rows

    @property
    def M_eq(self) -> int:
        return self.G_eq.rows

    @property
    def M_ineq(self) -> int:
        return self.G_ineq.rows

    def state(self, i: int) -> MatrixExpr:
        """The (n_x, 1) slice of X holding stage i's state."""
        if not 0 <= i <= self.T:
            raise IndexError(f"stage {i} out of range 0..{self.T}")
        return self.X[i * self.n_x : (i + 1) * self.n_x]

    def control(self, i: int) -> MatrixExpr:
        """The (n_u, 1) slice of X holding stage i's control."""
        if not 0 <= i <= self.T:
            raise IndexError(f"stage {i} out of range 0..{self.T}")
        off = (self.T + 1) * self.n_x
        return self.X[off + i * self.n_u : off + (i + 1) * self.n_u]


@dataclass(frozen=True)
class QpData:
    """One SQP subproblem, linearized at the iterate (X_k, lam_k).

    min over steps d:  1/2 d' P d + c' d
    s.t.  A_eq d = b_eq,  A_ineq d <= b_ineq

    P is the regularized Lagrangian Hessian, c the Lagrangian gradient, A
    the constraint Jacobians and b the negated constraint values; every
    entry is an expression of the iterate.  P is symmetric by construction
    (mirrored entries share one node).
    """

    P: MatrixExpr
    c: MatrixExpr
    A_eq: MatrixExpr
    b_eq: MatrixExpr
    A_ineq: MatrixExpr
    b_ineq: MatrixExpr
    X_k: MatrixExpr
    lam_k: MatrixExpr


def _checked_shape(m, shape, what: str) -> MatrixExpr:
    m = _coerce(m)
    if m.shape != shape:
        raise ValueError(f"{what} has shape {m.shape}, expected {shape}")
    return m


def _checked_column(m, what: str) -> MatrixExpr:
    m = _coerce(m)
    if m.cols != 1:
        raise ValueError(f"{what} must be a column vector, got shape {m.shape}")
    return m


def transcribe(spec: OcpSpec) -> NlpForm:
    """Stack an OCP into one sparse NLP over X = (states, controls)."""
    n_x, n_u, T = spec.n_x, spec.n_u, spec.T
    N = (T + 1) * (n_x + n_u)
    X = sym("X", N)
    x0_param = spec.x0 if spec.x0 is not None else sym("x0_bar", n_x)
    xs = [X[i * n_x : (i + 1) * n_x] for i in range(T + 1)]
    off = (T + 1) * n_x
    us = [X[off + i * n_u : off + (i + 1) * n_u] for i in range(T + 1)]

    terms = []
    if spec.stage_cost is not None:
        for i in range(T):
            terms.append(
                _checked_shape(spec.stage_cost(xs[i], us[i]), (1, 1), f"stage {i} cost")
            )
    if spec.terminal_cost is not None:
        terms.append(
            _checked_shape(
                spec.terminal_cost(xs[T], us[T]), (1, 1), f"stage {T} (terminal) cost"
            )
        )
    J = terms[0] if terms else constant(0.0)
    for t in terms[1:]:
        J = J + t

    eq_rows = [xs[0] - x0_param]
    for i in range(T):
        fx = _checked_shape(spec.dynamics(xs[i], us[i]), (n_x, 1), f"stage {i} dynamics")
        eq_rows.append(xs[i + 1] - fx)
    if spec.stage_eq is not None:
        for i in range(T + 1):
            eq_rows.append(
                _checked_column(spec.stage_eq(xs[i], us[i]), f"stage {i} equality constraint")
            )
    G_eq = vertcat(eq_rows)

    in_rows = []
    if spec.stage_ineq is not None:
        for i in range(T + 1):
            in_rows.append(
                _checked_column(
                    spec.stage_ineq(xs[i], us[i]), f"stage {i} inequality constraint"
                )
            )
    G_ineq = vertcat(in_rows) if in_rows else MatrixExpr.zeros(0, 1)

    return NlpForm(
        X=X,
        J=J,
        G_eq=G_eq,
        G_ineq=G_ineq,
        x0_param=x0_param,
        parameters=tuple(spec.parameters),
        n_x=n_x,
        n_u=n_u,
        T=T,
    )


def build_qp(
    nlp: NlpForm,
    X_k: MatrixExpr | None = None,
    lam_k: MatrixExpr | None = None,
    config: SolverConfig | None = None,
) -> QpData:
    """Quadratic subproblem data at an iterate, as symbolic expressions.

    ``X_k`` / ``lam_k`` default to fresh symbols ("X_k", "lam_k"); they may
    be arbitrary expressions (e.g. the previous iteration's update) so that
    subproblems chain into one graph.
    """
    cfg = config if config is not None else SolverConfig()
    N, M_eq = nlp.N, nlp.M_eq
    if X_k is None:
        X_k = sym("X_k", N)
    if lam_k is None:
        lam_k = sym("lam_k", M_eq) if M_eq else MatrixExpr.zeros(0, 1)
    X_k = _coerce(X_k)
    lam_k = _coerce(lam_k)
    if X_k.shape != (N, 1):
        raise ValueError(f"iterate X_k has shape {X_k.shape}, expected ({N}, 1)")
    if lam_k.shape != (M_eq, 1):
        raise ValueError(
            f"multipliers lam_k have shape {lam_k.shape}, expected ({M_eq}, 1)"
        )

    lam_tmpl = sym("lam_tmpl", M_eq) if M_eq else MatrixExpr.zeros(0, 1)
    L = nlp.J + dot(lam_tmpl, nlp.G_eq) if M_eq else nlp.J
    P = hessian(L, nlp.X)
    if cfg.hessian_regularization:
        P = P + MatrixExpr.eye(N) * cfg.hessian_regularization
    c = jacobian(L, nlp.X).T
    A_eq = jacobian(nlp.G_eq, nlp.X)
    b_eq = -nlp.G_eq
    A_ineq = jacobian(nlp.G_ineq, nlp.X)
    b_ineq = -nlp.G_ineq

    mapping = {nlp.X.owner_symbol(): X_k}
    if M_eq:
        mapping[lam_tmpl.owner_symbol()] = lam_k
    P, c, A_eq, b_eq, A_ineq, b_ineq = substitute(
        [P, c, A_eq, b_eq, A_ineq, b_ineq], mapping
    )
    return QpData(
        P=P, c=c, A_eq=A_eq, b_eq=b_eq, A_ineq=A_ineq, b_ineq=b_ineq,
        X_k=X_k, lam_k=lam_k,
    )


# ---------------------------------------------------------------------------
# Symbolic linear solves
# ---------------------------------------------------------------------------


def _clamped(d: Expr | None) -> Expr:
    """Sign-preserving push of a pivot away from zero: |result| >= PIVOT_CLAMP."""
    dn = _or_zero(d)
    return apply_node(
        OpCode.IF_ELSE,
        apply_node(OpCode.STEP, dn),
        apply_node(OpCode.FMAX, dn, const(PIVOT_CLAMP)),
        apply_node(OpCode.FMIN, dn, const(-PIVOT_CLAMP)),
    )


def _require_square(K: MatrixExpr, what: str) -> MatrixExpr:
    K = _coerce(K)
    if K.rows != K.cols:
        raise ValueError(f"{what} must be square, got shape {K.shape}")
    return K


def ldlt_factor(K: MatrixExpr) -> tuple[MatrixExpr, MatrixExpr]:
    """Root-free Cholesky-style factorization K = L D L' as expressions.

    K must be structurally symmetric; only its lower triangle is read, so
    mirrored entries may be distinct nodes.  Returns unit-lower-triangular L
    and diagonal D of clamped pivots.  Works for quasi-definite K (e.g. KKT
    matrices), where D carries both signs.
    """
    K = _require_square(K, "ldlt_factor matrix")
    for r, c in K.sparsity.coords():
        if K.sparsity.index_of(c, r) < 0:
            raise ValueError(
                f"matrix sparsity is not symmetric: entry ({r},{c}) has no mirror ({c},{r})"
            )
    n = K.rows
    if n == 0:
        return MatrixExpr.zeros(0, 0), MatrixExpr.zeros(0, 0)
    G = K.to_grid()
    L: list[list[Expr | None]] = [[None] * n for _ in range(n)]
    d: list[Expr] = []
    for j in range(n):
        acc = G[j][j]
        for k in range(j):
            acc = _sz_sub(acc, _sz_mul(_sz_mul(L[j][k], L[j][k]), d[k]))
        dj = _clamped(acc)
        d.append(dj)
        for i in range(j + 1, n):
            num = G[i][j]
            for k in range(j):
                num = _sz_sub(num, _sz_mul(_sz_mul(L[i][k], L[j][k]), d[k]))
            L[i][j] = _sz_div(num, dj)
    for i in range(n):
        L[i][i] = const(1.0)
    Lm = MatrixExpr.from_grid(L)
    Dm = MatrixExpr.from_grid(
        [[d[i] if i == j else None for j in range(n)] for i in range(n)]
    )
    return Lm, Dm


def ldlt_solve(K: MatrixExpr, r: MatrixExpr) -> MatrixExpr:
    """Symbolic x with K x = r via the LDL' factorization (r may be n x m)."""
    K = _require_square(K, "ldlt_solve matrix")
    r = _coerce(r)
    if r.rows != K.rows:
        raise ValueError(f"right-hand side has {r.rows} rows, matrix has {K.rows}")
    n = K.rows
    if n == 0 or r.cols == 0:
        return MatrixExpr.zeros(n, r.cols)
    Lm, Dm = ldlt_factor(K)
    L = Lm.to_grid()
    d = [Dm.element(i, i) for i in range(n)]
    R = r.to_grid()
    out: list[list[Expr | None]] = [[None] * r.cols for _ in range(n)]
    for c in range(r.cols):
        z: list[Expr | None] = [None] * n
        for i in range(n):
            acc = R[i][c]
            for k in range(i):
                acc = _sz_sub(acc, _sz_mul(L[i][k], z[k]))
            z[i] = acc
        x: list[Expr | None] = [None] * n
        for i in range(n - 1, -1, -1):
            acc = _sz_div(z[i], d[i])
            for k in range(i + 1, n):
                acc = _sz_sub(acc, _sz_mul(L[k][i], x[k]))
            x[i] = acc
        for i in range(n):
            out[i][c] = x[i]
    return MatrixExpr.from_grid(out)


def lu_solve(W: MatrixExpr, r: MatrixExpr) -> MatrixExpr:
    """Symbolic x with W x = r for general square W (no symmetry assumed).

    Doolittle elimination without row exchanges (branch-free); pivots are
    clamped like ldlt_solve's.  Intended for well-conditioned matrices such
    as the doubling recurrence's I + G H.
    """
    W = _require_square(W, "lu_solve matrix")
    r = _coerce(r)
    if r.rows != W.rows:
        raise ValueError(f"right-hand side has {r.rows} rows, matrix has {W.rows}")
    n = W.rows
    if n == 0 or r.cols == 0:
        return MatrixExpr.zeros(n, r.cols)
    G = W.to_grid()
    U: list[list[Expr | None]] = [[None] * n for _ in range(n)]
    L: list[list[Expr | None]] = [[None] * n for _ in range(n)]
    piv: list[Expr] = []
    for k in range(n):
        for j in range(k, n):
            acc = G[k][j]
            for t in range(k):
                acc = _sz_sub(acc, _sz_mul(L[k][t], U[t][j]))
            U[k][j] = acc
        pk = _clamped(U[k][k])
        piv.append(pk)
        for i in range(k + 1, n):
            acc = G[i][k]
            for t in range(k):
                acc = _sz_sub(acc, _sz_mul(L[i][t], U[t][k]))
            L[i][k] = _sz_div(acc, pk)
    R = r.to_grid()
    out: list[list[Expr | None]] = [[None] * r.cols for _ in range(n)]
    for c in range(r.cols):
        y: list[Expr | None] = [None] * n
        for i in range(n):
            acc = R[i][c]
            for t in range(i):
                acc = _sz_sub(acc, _sz_mul(L[i][t], y[t]))
            y[i] = acc
        x: list[Expr | None] = [None] * n
        for i in range(n - 1, -1, -1):
            acc = y[i]
            for t in range(i + 1, n):
                acc = _sz_sub(acc, _sz_mul(U[i][t], x[t]))
            x[i] = _sz_div(acc, piv[i])
        for i in range(n):
            out[i][c] = x[i]
    return MatrixExpr.from_grid(out)


def _mirror_lower(M: MatrixExpr) -> MatrixExpr:
    """Force exact structural symmetry: upper entries reuse the lower's nodes."""
    if M.rows == 0:
        return MatrixExpr.zeros(*M.shape)
    g = M.to_grid()
    for i in range(M.rows):
        for j in range(i + 1, M.cols):
            g[i][j] = g[j][i]
    return MatrixExpr.from_grid(g)


def _weighted_gram(A: MatrixExpr, w: MatrixExpr) -> MatrixExpr:
    """A' diag(w) A with mirrored entries sharing nodes (exact symmetry)."""
    m, n = A.rows, A.cols
    Ag = A.to_grid()
    wg = [w.element(k, 0) for k in range(m)]
    out: list[list[Expr | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            acc: Expr | None = None
            for k in range(m):
                acc = _sz_add(acc, _sz_mul(_sz_mul(wg[k], Ag[k][i]), Ag[k][j]))
            out[i][j] = acc
            out[j][i] = acc
    return MatrixExpr.from_grid(out)


# ---------------------------------------------------------------------------
# Penalty SQP step
# ---------------------------------------------------------------------------


def penalty_qp_step(
    qp: QpData,
    mu,
    config: SolverConfig | None = None,
) -> tuple[MatrixExpr, MatrixExpr]:
    """One equality-constrained solve of the penalized QP; branch-free.

    Inequalities enter as mu * sum_i max(0, a_i'd - b_i)^2.  The piecewise
    quadratic is minimized by ``config.M_inner`` fixed activity-reweighting
    rounds: weights w_i = step(a_i'd_prev - b_i) freeze the active set, the
    weighted rows augment the Hessian and gradient, and the resulting KKT
    system is solved by ``ldlt_solve``.  Returns (step d, equality
    multipliers nu).
    """
    cfg = config if config is not None else SolverConfig()
    mu = _coerce(mu)
    if not mu.is_scalar():
        raise ValueError(f"mu must be scalar, got shape {mu.shape}")
    N = qp.P.rows
    M_eq = qp.A_eq.rows
    two_mu = mu * 2.0

    delta: MatrixExpr = MatrixExpr.zeros(N, 1)
    nu: MatrixExpr = MatrixExpr.zeros(M_eq, 1)
    for _ in range(cfg.M_inner):
        if qp.A_ineq.rows:
            resid = qp.A_ineq @ delta - qp.b_ineq
            w = apply(OpCode.STEP, resid)
            P_aug = qp.P + two_mu * _weighted_gram(qp.A_ineq, w)
            c_aug = qp.c - two_mu * (qp.A_ineq.T @ (w * qp.b_ineq))
        else:
            P_aug, c_aug = qp.P, qp.c
        if M_eq:
            KKT = vertcat(
                [
                    horzcat([P_aug, qp.A_eq.T]),
                    horzcat([qp.A_eq, MatrixExpr.zeros(M_eq, M_eq)]),
                ]
            )
            rhs = vertcat([-c_aug, qp.b_eq])
            sol = ldlt_solve(KKT, rhs)
            delta = sol[0:N]
            nu = sol[N : N + M_eq]
        else:
            delta = ldlt_solve(P_aug, -c_aug)
    return delta, nu


def penalty_multipliers(qp: QpData, delta: MatrixExpr, mu) -> MatrixExpr:
    """Diagnostic inequality multipliers 2 mu max(0, A_ineq d - b_ineq)."""
    mu = _coerce(mu)
    if qp.A_ineq.rows == 0:
        return MatrixExpr.zeros(0, 1)
    resid = qp.A_ineq @ _coerce(delta) - qp.b_ineq
    return (mu * 2.0) * apply(OpCode.FMAX, constant(0.0), resid)


# ---------------------------------------------------------------------------
# Fixed-iteration SQP solver
# ---------------------------------------------------------------------------


def fixed_iteration_solver(
    nlp: NlpForm, config: SolverConfig | None = None, name: str = "sqp_solver"
) -> SymbolicFunction:
    """Unroll M full SQP iterations into one function H(X0, lam0, params).

    Each iteration linearizes at the current iterate, solves the penalized
    subproblem with mu_k = mu0 * alpha_mu**k, and takes the full step.  The
    returned function's outputs are the final iterate and multipliers; its
    instruction count depends only on problem dimensions and (M, M_inner),
    never on runtime data.  NLPs without equality rows drop the multiplier
    input and output (zero-sized symbols cannot be declared).
    """
    cfg = config if config is not None else SolverConfig()
    N, M_eq = nlp.N, nlp.M_eq
    X0 = sym("X0", N)
    lam0 = sym("lam0", M_eq) if M_eq else MatrixExpr.zeros(0, 1)
    X_cur, lam_cur = X0, lam0
    for k in range(cfg.M):
        qp = build_qp(nlp, X_cur, lam_cur, cfg)
        delta, nu = penalty_qp_step(qp, cfg.mu0 * cfg.alpha_mu**k, cfg)
        X_cur = X_cur + delta
        lam_cur = lam_cur + nu
    inputs = [X0, *([lam0] if M_eq else []), nlp.x0_param, *nlp.parameters]
    outputs = [X_cur, *([lam_cur] if M_eq else [])]
    return SymbolicFunction(name, inputs, outputs)


# ---------------------------------------------------------------------------
# LQR synthesis by structured doubling
# ---------------------------------------------------------------------------


def lqr_synthesis(A, B, Q, R, iters: int = 15) -> tuple[MatrixExpr, MatrixExpr]:
    """Discrete-time LQR cost-to-go S and gain K as expressions.

    Runs a fixed number of structured doubling steps, each of which squares
    the effective horizon (10-15 iterations reach fixed point for any
    reasonably conditioned stabilizable system):

        A+ = A (I + G H)^-1 A
        G+ = G + A (I + G H)^-1 G A'
        H+ = H + A' H (I + G H)^-1 A

    with G_0 = B R^-1 B', H_0 = Q.  Then S = H_iters and
    K = (R + B' S B)^-1 B' S A, so the optimal control is u = -K x.  All
    entries may be runtime parameters.
    """
    A, B, Q, R = (_coerce(m) for m in (A, B, Q, R))
    A = _require_square(A, "state matrix A")
    n = A.rows
    if B.rows != n:
        raise ValueError(f"input matrix B has {B.rows} rows, expected {n}")
    m = B.cols
    Q = _require_square(Q, "state weight Q")
    R = _require_square(R, "control weight R")
    if Q.rows != n:
        raise ValueError(f"state weight Q is {Q.shape}, expected ({n}, {n})")
    if R.rows != m:
        raise ValueError(f"control weight R is {R.shape}, expected ({m}, {m})")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")

    eye_n = MatrixExpr.eye(n)
    G = _mirror_lower(B @ ldlt_solve(R, B.T))
    H = Q
    Ak = A
    for _ in range(iters):
        W = eye_n + G @ H
        X1 = lu_solve(W, Ak)
        X2 = lu_solve(W, G)
        Ak, G, H = (
            Ak @ X1,
            _mirror_lower(G + Ak @ (X2 @ Ak.T)),
            _mirror_lower(H + Ak.T @ (H @ X1)),
        )
    S = H
    K = ldlt_solve(R + _mirror_lower(B.T @ (S @ B)), B.T @ (S @ A))
    return S, K
