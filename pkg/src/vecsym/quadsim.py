"""Planar thrust-limited quadcopter demonstrator.

One symbolic closed-loop step — LQR gain synthesis from the runtime
parameter vector, thrust clamping, and semi-implicit Euler integration —
compiled to a single tape, then driven in lock-step batches for
region-of-attraction scans and parameter sweeps.

State layout (6): ``z = (p_x, p_y, phi, v_x, v_y, omega)`` — planar
position, body pitch angle, linear velocities, angular rate.

Parameter layout (14): ``theta = (mass, inertia, r_arm, gravity, u_max,
q1..q6, r1, r2, dt)``; see ``THETA_NAMES``.  Every entry is a runtime
input of the step function, so thrust limits, inertial properties, and
controller weights can all vary across a batch without rebuilding.

Planar dynamics:  m v̇_x = -(u1+u2) sin(phi),  m v̇_y = (u1+u2) cos(phi) - m g,
I ω̇ = r_arm (u1 - u2); per-rotor thrust is clamped to [0, u_max]; hover
thrust is m g / 2 per rotor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .batchrt import BatchWorkspace, batch_eval
from .ocpkit import lqr_synthesis
from .symcore import (
    MatrixExpr,
    SymbolicFunction,
    cos,
    diag,
    fmax,
    fmin,
    jacobian,
    sin,
    substitute,
    sym,
    vertcat,
)
from .tape import InstructionTape, flatten

__all__ = [
    "STATE_NAMES",
    "THETA_NAMES",
    "N_STATES",
    "N_CONTROLS",
    "N_THETA",
    "DEFAULT_STEPS",
    "STABILITY_NORM_TOLERANCE",
    "QuadParams",
    "RolloutResult",
    "quad_step",
    "quad_step_tape",
    "rollout_batch",
    "roa_scan",
    "param_sweep",
    "write_roa_csv",
    "write_sweep_csv",
]

STATE_NAMES = ("p_x", "p_y", "phi", "v_x", "v_y", "omega")
THETA_NAMES = (
    "mass",
    "inertia",
    "r_arm",
    "gravity",
    "u_max",
    "q_px",
    "q_py",
    "q_phi",
    "q_vx",
    "q_vy",
    "q_omega",
    "r_u1",
    "r_u2",
    "dt",
)
N_STATES = 6
N_CONTROLS = 2
N_THETA = len(THETA_NAMES)

DEFAULT_STEPS = 500
STABILITY_NORM_TOLERANCE = 1e-2  # on the Q-weighted state norm
LQR_DOUBLING_ITERS = 15


@dataclass(frozen=True)
class QuadParams:
    """Physical constants, thrust limit, and controller weights.

    ``u_max`` defaults to twice the hover thrust (m g / 2 per rotor).
    """

    mass: float = 0.5
    inertia: float = 0.01
    r_arm: float = 0.15
    gravity: float = 9.81
    u_max: float | None = None
    q_diag: tuple = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    r_diag: tuple = (1.0, 1.0)
    dt: float = 0.02

    def __post_init__(self):
        for name in ("mass", "inertia", "r_arm", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.u_max is None:
            object.__setattr__(self, "u_max", 2.0 * self.hover_thrust)
        if self.u_max < 0:
            raise ValueError(f"u_max must be >= 0, got {self.u_max}")
        if len(self.q_diag) != N_STATES:
            raise ValueError(f"q_diag needs {N_STATES} entries, got {len(self.q_diag)}")
        if len(self.r_diag) != N_CONTROLS:
            raise ValueError(f"r_diag needs {N_CONTROLS} entries, got {len(self.r_diag)}")
        if any(q < 0 for q in self.q_diag):
            raise ValueError("q_diag entries must be >= 0")
        if any(r <= 0 for r in self.r_diag):
            raise ValueError("r_diag entries must be > 0")
        object.__setattr__(self, "q_diag", tuple(float(q) for q in self.q_diag))
        object.__setattr__(self, "r_diag", tuple(float(r) for r in self.r_diag))

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust that exactly cancels gravity."""
        return self.mass * self.gravity / 2.0

    def vector(self) -> np.ndarray:
        """The 14-entry runtime parameter vector (``THETA_NAMES`` order)."""
        return np.array(
            [self.mass, self.inertia, self.r_arm, self.gravity, self.u_max,
             *self.q_diag, *self.r_diag, self.dt]
        )

    def replace_entry(self, name: str, value: float) -> np.ndarray:
        """``vector()`` with one named entry overridden (for sweeps)."""
        vec = self.vector()
        vec[theta_index(name)] = value
        return vec


def theta_index(name: str) -> int:
    try:
        return THETA_NAMES.index(name)
    except ValueError:
        raise ValueError(
            f"unknown parameter {name!r}; expected one of {', '.join(THETA_NAMES)}"
        ) from None


@dataclass(frozen=True)
class RolloutResult:
    """Batched closed-loop rollout.

    trajectory: (batch, steps+1, 6) including the initial state;
    inputs: (batch, steps, 2) applied rotor thrusts; stable: (batch,)
    final Q-weighted norm below ``STABILITY_NORM_TOLERANCE``;
    final_norm: (batch,) that norm.
    """

    trajectory: np.ndarray
    inputs: np.ndarray
    stable: np.ndarray
    final_norm: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.trajectory.shape[0]

    @property
    def steps(self) -> int:
        return self.inputs.shape[1]


def _accelerations(z, u, mass, inertia, r_arm, gravity):
    thrust = u[0] + u[1]
    a_x = -(thrust * sin(z[2])) / mass
    a_y = (thrust * cos(z[2])) / mass - gravity
    alpha = (r_arm * (u[0] - u[1])) / inertia
    return a_x, a_y, alpha


def _semi_implicit_step(z, u, mass, inertia, r_arm, gravity, dt):
    """Velocities first, then positions advanced with the *new* velocities."""
    a_x, a_y, alpha = _accelerations(z, u, mass, inertia, r_arm, gravity)
    v_x = z[3] + dt * a_x
    v_y = z[4] + dt * a_y
    omega = z[5] + dt * alpha
    p_x = z[0] + dt * v_x
    p_y = z[1] + dt * v_y
    phi = z[2] + dt * omega
    return vertcat([p_x, p_y, phi, v_x, v_y, omega])


def quad_step() -> SymbolicFunction:
    """The closed-loop step as one function (z, theta) -> (z_next, u).

    The LQR gain is synthesized *inside* the graph from theta: the step map
    is differentiated at hover to get the local linear model, a fixed
    doubling recurrence solves the Riccati equation, and the resulting gain
    closes the loop through a branch-free thrust clamp.  One build covers
    every parameterization.
    """
    z = sym("z", N_STATES)
    theta = sym("theta", N_THETA)
    mass, inertia, r_arm, gravity, u_max = (theta[i] for i in range(5))
    q_weights = theta[5:11]
    r_weights = theta[11:13]
    dt = theta[13]
    hover = mass * gravity / 2.0

    u_free = sym("u_free", N_CONTROLS)
    step_free = _semi_implicit_step(z, u_free, mass, inertia, r_arm, gravity, dt)
    A_hover, B_hover = substitute(
        [jacobian(step_free, z), jacobian(step_free, u_free)],
        {z: MatrixExpr.zeros(N_STATES, 1), u_free: vertcat([hover, hover])},
    )
    _, gain = lqr_synthesis(
        A_hover, B_hover, diag(q_weights), diag(r_weights), iters=LQR_DOUBLING_ITERS
    )

    u_cmd = vertcat([hover, hover]) - gain @ z
    u = fmax(0.0, fmin(u_cmd, u_max))
    z_next = _semi_implicit_step(z, u, mass, inertia, r_arm, gravity, dt)
    return SymbolicFunction("quad_step", [z, theta], [z_next, u])


_TAPE_CACHE: list[InstructionTape] = []


def quad_step_tape() -> InstructionTape:
    """Flattened ``quad_step`` (built once per process and reused)."""
    if not _TAPE_CACHE:
        _TAPE_CACHE.append(flatten(quad_step()))
    return _TAPE_CACHE[0]


def _as_batch(arr, width: int, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{what} must have shape (batch, {width}), got {arr.shape}")
    return arr


def _theta_batch(theta, batch: int) -> np.ndarray:
    if isinstance(theta, QuadParams):
        theta = theta.vector()
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (batch, N_THETA))
    theta = _as_batch(theta, N_THETA, "theta")
    if theta.shape[0] == 1 and batch > 1:
        theta = np.broadcast_to(theta, (batch, N_THETA))
    return theta


def _weighted_norm(z: np.ndarray, theta: np.ndarray) -> np.ndarray:
    q = theta[:, 5:11]
    return np.sqrt(np.sum(q * z * z, axis=1))


def rollout_batch(
    z0,
    theta,
    steps: int = DEFAULT_STEPS,
    tape: InstructionTape | None = None,
    n_threads: int | None = None,
) -> RolloutResult:
    """Roll the closed loop ``steps`` steps for a batch of (z0, theta).

    ``z0``: (batch, 6) or (6,); ``theta``: QuadParams, (14,), or (batch, 14)
    — a single parameterization broadcasts across the batch.  Records full
    trajectories; for trajectory-free stability classification over large
    batches use ``roa_scan``.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    z0 = _as_batch(z0, N_STATES, "z0")
    batch = z0.shape[0]
    theta = _theta_batch(theta, batch)
    if theta.shape[0] != batch:
        raise ValueError(
            f"batch mismatch: {batch} initial states vs {theta.shape[0]} parameter rows"
        )
    tape = tape if tape is not None else quad_step_tape()

    ws = BatchWorkspace(tape, batch)
    ws.set_input(0, z0)
    ws.set_input(1, theta)
    z_in = ws.input_matrix(0)
    trajectory = np.empty((batch, steps + 1, N_STATES))
    inputs = np.empty((batch, steps, N_CONTROLS))
    trajectory[:, 0] = z0
    for s in range(steps):
        batch_eval(tape, ws, n_threads=n_threads)
        z_out = ws.output_matrix(0)
        trajectory[:, s + 1] = z_out
        inputs[:, s] = ws.output_matrix(1)
        np.copyto(z_in, z_out)
    final_norm = _weighted_norm(trajectory[:, steps], theta)
    return RolloutResult(
        trajectory=trajectory,
        inputs=inputs,
        stable=final_norm < STABILITY_NORM_TOLERANCE,
        final_norm=final_norm,
    )


def controls_at(z, theta, tape: InstructionTape | None = None) -> np.ndarray:
    """Clamped rotor thrusts the controller would apply at the given states."""
    z = _as_batch(z, N_STATES, "z")
    theta = _theta_batch(theta, z.shape[0])
    tape = tape if tape is not None else quad_step_tape()
    ws = BatchWorkspace(tape, z.shape[0])
    ws.set_input(0, z)
    ws.set_input(1, theta)
    batch_eval(tape, ws)
    return ws.output_matrix(1).copy()


def roa_scan(
    momentum_x,
    momentum_omega,
    u_max_values,
    params: QuadParams | None = None,
    steps: int = DEFAULT_STEPS,
    tape: InstructionTape | None = None,
    n_threads: int | None = None,
) -> list[np.ndarray]:
    """Stability masks over an initial-momentum grid, one per thrust limit.

    Initial states have zero position and attitude offsets; the grid sets
    linear momentum ``m * v_x`` and angular momentum ``I * omega``.  All
    (thrust limit, grid cell) rollouts run as one lock-step batch without
    trajectory recording.  Returns boolean (len(momentum_x),
    len(momentum_omega)) masks in ``u_max_values`` order.
    """
    momentum_x = np.asarray(momentum_x, dtype=float).ravel()
    momentum_omega = np.asarray(momentum_omega, dtype=float).ravel()
    u_max_values = np.asarray(u_max_values, dtype=float).ravel()
    if momentum_x.size == 0 or momentum_omega.size == 0 or u_max_values.size == 0:
        raise ValueError("empty grid: momenta and thrust limits must be non-empty")
    params = params if params is not None else QuadParams()
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    tape = tape if tape is not None else quad_step_tape()

    n_x, n_w, n_u = momentum_x.size, momentum_omega.size, u_max_values.size
    cells = n_x * n_w
    batch = n_u * cells
    mx, mw = np.meshgrid(momentum_x, momentum_omega, indexing="ij")
    z0_cell = np.zeros((cells, N_STATES))
    z0_cell[:, 3] = mx.ravel() / params.mass
    z0_cell[:, 5] = mw.ravel() / params.inertia
    z0 = np.tile(z0_cell, (n_u, 1))
    theta = np.tile(params.vector(), (batch, 1))
    theta[:, theta_index("u_max")] = np.repeat(u_max_values, cells)

    ws = BatchWorkspace(tape, batch)
    ws.set_input(0, z0)
    ws.set_input(1, theta)
    z_in = ws.input_matrix(0)
    for _ in range(steps):
        batch_eval(tape, ws, n_threads=n_threads)
        np.copyto(z_in, ws.output_matrix(0))
    final_norm = _weighted_norm(ws.output_matrix(0), theta)
    stable = final_norm < STABILITY_NORM_TOLERANCE
    return [stable[k * cells : (k + 1) * cells].reshape(n_x, n_w) for k in range(n_u)]


def param_sweep(
    param_name: str,
    values,
    z0=None,
    params: QuadParams | None = None,
    steps: int = DEFAULT_STEPS,
    tape: InstructionTape | None = None,
    n_threads: int | None = None,
) -> list[tuple]:
    """Trajectory table for one parameter varied across ``values``.

    Rows are ``(param_name, param_value, step, z1..z6, u1, u2)`` for steps
    0..steps; the final row's thrusts are the controls the policy would
    apply at the final state.  Row count = len(values) * (steps + 1).
    """
    params = params if params is not None else QuadParams()
    idx = theta_index(param_name)
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empty grid: parameter values must be non-empty")
    if z0 is None:
        z0 = np.array([1.0, 0.5, 0.0, 0.0, 0.0, 0.0])  # at rest, off-origin
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.size != N_STATES:
        raise ValueError(f"z0 must have {N_STATES} entries, got {z0.size}")
    tape = tape if tape is not None else quad_step_tape()

    batch = values.size
    theta = np.tile(params.vector(), (batch, 1))
    theta[:, idx] = values
    result = rollout_batch(
        np.tile(z0, (batch, 1)), theta, steps=steps, tape=tape, n_threads=n_threads
    )
    u_final = controls_at(result.trajectory[:, steps], theta, tape=tape)

    rows: list[tuple] = []
    for e in range(batch):
        for s in range(steps + 1):
            u_row = result.inputs[e, s] if s < steps else u_final[e]
            rows.append(
                (param_name, float(values[e]), s, *result.trajectory[e, s], *u_row)
            )
    return rows


def write_roa_csv(path, u_max_values, momentum_x, momentum_omega, masks) -> None:
    """Write stability masks as rows of ``u_max,momentum_x,momentum_omega,stable``."""
    u_max_values = np.asarray(u_max_values, dtype=float).ravel()
    momentum_x = np.asarray(momentum_x, dtype=float).ravel()
    momentum_omega = np.asarray(momentum_omega, dtype=float).ravel()
    if len(masks) != u_max_values.size:
        raise ValueError(f"expected {u_max_values.size} masks, got {len(masks)}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u_max", "momentum_x", "momentum_omega", "stable"])
        for u_max, mask in zip(u_max_values, masks):
            mask = np.asarray(mask)
            if mask.shape != (momentum_x.size, momentum_omega.size):
                raise ValueError(
                    f"mask shape {mask.shape} does not match grid "
                    f"({momentum_x.size}, {momentum_omega.size})"
                )
            for i, mx in enumerate(momentum_x):
                for j, mw in enumerate(momentum_omega):
                    writer.writerow([u_max, mx, mw, int(mask[i, j])])


def write_sweep_csv(path, rows) -> None:
    """Write ``param_sweep`` rows under the fixed sweep header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["param_name", "param_value", "step", "z1", "z2", "z3", "z4", "z5", "z6", "u1", "u2"]
        )
        writer.writerows(rows)
