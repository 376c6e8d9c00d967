"""Quadcopter demonstrator: exact hover/free-fall behavior, clamping,
batched rollouts, stability scans, parameter sweeps, and CSV outputs."""

import csv
import math

import numpy as np
import pytest

from vecsym import quadsim as qs
from vecsym.quadsim import QuadParams

pytestmark = pytest.mark.filterwarnings("error")


@pytest.fixture(scope="module")
def step_fn():
    return qs.quad_step()


@pytest.fixture(scope="module")
def tape():
    return qs.quad_step_tape()


def numpy_step(z, u, theta):
    """Independent reimplementation of the open-loop step (given thrusts)."""
    mass, inertia, r_arm, gravity = theta[0], theta[1], theta[2], theta[3]
    dt = theta[13]
    thrust = u[0] + u[1]
    a_x = -(thrust * math.sin(z[2])) / mass
    a_y = (thrust * math.cos(z[2])) / mass - gravity
    alpha = (r_arm * (u[0] - u[1])) / inertia
    v_x = z[3] + dt * a_x
    v_y = z[4] + dt * a_y
    omega = z[5] + dt * alpha
    return np.array(
        [z[0] + dt * v_x, z[1] + dt * v_y, z[2] + dt * omega, v_x, v_y, omega]
    )


# ---------------------------------------------------------------- parameters


def test_defaults():
    p = QuadParams()
    assert p.mass == 0.5 and p.inertia == 0.01 and p.r_arm == 0.15
    assert p.gravity == 9.81 and p.dt == 0.02
    assert p.q_diag == (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    assert p.r_diag == (1.0, 1.0)
    assert p.hover_thrust == 0.5 * 9.81 / 2.0
    assert p.u_max == 2.0 * p.hover_thrust


def test_vector_layout():
    p = QuadParams()
    vec = p.vector()
    assert vec.shape == (qs.N_THETA,)
    assert vec[qs.theta_index("mass")] == p.mass
    assert vec[qs.theta_index("dt")] == p.dt
    assert tuple(vec[5:11]) == p.q_diag
    assert tuple(vec[11:13]) == p.r_diag


@pytest.mark.parametrize(
    "kwargs",
    [
        {"mass": 0.0},
        {"mass": -1.0},
        {"inertia": 0.0},
        {"r_arm": -0.1},
        {"dt": 0.0},
        {"u_max": -0.5},
        {"q_diag": (1.0,) * 5},
        {"q_diag": (1.0, 1.0, 1.0, 1.0, 1.0, -1.0)},
        {"r_diag": (1.0,)},
        {"r_diag": (1.0, 0.0)},
    ],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        QuadParams(**kwargs)


def test_theta_index_unknown_name():
    with pytest.raises(ValueError, match="unknown parameter"):
        qs.theta_index("q_x")


def test_replace_entry():
    p = QuadParams()
    vec = p.replace_entry("u_max", 7.5)
    assert vec[4] == 7.5
    base = p.vector()
    vec[4] = base[4]
    assert np.array_equal(vec, base)


# ---------------------------------------------------------- exact step facts


def test_hover_is_exact_fixed_point(step_fn):
    p = QuadParams()
    z_next, u = step_fn.eval(np.zeros(6), p.vector())
    assert np.array_equal(z_next.ravel(), np.zeros(6))
    assert np.array_equal(u.ravel(), np.full(2, p.hover_thrust))


def test_hover_exact_for_any_power_of_two_mass(step_fn):
    # mass scaling by powers of two keeps the hover algebra exact
    for mass in (0.25, 0.5, 1.0, 2.0):
        p = QuadParams(mass=mass)
        z_next, u = step_fn.eval(np.zeros(6), p.vector())
        assert np.array_equal(z_next.ravel(), np.zeros(6)), mass
        assert np.array_equal(u.ravel(), np.full(2, p.hover_thrust)), mass


def test_free_fall_first_step(step_fn):
    p = QuadParams(u_max=0.0)
    z_next, u = step_fn.eval(np.zeros(6), p.vector())
    z_next = z_next.ravel()
    v_y_expected = p.dt * -p.gravity
    assert z_next[4] == v_y_expected
    assert z_next[1] == p.dt * v_y_expected  # position uses the updated velocity
    assert np.array_equal(u.ravel(), np.zeros(2))
    assert np.array_equal(z_next[[0, 2, 3, 5]], np.zeros(4))


def test_free_fall_recurrence_bitwise(tape):
    p = QuadParams(u_max=0.0)
    res = qs.rollout_batch(np.zeros(6), p, steps=8, tape=tape)
    v_y = res.trajectory[0, :, 4]
    p_y = res.trajectory[0, :, 1]
    assert np.array_equal(v_y[1:], v_y[:-1] + p.dt * -p.gravity)
    assert np.array_equal(p_y[1:], p_y[:-1] + p.dt * v_y[1:])
    assert np.array_equal(res.inputs[0], np.zeros((8, 2)))


def test_dynamics_match_independent_step(tape):
    # replay recorded thrusts through a hand-written step; states must agree
    rng = np.random.default_rng(3)
    z0 = rng.normal(scale=0.2, size=6)
    p = QuadParams()
    res = qs.rollout_batch(z0, p, steps=25, tape=tape)
    theta = p.vector()
    z = z0
    for s in range(25):
        z = numpy_step(z, res.inputs[0, s], theta)
        assert np.array_equal(z, res.trajectory[0, s + 1]), s


def test_equilibrium_invariance(tape):
    p = QuadParams()
    res = qs.rollout_batch(np.zeros(6), p, steps=100, tape=tape)
    assert np.array_equal(res.trajectory, np.zeros((1, 101, 6)))
    assert np.array_equal(res.inputs, np.full((1, 100, 2), p.hover_thrust))
    assert res.stable[0] and res.final_norm[0] == 0.0


def test_clamp_records_limit_exactly(tape):
    p = QuadParams(u_max=2.6)
    res = qs.rollout_batch(np.array([0.0, -1.0, 0, 0, 0, 0]), p, steps=50, tape=tape)
    u = res.inputs[0]
    assert np.any(u == 2.6)
    assert u.max() == 2.6
    assert np.all(u <= 2.6) and np.all(u >= 0.0)


def test_clamp_floor_is_exact_zero(tape):
    # starting far above the goal, the controller cuts thrust to exactly zero
    p = QuadParams()
    res = qs.rollout_batch(np.array([0.0, 3.0, 0, 0, 0, 0]), p, steps=5, tape=tape)
    assert np.any(res.inputs[0] == 0.0)


def test_local_stability_small_perturbation(tape):
    p = QuadParams()
    z0 = np.array([1e-3, 1e-3, 1e-3, 0.0, 0.0, 0.0])
    res = qs.rollout_batch(z0, p, steps=500, tape=tape)
    assert np.linalg.norm(res.trajectory[0, -1]) < np.linalg.norm(z0)
    assert res.stable[0]


def test_final_norm_is_q_weighted(tape):
    p = QuadParams(q_diag=(4.0, 1.0, 9.0, 1.0, 1.0, 16.0))
    res = qs.rollout_batch(np.array([0.3, 0.1, 0.05, 0, 0, 0]), p, steps=3, tape=tape)
    z_T = res.trajectory[0, -1]
    q = np.array(p.q_diag)
    assert res.final_norm[0] == np.sqrt(np.sum(q * z_T * z_T))


# ------------------------------------------------------------------ rollouts


def test_rollout_shapes(tape):
    res = qs.rollout_batch(np.zeros((4, 6)), QuadParams(), steps=12, tape=tape)
    assert res.trajectory.shape == (4, 13, 6)
    assert res.inputs.shape == (4, 12, 2)
    assert res.stable.shape == (4,) and res.final_norm.shape == (4,)
    assert res.batch_size == 4 and res.steps == 12


def test_rollout_batch_matches_serial_reference(step_fn, tape):
    rng = np.random.default_rng(7)
    batch = 10
    z0 = rng.normal(scale=0.3, size=(batch, 6))
    theta = np.tile(QuadParams().vector(), (batch, 1))
    theta[:, qs.theta_index("u_max")] = rng.uniform(2.5, 9.0, size=batch)
    theta[:, qs.theta_index("mass")] = rng.uniform(0.3, 0.8, size=batch)
    res = qs.rollout_batch(z0, theta, steps=40, tape=tape)
    for e in range(batch):
        z = z0[e]
        for s in range(40):
            z_next, u = step_fn.eval(z, theta[e])
            z = z_next.ravel()
            assert np.array_equal(z, res.trajectory[e, s + 1])
            assert np.array_equal(u.ravel(), res.inputs[e, s])


def test_rollout_theta_broadcast(tape):
    z0 = np.zeros((3, 6))
    by_params = qs.rollout_batch(z0, QuadParams(), steps=4, tape=tape)
    by_vector = qs.rollout_batch(z0, QuadParams().vector(), steps=4, tape=tape)
    assert np.array_equal(by_params.trajectory, by_vector.trajectory)


@pytest.mark.parametrize(
    "z0, theta_rows, steps, message",
    [
        (np.zeros((2, 5)), 2, 3, "shape"),
        (np.zeros((2, 6)), 3, 3, "batch mismatch"),
        (np.zeros(6), 1, 0, "steps"),
    ],
)
def test_rollout_input_validation(tape, z0, theta_rows, steps, message):
    theta = np.tile(QuadParams().vector(), (theta_rows, 1))
    with pytest.raises(ValueError, match=message):
        qs.rollout_batch(z0, theta, steps=steps, tape=tape)


# ----------------------------------------------------------------- roa scans


def test_roa_origin_stable_when_hover_feasible(tape):
    p = QuadParams()
    limits = [k * p.hover_thrust for k in (1.0, 2.0, 4.0, 8.0)]
    masks = qs.roa_scan([0.0], [0.0], limits, params=p, steps=500, tape=tape)
    assert len(masks) == 4
    assert all(mask.shape == (1, 1) and mask.dtype == bool for mask in masks)
    assert all(mask[0, 0] for mask in masks)


def test_roa_all_unstable_below_hover(tape):
    p = QuadParams()
    masks = qs.roa_scan(
        np.linspace(-1.0, 1.0, 3),
        np.linspace(-0.02, 0.02, 3),
        [0.9 * p.hover_thrust],
        params=p,
        steps=500,
        tape=tape,
    )
    assert not masks[0].any()


def test_roa_matches_rollout_classification(tape):
    p = QuadParams()
    mx = np.linspace(-2.0, 2.0, 3)
    mw = np.linspace(-0.05, 0.05, 3)
    masks = qs.roa_scan(mx, mw, [p.u_max], params=p, steps=150, tape=tape)
    grid_x, grid_w = np.meshgrid(mx, mw, indexing="ij")
    z0 = np.zeros((9, 6))
    z0[:, 3] = grid_x.ravel() / p.mass
    z0[:, 5] = grid_w.ravel() / p.inertia
    res = qs.rollout_batch(z0, p, steps=150, tape=tape)
    assert np.array_equal(masks[0].ravel(), res.stable)


def test_roa_basin_grows_with_thrust_limit(tape):
    p = QuadParams()
    mx = np.linspace(-2.5, 2.5, 5)
    mw = np.linspace(-0.06, 0.06, 5)
    masks = qs.roa_scan(
        mx, mw, [2 * p.hover_thrust, 8 * p.hover_thrust], params=p, steps=500, tape=tape
    )
    assert masks[1].sum() >= masks[0].sum()
    assert np.all(masks[1] | ~masks[0])  # cellwise: stable stays stable


@pytest.mark.parametrize(
    "mx, mw, limits",
    [([], [0.0], [1.0]), ([0.0], [], [1.0]), ([0.0], [0.0], [])],
)
def test_roa_empty_grid_rejected(tape, mx, mw, limits):
    with pytest.raises(ValueError, match="empty grid"):
        qs.roa_scan(mx, mw, limits, tape=tape)


# -------------------------------------------------------------------- sweeps


def test_sweep_nominal_equals_single_rollout(tape):
    p = QuadParams()
    z0 = np.array([1.0, 0.5, 0.0, 0.0, 0.0, 0.0])
    rows = qs.param_sweep("mass", [p.mass], z0=z0, params=p, steps=30, tape=tape)
    res = qs.rollout_batch(z0, p, steps=30, tape=tape)
    assert len(rows) == 31
    states = np.array([row[3:9] for row in rows])
    thrusts = np.array([row[9:11] for row in rows])
    assert np.array_equal(states, res.trajectory[0])
    assert np.array_equal(thrusts[:-1], res.inputs[0])
    final_u = qs.controls_at(res.trajectory[:, 30], p.vector(), tape=tape)
    assert np.array_equal(thrusts[-1], final_u[0])
    assert all(row[0] == "mass" and row[1] == p.mass for row in rows)
    assert [row[2] for row in rows] == list(range(31))


def test_sweep_row_count(tape):
    rows = qs.param_sweep("u_max", [3.0, 5.0, 9.0], steps=7, tape=tape)
    assert len(rows) == 3 * 8


def test_sweep_position_weight_increases_overshoot(tape):
    # a stiffer position loop digs deeper past the origin before settling
    z0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    values = [5.0, 10.0, 20.0, 40.0, 80.0]
    rows = qs.param_sweep("q_px", values, z0=z0, steps=400, tape=tape)
    table = np.array([(row[1], row[3]) for row in rows])
    overshoots = []
    for value in values:
        p_x = table[table[:, 0] == value, 1]
        overshoots.append(-p_x.min())
    assert all(b > a for a, b in zip(overshoots, overshoots[1:]))
    assert overshoots[0] > 0.0


def test_sweep_validation(tape):
    with pytest.raises(ValueError, match="unknown parameter"):
        qs.param_sweep("lift", [1.0], tape=tape)
    with pytest.raises(ValueError, match="empty grid"):
        qs.param_sweep("mass", [], tape=tape)
    with pytest.raises(ValueError, match="z0"):
        qs.param_sweep("mass", [0.5], z0=np.zeros(5), tape=tape)


# ----------------------------------------------------------------- csv files


def test_roa_csv_format(tmp_path, tape):
    p = QuadParams()
    mx = [-1.0, 0.0, 1.0]
    mw = [-0.02, 0.02]
    limits = [p.u_max]
    masks = qs.roa_scan(mx, mw, limits, params=p, steps=50, tape=tape)
    path = tmp_path / "roa.csv"
    qs.write_roa_csv(path, limits, mx, mw, masks)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert header == ["u_max", "momentum_x", "momentum_omega", "stable"]
    assert len(rows) == len(limits) * len(mx) * len(mw)
    assert rows[0][0] == str(limits[0])
    assert [row[1] for row in rows[:2]] == ["-1.0", "-1.0"]
    assert {row[3] for row in rows} <= {"0", "1"}
    flat = np.array([int(row[3]) for row in rows], dtype=bool)
    assert np.array_equal(flat.reshape(3, 2), masks[0])


def test_roa_csv_mask_shape_mismatch(tmp_path):
    with pytest.raises(ValueError, match="mask shape"):
        qs.write_roa_csv(tmp_path / "x.csv", [1.0], [0.0, 1.0], [0.0], [np.zeros((1, 1), bool)])
    with pytest.raises(ValueError, match="expected 2 masks"):
        qs.write_roa_csv(tmp_path / "y.csv", [1.0, 2.0], [0.0], [0.0], [np.zeros((1, 1), bool)])


def test_sweep_csv_format(tmp_path, tape):
    rows = qs.param_sweep("u_max", [3.0, 6.0], steps=4, tape=tape)
    path = tmp_path / "sweep.csv"
    qs.write_sweep_csv(path, rows)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = list(reader)
    assert header == [
        "param_name", "param_value", "step",
        "z1", "z2", "z3", "z4", "z5", "z6", "u1", "u2",
    ]
    assert len(body) == len(rows) == 10
    assert body[0][0] == "u_max"
    assert [row[2] for row in body[:5]] == ["0", "1", "2", "3", "4"]
    assert float(body[0][3]) == 1.0  # default start position


# ------------------------------------------------------------- construction


def test_step_function_signature(step_fn):
    assert step_fn.name == "quad_step"
    assert step_fn.n_in == 2 and step_fn.n_out == 2
    assert [s.name for s in step_fn.input_symbols] == ["z", "theta"]
    assert step_fn.outputs[0].rows == 6 and step_fn.outputs[1].rows == 2


def test_tape_cache_and_deterministic_size(tape):
    assert qs.quad_step_tape() is tape
    from vecsym.tape import flatten

    rebuilt = flatten(qs.quad_step())
    assert rebuilt.n_instructions == tape.n_instructions
    assert rebuilt.n_w == tape.n_w
