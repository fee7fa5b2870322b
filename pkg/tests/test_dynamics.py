import math

import numpy as np
import pytest

from pfnav.dynamics import (
    Box,
    VectorField,
    constant_field,
    example1_fields,
    example2_fields,
    expression_field,
    flow_step,
    generate_snapshots,
    grid_sampling,
    random_sampling,
    simulate,
)
from pfnav.basis import ball_region
from pfnav.errors import IntegrationError, SnapshotError


def test_flow_step_zero_field(zero_field_2d):
    x = np.array([3.7, -1.2])
    out = flow_step(zero_field_2d, x, 0.01)
    assert np.array_equal(out, x)


def test_flow_step_exponential_decay(decay_field):
    out = flow_step(decay_field, np.array([1.0]), 0.01)
    assert out[0] == pytest.approx(math.exp(-0.01), abs=1e-10)


def test_flow_step_example1_matches_fine_reference():
    f, _ = example1_fields()
    # open-loop velocity at the origin is (1.125, 0)
    assert np.allclose(f.eval(np.zeros(2)), [1.125, 0.0])
    coarse = flow_step(f, np.zeros(2), 0.01)
    fine = np.zeros(2)
    for _ in range(1000):
        fine = flow_step(f, fine, 1e-5)
    assert np.linalg.norm(coarse - fine) < 1e-8


def test_rk4_local_order():
    # halving dt cuts the one-step error by ~2^5 for xdot = -x
    box = Box([-5.0], [5.0])
    field = VectorField(1, lambda x: -x, box)

    def err(h):
        return abs(flow_step(field, np.array([1.0]), h)[0] - math.exp(-h))

    for h in (0.02, 0.01):
        ratio = err(h) / err(h / 2.0)
        assert 28.0 <= ratio <= 36.0


def test_flow_step_nonfinite_field_raises(unit_box):
    bad = VectorField(2, lambda x: np.array([np.inf, 0.0]), unit_box)
    with pytest.raises(IntegrationError):
        flow_step(bad, np.array([1.0, 1.0]), 0.01)


def test_simulate_constant_state_count(zero_field_2d):
    traj = simulate(zero_field_2d, np.array([2.0, 2.0]), 1.0, 0.03)
    assert len(traj.states) == math.ceil(1.0 / 0.03) + 1
    assert np.all(traj.states == traj.states[0])


def test_simulate_decay_final_state(decay_field):
    traj = simulate(decay_field, np.array([1.0]), 1.0, 0.01)
    assert traj.states[-1][0] == pytest.approx(math.exp(-1.0), abs=1e-7)
    assert not traj.exited


def test_simulate_example2_open_loop_invariant_axis():
    f, _ = example2_fields()
    traj = simulate(f, np.array([6.0, 0.0]), 5.0, 0.01)
    assert np.all(traj.states[:, 1] == 0.0)


def test_simulate_stops_on_region(decay_field):
    stop = ball_region([0.0], 0.5)
    traj = simulate(decay_field, np.array([2.0]), 10.0, 0.01, stop_region=stop)
    assert traj.reached
    assert traj.states[-1][0] <= 0.5 + 1e-9
    assert len(traj.states) < 1001


def test_simulate_flags_domain_exit():
    box = Box([0.0], [1.0])
    field = VectorField(1, lambda x: np.ones(1), box)
    traj = simulate(field, np.array([0.9]), 5.0, 0.05)
    assert traj.exited
    assert traj.states[-1][0] > 1.0


def test_generate_snapshots_zero_field(zero_field_2d):
    snaps = generate_snapshots(zero_field_2d, random_sampling(100, seed=7), 0.01)
    assert snaps.count == 100
    assert np.array_equal(snaps.x_points, snaps.y_points)


def test_generate_snapshots_grid_cardinality(zero_field_2d):
    snaps = generate_snapshots(zero_field_2d, grid_sampling([50, 50]), 0.01)
    assert snaps.count == 2500


def test_generate_snapshots_constant_translation(unit_box):
    g = constant_field([0.0, 1.0], unit_box)
    snaps = generate_snapshots(g, grid_sampling([10, 10]), 0.01)
    shift = snaps.y_points - snaps.x_points
    assert np.allclose(shift[:, 0], 0.0)
    assert np.allclose(shift[:, 1], 0.01)


def test_generate_snapshots_bitwise_consistency():
    f, _ = example1_fields()
    snaps = generate_snapshots(f, grid_sampling([8, 8]), 0.01)
    for x, y in zip(snaps.x_points, snaps.y_points):
        again = flow_step(f, x, 0.01)
        assert np.array_equal(again, y)


def test_generate_snapshots_drops_exiting_pairs():
    box = Box([0.0], [1.0])
    field = VectorField(1, lambda x: np.ones(1), box)
    snaps = generate_snapshots(field, grid_sampling([10]), 0.5)
    assert snaps.count < 10
    assert snaps.n_dropped > 0
    with pytest.raises(SnapshotError):
        generate_snapshots(field, grid_sampling([10]), 10.0)


def test_example1_drift_has_zero_second_component():
    f, _ = example1_fields()
    rng = np.random.default_rng(0)
    for x in rng.uniform(0, 10, size=(50, 2)):
        assert f.eval(x)[1] == 0.0


def test_expression_field_matches_builtin():
    f_ref, _ = example2_fields()
    f_expr = expression_field(
        ["-0.125 + 0.125*cos(0.5*x1) - 0.125*sin(0.5*x2)", "0"], f_ref.domain
    )
    rng = np.random.default_rng(1)
    for x in rng.uniform(-8, 8, size=(20, 2)):
        assert np.allclose(f_expr.eval(x), f_ref.eval(x), atol=1e-15)


def test_trajectory_csv_roundtrip(tmp_path, decay_field):
    traj = simulate(decay_field, np.array([1.0]), 0.1, 0.01)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    text = path.read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "t,x1"
    assert len(lines) == len(traj.states) + 1
    # 15 significant digits round-trip through the format
    val = float(lines[-1].split(",")[1])
    assert val == pytest.approx(traj.states[-1][0], rel=1e-14)
