import numpy as np
import pytest

from locfuse.mobility import (Trajectory, WaypointModelParams,
                              generate_trajectory, kinematic_sample)
from locfuse.scene import BoxObstacle, Scene


@pytest.fixture(scope="module")
def default_traj():
    return generate_trajectory(WaypointModelParams(), Scene(), rng_seed=42)


def leg_interior_mask(traj):
    """Epochs whose neighbors share the same leg velocity."""
    v = traj.velocities
    same_prev = np.all(v[1:-1] == v[:-2], axis=1)
    same_next = np.all(v[1:-1] == v[2:], axis=1)
    mask = np.zeros(traj.epochs, dtype=bool)
    mask[1:-1] = same_prev & same_next
    return mask


def test_default_epoch_count(default_traj):
    assert default_traj.epochs == 5000


def test_epoch_count_is_floor_of_ratio():
    p = WaypointModelParams(duration_s=12.34, epoch_dt_s=0.1)
    traj = generate_trajectory(p, Scene(), rng_seed=0)
    assert traj.epochs == 123


def test_interior_speeds_within_band(default_traj):
    disp = np.linalg.norm(np.diff(default_traj.positions, axis=0), axis=1)
    speeds = disp / 0.1
    interior = leg_interior_mask(default_traj)[:-1]
    assert speeds[interior].min() >= 1.0 - 1e-9
    assert speeds[interior].max() <= 1.2 + 1e-9


def test_positions_stay_inside_scene(default_traj):
    scene = Scene()
    assert np.all(default_traj.positions >= scene.bounds.min_corner)
    assert np.all(default_traj.positions <= scene.bounds.max_corner)
    assert default_traj.positions[:, 2].min() >= 0.5
    assert default_traj.positions[:, 2].max() <= 17.5


def test_deterministic_per_seed():
    p = WaypointModelParams(duration_s=30.0)
    a = generate_trajectory(p, Scene(), rng_seed=5)
    b = generate_trajectory(p, Scene(), rng_seed=5)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)
    c = generate_trajectory(p, Scene(), rng_seed=6)
    assert not np.array_equal(a.positions, c.positions)


def test_kinematic_sample_matches_arrays(default_traj):
    pos, vel, acc = kinematic_sample(default_traj, 0)
    assert np.array_equal(pos, default_traj.positions[0])
    pos, vel, acc = kinematic_sample(default_traj, 1234)
    assert np.array_equal(vel, default_traj.velocities[1234])
    with pytest.raises(IndexError):
        kinematic_sample(default_traj, default_traj.epochs)
    with pytest.raises(IndexError):
        kinematic_sample(default_traj, -1)


def test_interior_velocity_is_displacement_rate(default_traj):
    interior = leg_interior_mask(default_traj)
    k = np.flatnonzero(interior[:-1] & interior[1:])[:200]
    fd = (default_traj.positions[k + 1] - default_traj.positions[k]) / 0.1
    assert np.max(np.abs(fd - default_traj.velocities[k])) < 1e-9


def test_interior_acceleration_zero(default_traj):
    interior = leg_interior_mask(default_traj)
    assert np.all(default_traj.accelerations[interior] == 0.0)


def test_turn_acceleration_is_one_epoch_impulse(default_traj):
    v = default_traj.velocities
    turns = np.flatnonzero(np.any(np.diff(v, axis=0) != 0.0, axis=1)) + 1
    assert turns.size > 0
    dv = (v[turns] - v[turns - 1]) / 0.1
    assert np.allclose(default_traj.accelerations[turns], dv)


def test_waypoints_avoid_obstacles_but_legs_may_cross():
    # one big slab in the middle; waypoints must sit outside it
    scene = Scene(obstacles=(BoxObstacle((30, 0.1, 0.1), (40, 24.9, 17.5)),))
    p = WaypointModelParams(duration_s=120.0)
    traj = generate_trajectory(p, scene, rng_seed=3)
    ob = scene.obstacles[0]
    stationary = np.all(traj.accelerations == 0.0, axis=1)
    inside = np.array([ob.contains(x, strict=True) for x in traj.positions])
    # the path may cross the slab, but no waypoint-turn epoch can be inside it
    turn_epochs = ~stationary
    assert not np.any(inside & turn_epochs)


def test_pause_inserts_zero_velocity():
    p = WaypointModelParams(duration_s=60.0, pause_s=2.0)
    traj = generate_trajectory(p, Scene(), rng_seed=8)
    still = np.all(traj.velocities == 0.0, axis=1)
    assert still.sum() >= 10  # at least one 2 s pause sampled at 0.1 s


def test_param_validation():
    with pytest.raises(ValueError):
        WaypointModelParams(speed_min=0.0)
    with pytest.raises(ValueError):
        WaypointModelParams(speed_min=2.0, speed_max=1.0)
    with pytest.raises(ValueError):
        WaypointModelParams(epoch_dt_s=0.0)
    with pytest.raises(ValueError):
        WaypointModelParams(duration_s=0.01, epoch_dt_s=0.1)


def test_csv_export(tmp_path, default_traj):
    out = tmp_path / "traj.csv"
    default_traj.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "epoch,x,y,z,vx,vy,vz"
    assert len(lines) == default_traj.epochs + 1
    first = lines[1].split(",")
    assert float(first[1]) == pytest.approx(default_traj.positions[0, 0])


def test_arrays_immutable(default_traj):
    with pytest.raises(ValueError):
        default_traj.positions[0, 0] = 99.0
