"""Random-waypoint target motion and epoch-sampled ground-truth kinematics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .scene import PlacementError, Scene, _MAX_PLACEMENT_TRIES


@dataclass(frozen=True)
class WaypointModelParams:
    """Parameters of the 3D random-waypoint motion model."""

    speed_min: float = 1.0  # m/s
    speed_max: float = 1.2  # m/s
    duration_s: float = 500.0
    epoch_dt_s: float = 0.1
    z_band: tuple = (0.5, 17.5)
    pause_s: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.speed_min <= self.speed_max):
            raise ValueError("require 0 < speed_min <= speed_max")
        if self.epoch_dt_s <= 0:
            raise ValueError("epoch_dt_s must be positive")
        if self.duration_s < self.epoch_dt_s:
            raise ValueError("duration_s must cover at least one epoch")
        if self.pause_s < 0:
            raise ValueError("pause_s must be non-negative")
        object.__setattr__(self, "z_band", (float(self.z_band[0]), float(self.z_band[1])))

    @property
    def epochs(self) -> int:
        return int(math.floor(self.duration_s / self.epoch_dt_s + 1e-9))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Epoch-sampled positions, velocities, and accelerations of one target.

    Motion is piecewise linear between waypoints, so velocity is constant on
    leg interiors and acceleration is a one-epoch finite-difference impulse
    at waypoint turns.
    """

    positions: np.ndarray      # (epochs, 3) m
    velocities: np.ndarray     # (epochs, 3) m/s
    accelerations: np.ndarray  # (epochs, 3) m/s^2
    epoch_dt_s: float

    def __post_init__(self):
        for name in ("positions", "velocities", "accelerations"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.positions.shape == self.velocities.shape == self.accelerations.shape):
            raise ValueError("kinematic arrays must share one shape")

    @property
    def epochs(self) -> int:
        return self.positions.shape[0]

    def to_csv(self, path) -> None:
        """Write (epoch, x, y, z, vx, vy, vz) rows for inspection."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "x", "y", "z", "vx", "vy", "vz"])
            for k in range(self.epochs):
                writer.writerow(
                    [k] + [f"{v:.12g}" for v in self.positions[k]]
                    + [f"{v:.12g}" for v in self.velocities[k]]
                )


def kinematic_sample(traj: Trajectory, epoch: int):
    """Ground-truth (position, velocity, acceleration) at an epoch index."""
    if not 0 <= epoch < traj.epochs:
        raise IndexError(f"epoch {epoch} outside [0, {traj.epochs})")
    return traj.positions[epoch], traj.velocities[epoch], traj.accelerations[epoch]


def _draw_waypoint(rng, scene: Scene, z_band) -> np.ndarray:
    # Waypoints avoid obstacle interiors; legs may cross them since obstacles
    # only block radio propagation, not motion through the open hall.
    margin = 0.02 * scene.bounds.size
    lo = scene.bounds.min_corner + margin
    hi = scene.bounds.max_corner - margin
    for _ in range(_MAX_PLACEMENT_TRIES):
        p = rng.uniform(lo, hi)
        p[2] = rng.uniform(z_band[0], z_band[1])
        if not any(ob.contains(p) for ob in scene.obstacles):
            return p
    raise PlacementError("could not draw a waypoint outside the obstacles")


def generate_trajectory(params: WaypointModelParams, scene: Scene,
                        rng_seed=None) -> Trajectory:
    """Sample one random-waypoint trajectory on the epoch grid.

    Each leg runs at a constant speed drawn uniformly from
    [speed_min, speed_max]; waypoint turns are instantaneous.
    """
    zb = params.z_band
    if not (scene.bounds.min_corner[2] < zb[0] <= zb[1] < scene.bounds.max_corner[2]):
        raise ValueError("z_band must lie strictly inside the scene bounds")
    rng = np.random.default_rng(rng_seed)
    epochs = params.epochs
    dt = params.epoch_dt_s

    # Build (start_time, origin, velocity) segments covering the full duration.
    seg_t, seg_origin, seg_vel = [], [], []
    t = 0.0
    current = _draw_waypoint(rng, scene, zb)
    while t < params.duration_s:
        target = _draw_waypoint(rng, scene, zb)
        leg = target - current
        length = float(np.linalg.norm(leg))
        if length < 1e-6:
            continue
        speed = rng.uniform(params.speed_min, params.speed_max)
        seg_t.append(t)
        seg_origin.append(current)
        seg_vel.append(leg / length * speed)
        t += length / speed
        current = target
        if params.pause_s > 0 and t < params.duration_s:
            seg_t.append(t)
            seg_origin.append(current)
            seg_vel.append(np.zeros(3))
            t += params.pause_s

    seg_t = np.asarray(seg_t)
    seg_origin = np.asarray(seg_origin)
    seg_vel = np.asarray(seg_vel)

    times = np.arange(epochs) * dt
    idx = np.searchsorted(seg_t, times, side="right") - 1
    positions = seg_origin[idx] + seg_vel[idx] * (times - seg_t[idx])[:, None]
    velocities = seg_vel[idx]
    accelerations = np.zeros_like(velocities)
    accelerations[1:] = (velocities[1:] - velocities[:-1]) / dt
    return Trajectory(positions, velocities, accelerations, dt)
