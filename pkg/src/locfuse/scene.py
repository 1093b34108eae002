"""3D geometry of the industrial facility.

Line-of-sight blockage against box obstacles, free-space link budget,
anchor layout generation, and dilution-of-precision diagnostics. All
functions are pure and safe for concurrent callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s

# Coherent combining gain of an 8x8 receive panel, 10*log10(64) ~= 18.06 dB.
# Without it a 0 dBm transmitter cannot close a -90 dBm link across the hall.
RX_ARRAY_GAIN_8X8_DB = 10.0 * math.log10(64.0)

LAYOUT_KINDS = ("collinear", "noncollinear", "random")

_MAX_PLACEMENT_TRIES = 500


class PlacementError(RuntimeError):
    """No feasible node placement found within the retry budget."""


def as_point(p) -> np.ndarray:
    """Coerce to a finite float (3,) array."""
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("point coordinates must be finite")
    return a


@dataclass(frozen=True, eq=False)
class BoxObstacle:
    """Axis-aligned box given by its two extreme corners."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", as_point(self.min_corner))
        object.__setattr__(self, "max_corner", as_point(self.max_corner))
        if np.any(self.min_corner > self.max_corner):
            raise ValueError("min_corner must be <= max_corner component-wise")

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    def contains(self, p, strict: bool = False) -> bool:
        """Whether the point lies inside the box (open interior if strict)."""
        p = as_point(p)
        if strict:
            return bool(np.all(p > self.min_corner) and np.all(p < self.max_corner))
        return bool(np.all(p >= self.min_corner) and np.all(p <= self.max_corner))


def _default_bounds() -> BoxObstacle:
    return BoxObstacle((0.0, 0.0, 0.0), (70.0, 25.0, 18.0))


@dataclass(frozen=True, eq=False)
class Scene:
    """Facility volume, blocking obstacles, and link-budget parameters."""

    bounds: BoxObstacle = field(default_factory=_default_bounds)
    obstacles: tuple = ()
    carrier_freq: float = 26e9  # Hz
    tx_power_dbm: float = 0.0
    rx_sensitivity_dbm: float = -90.0
    rx_array_gain_db: float = RX_ARRAY_GAIN_8X8_DB

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.carrier_freq <= 0:
            raise ValueError("carrier_freq must be positive")
        for ob in self.obstacles:
            if not isinstance(ob, BoxObstacle):
                raise TypeError("obstacles must be BoxObstacle instances")
            inside = np.all(ob.min_corner >= self.bounds.min_corner) and np.all(
                ob.max_corner <= self.bounds.max_corner
            )
            if not inside:
                raise ValueError("every obstacle must lie fully inside the scene bounds")


def _segment_crosses_interior(box: BoxObstacle, a: np.ndarray, b: np.ndarray) -> bool:
    # Slab test on the open interior: contact with faces or edges does not count,
    # so tangent segments are treated as unblocked.
    d = b - a
    t0, t1 = 0.0, 1.0
    for i in range(3):
        if d[i] == 0.0:
            if a[i] <= box.min_corner[i] or a[i] >= box.max_corner[i]:
                return False
        else:
            ta = (box.min_corner[i] - a[i]) / d[i]
            tb = (box.max_corner[i] - a[i]) / d[i]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 >= t1:
                return False
    return t0 < t1


def los_check(scene: Scene, a, b) -> bool:
    """True iff the open segment between a and b pierces no obstacle interior."""
    a = as_point(a)
    b = as_point(b)
    if np.array_equal(a, b):
        return True
    return not any(_segment_crosses_interior(ob, a, b) for ob in scene.obstacles)


def path_loss_db(d: float, f: float) -> float:
    """Free-space path loss 20*log10(4*pi*d*f/c) in dB."""
    if d <= 0:
        raise ValueError("distance must be positive")
    if f <= 0:
        raise ValueError("frequency must be positive")
    return 20.0 * math.log10(4.0 * math.pi * d * f / SPEED_OF_LIGHT)


def link_available(scene: Scene, tx, rx) -> bool:
    """Whether a sidelink can be established between transmitter and receiver.

    Requires line of sight (blockage is treated as a hard outage) and a
    received power of tx_power - FSPL + rx_array_gain at or above the
    receiver sensitivity.
    """
    tx = as_point(tx)
    rx = as_point(rx)
    d = float(np.linalg.norm(rx - tx))
    if d == 0.0:
        raise ValueError("tx and rx must be distinct")
    if not los_check(scene, tx, rx):
        return False
    rx_power = scene.tx_power_dbm - path_loss_db(d, scene.carrier_freq) + scene.rx_array_gain_db
    return rx_power >= scene.rx_sensitivity_dbm


class Dop(NamedTuple):
    hdop: float
    vdop: float
    pdop: float


def gdop(anchors, target, mode: str = "toa") -> Dop:
    """Dilution of precision of a delay-measurement geometry.

    The geometry matrix holds one unit vector from each anchor to the target
    (``toa``), or those rows differenced against the first anchor's row
    (``tdoa``). Returns sqrt of the traces of inv(G'G) restricted to the xy
    plane (hdop), the z axis (vdop), and all axes (pdop); components spanned
    by a singular direction come back as +inf.
    """
    A = np.asarray(anchors, dtype=float).reshape(-1, 3)
    if A.shape[0] < 2:
        raise ValueError("at least 2 anchors are required")
    target = as_point(target)
    diffs = target[None, :] - A
    ranges = np.linalg.norm(diffs, axis=1)
    if np.any(ranges == 0.0):
        raise ValueError("target must be distinct from every anchor")
    units = diffs / ranges[:, None]
    if mode == "tdoa":
        G = units[1:] - units[0]
    elif mode == "toa":
        G = units
    else:
        raise ValueError(f"unknown mode {mode!r}")

    M = G.T @ G
    w, V = np.linalg.eigh(M)
    tol = max(w.max(), 0.0) * 1e-12
    if w.min() <= tol:
        null = V[:, w <= tol]
        affected = np.any(np.abs(null) > 1e-8, axis=1)
        inv_w = np.where(w > tol, 1.0 / np.where(w > tol, w, 1.0), 0.0)
        Minv = (V * inv_w) @ V.T
        hdop = math.inf if (affected[0] or affected[1]) else math.sqrt(Minv[0, 0] + Minv[1, 1])
        vdop = math.inf if affected[2] else math.sqrt(Minv[2, 2])
        return Dop(hdop, vdop, math.inf)
    Minv = np.linalg.inv(M)
    hdop = math.sqrt(Minv[0, 0] + Minv[1, 1])
    vdop = math.sqrt(Minv[2, 2])
    return Dop(hdop, vdop, math.sqrt(np.trace(Minv)))


def collinearity_residual(positions) -> float:
    """Largest distance of any point to the best-fit line through the set."""
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    centered = P - P.mean(axis=0)
    if np.allclose(centered, 0.0):
        return 0.0
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    along = centered @ axis
    perp = centered - np.outer(along, axis)
    return float(np.linalg.norm(perp, axis=1).max())


@dataclass(frozen=True, eq=False)
class AnchorLayout:
    """Anchor deployment of a given geometric kind."""

    kind: str
    positions: np.ndarray  # (n, 3)

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise ValueError(f"unknown layout kind {self.kind!r}")
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]


def _inside_scene(scene: Scene, p: np.ndarray) -> bool:
    if not scene.bounds.contains(p, strict=True):
        return False
    return not any(ob.contains(p) for ob in scene.obstacles)


def _draw_point(rng, lo, hi, z_band):
    p = rng.uniform(lo, hi)
    p[2] = rng.uniform(z_band[0], z_band[1])
    return p


def make_anchor_layout(kind: str, n: int, scene: Scene, z_band=(3.0, 8.0),
                       rng_seed=None) -> AnchorLayout:
    """Generate n anchor positions of the requested geometric kind.

    Positions are strictly inside the scene bounds, outside obstacles, with
    z constrained to z_band. Deterministic for a fixed seed.
    """
    if kind not in LAYOUT_KINDS:
        raise ValueError(f"unknown layout kind {kind!r}")
    if n < 2:
        raise ValueError("need at least 2 anchors")
    zb = (float(z_band[0]), float(z_band[1]))
    if not (scene.bounds.min_corner[2] < zb[0] <= zb[1] < scene.bounds.max_corner[2]):
        raise ValueError("z_band must lie strictly inside the scene bounds")
    rng = np.random.default_rng(rng_seed)

    margin = 0.02 * scene.bounds.size
    lo = scene.bounds.min_corner + margin
    hi = scene.bounds.max_corner - margin
    lo[2], hi[2] = zb
    min_span = 0.35 * math.hypot(hi[0] - lo[0], hi[1] - lo[1])

    for _ in range(_MAX_PLACEMENT_TRIES):
        if kind == "collinear":
            p0 = _draw_point(rng, lo, hi, zb)
            p1 = _draw_point(rng, lo, hi, zb)
            if np.linalg.norm(p1 - p0) < min_span:
                continue
            t = np.linspace(0.0, 1.0, n)
            positions = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
        else:
            positions = np.stack([_draw_point(rng, lo, hi, zb) for _ in range(n)])

        if not all(_inside_scene(scene, p) for p in positions):
            continue
        dists = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
        if np.min(dists[np.triu_indices(n, k=1)]) < 0.5:
            continue
        residual = collinearity_residual(positions)
        if kind == "collinear" and residual >= 1e-9:
            continue
        if kind == "noncollinear" and residual < 1.0:
            continue
        return AnchorLayout(kind, positions)

    raise PlacementError(
        f"could not place {n} '{kind}' anchors after {_MAX_PLACEMENT_TRIES} tries"
    )
