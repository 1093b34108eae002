"""Per-epoch ToA/TDoA/AoA measurement synthesis.

Two modes: statistical (Gaussian noise calibrated to the target error
quantiles) and signal (beam-sweep received-power AoA plus OFDM
subcarrier-phase delay estimation, see the signal module).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .scene import SPEED_OF_LIGHT, Scene, as_point, los_check
from . import signal as sig

DELAY_KINDS = ("toa", "tdoa")
ANGLE_KINDS = ("aoa_az", "aoa_el")
KINDS = DELAY_KINDS + ANGLE_KINDS

MEASUREMENT_SETS = ("toa", "tdoa", "aoa", "toa+aoa", "tdoa+aoa")


def wrap_angle(theta):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2.0 * np.pi)


def expand_measurement_set(name: str) -> tuple:
    """Expand a measurement-set name into individual measurement kinds."""
    if name not in MEASUREMENT_SETS:
        raise ValueError(f"unknown measurement set {name!r}; choose from {MEASUREMENT_SETS}")
    kinds = []
    for part in name.split("+"):
        kinds.extend(ANGLE_KINDS if part == "aoa" else [part])
    return tuple(kinds)


@dataclass(frozen=True)
class Measurement:
    """One labeled delay or angle observation."""

    kind: str
    target_id: str
    anchor_id: str
    epoch: int
    value: float       # seconds for delay kinds, radians for angle kinds
    variance: float    # value units squared
    los: bool = True
    ref_anchor_id: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if self.kind == "tdoa":
            if self.ref_anchor_id is None or self.ref_anchor_id == self.anchor_id:
                raise ValueError("tdoa requires a reference anchor distinct from anchor_id")
        elif self.ref_anchor_id is not None:
            raise ValueError(f"ref_anchor_id only applies to tdoa, not {self.kind}")
        if self.kind in ANGLE_KINDS and not (-math.pi < self.value <= math.pi):
            raise ValueError("angle values must be wrapped to (-pi, pi]")


def calibrate_sigma(central_prob: float, bound: float) -> float:
    """Standard deviation for which P(|e| < bound) = central_prob under a
    zero-mean Gaussian."""
    if not 0.0 < central_prob < 1.0:
        raise ValueError("central_prob must be in (0, 1)")
    if bound <= 0:
        raise ValueError("bound must be positive")
    return bound / norm.ppf(0.5 * (1.0 + central_prob))


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise levels; delay noise is specified in meters and
    converted with the speed of light internally."""

    sigma_delay_m: float = 0.10204   # calibrate_sigma(0.95, 0.2 m)
    sigma_angle_deg: float = 1.0204  # calibrate_sigma(0.95, 2 deg)

    def __post_init__(self):
        if self.sigma_delay_m <= 0 or self.sigma_angle_deg <= 0:
            raise ValueError("noise sigmas must be positive")

    @property
    def sigma_delay_s(self) -> float:
        return self.sigma_delay_m / SPEED_OF_LIGHT

    @property
    def sigma_angle_rad(self) -> float:
        return math.radians(self.sigma_angle_deg)


def true_geometry(target, anchor, orientation=None):
    """Range plus azimuth/elevation of the target seen from the anchor.

    The target-minus-anchor vector is rotated into the anchor's array frame
    (orientation columns = array axes in global coordinates). Azimuth is
    atan2(dy, dx) and elevation atan2(dz, hypot(dx, dy)); at zenith/nadir the
    azimuth is defined as 0.
    """
    target = as_point(target)
    anchor = as_point(anchor)
    d = target - anchor
    rng = float(np.linalg.norm(d))
    if rng == 0.0:
        raise ValueError("target and anchor must not coincide")
    if orientation is not None:
        d = np.asarray(orientation, dtype=float).T @ d
    horiz = math.hypot(d[0], d[1])
    azimuth = 0.0 if horiz == 0.0 else math.atan2(d[1], d[0])
    elevation = math.atan2(d[2], horiz)
    return rng, azimuth, elevation


def _stat_value(kind: str, rng_m: float, az: float, el: float,
                ref_range: float | None, noise: NoiseModel, rng):
    """Noisy value and variance given precomputed pair geometry."""
    if kind == "toa":
        sigma = noise.sigma_delay_s
        return rng_m / SPEED_OF_LIGHT + sigma * rng.standard_normal(), sigma * sigma
    if kind == "tdoa":
        sigma = noise.sigma_delay_s
        toa_a = rng_m / SPEED_OF_LIGHT + sigma * rng.standard_normal()
        toa_ref = ref_range / SPEED_OF_LIGHT + sigma * rng.standard_normal()
        return toa_a - toa_ref, 2.0 * sigma * sigma
    if kind in ANGLE_KINDS:
        sigma = noise.sigma_angle_rad
        truth = az if kind == "aoa_az" else el
        return float(wrap_angle(truth + sigma * rng.standard_normal())), sigma * sigma
    raise ValueError(f"unknown measurement kind {kind!r}")


def synth_statistical(kind: str, target, anchor, noise: NoiseModel, rng,
                      *, ref_anchor=None, target_id: str = "t0",
                      anchor_id: str = "a0", ref_anchor_id: str | None = None,
                      epoch: int = 0, orientation=None, los: bool = True) -> Measurement:
    """Draw one Gaussian-noise measurement for a target/anchor pair.

    TDoA is composed as the difference of two independent ToA draws, so its
    variance is twice the ToA variance.
    """
    rng_m, az, el = true_geometry(target, anchor, orientation)
    ref_range = None
    if kind == "tdoa":
        if ref_anchor is None:
            raise ValueError("tdoa synthesis needs ref_anchor")
        ref_range = float(np.linalg.norm(as_point(target) - as_point(ref_anchor)))
    value, var = _stat_value(kind, rng_m, az, el, ref_range, noise, rng)
    return Measurement(kind, target_id, anchor_id, epoch, float(value), var,
                       los=los, ref_anchor_id=ref_anchor_id)


@dataclass(frozen=True, eq=False)
class MeasurementConfig:
    """Which kinds to emit per epoch and how to synthesize them."""

    kinds: tuple = ("tdoa", "aoa_az", "aoa_el")
    noise: NoiseModel = field(default_factory=NoiseModel)
    array: sig.ArrayConfig = field(default_factory=sig.ArrayConfig)
    codebook: sig.BeamCodebook = field(default_factory=sig.make_codebook)
    ofdm: sig.OfdmConfig = field(default_factory=sig.OfdmConfig)
    snr_db: float = 20.0
    # Optional externally produced multipath, keyed by (pair_id, epoch) with
    # pair_id formatted as "t{i}-a{j}"; used by the signal mode instead of the
    # geometric single-path channel.
    path_lists: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        for k in self.kinds:
            if k not in KINDS:
                raise ValueError(f"unknown measurement kind {k!r}")


def _signal_toa(paths: sig.PathList, cfg: MeasurementConfig, rng) -> float:
    cfr = sig.ofdm_cfr(paths, cfg.ofdm)
    noise_scale = 10.0 ** (-cfg.snr_db / 20.0)
    n = cfr.size
    cfr = cfr + noise_scale / math.sqrt(2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    return sig.ofdm_toa(cfr, cfg.ofdm)


def _signal_aoa(az: float, el: float, cfg: MeasurementConfig, rng):
    powers = sig.beam_rsrp(cfg.array, cfg.codebook, az, el, cfg.snr_db, rng)
    est = sig.beam_sweep_aoa(powers, cfg.codebook)
    return est.azimuth, est.elevation


def link_mask(scene: Scene, targets: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Boolean (targets, anchors) connectivity under LoS and the link budget."""
    diffs = targets[:, None, :] - anchors[None, :, :]
    dists = np.linalg.norm(diffs, axis=2)
    fspl_1m = 20.0 * math.log10(4.0 * math.pi * scene.carrier_freq / SPEED_OF_LIGHT)
    with np.errstate(divide="ignore"):
        rx_power = (scene.tx_power_dbm + scene.rx_array_gain_db
                    - fspl_1m - 20.0 * np.log10(dists))
    mask = (dists > 0.0) & (rx_power >= scene.rx_sensitivity_dbm)
    if scene.obstacles:
        for ti, ai in zip(*np.nonzero(mask)):
            if not los_check(scene, targets[ti], anchors[ai]):
                mask[ti, ai] = False
    return mask


def _pair_angles(tp, ap, orientation):
    d = tp - ap
    if orientation is not None:
        d = np.asarray(orientation, dtype=float).T @ d
    horiz = math.hypot(d[0], d[1])
    az = 0.0 if horiz == 0.0 else math.atan2(d[1], d[0])
    return az, math.atan2(d[2], horiz)


def epoch_measurements(mode: str, scene: Scene, targets, anchors,
                       config: MeasurementConfig, rng, epoch: int = 0,
                       orientations=None) -> list:
    """Measurements from every target/anchor pair with an available link.

    Pairs without line of sight (or below the sensitivity threshold) emit
    nothing. The TDoA reference is the lowest-index connected anchor per
    target per epoch.
    """
    if mode not in ("statistical", "signal"):
        raise ValueError(f"unknown mode {mode!r}")
    targets = np.asarray(targets, dtype=float).reshape(-1, 3)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 3)
    if orientations is None:
        orientations = [None] * anchors.shape[0]
    linked = link_mask(scene, targets, anchors)

    out = []
    for ti in range(targets.shape[0]):
        tp = targets[ti]
        tid = f"t{ti}"
        connected = np.flatnonzero(linked[ti])
        if connected.size == 0:
            continue
        ref = int(connected[0])
        dists = {int(ai): float(np.linalg.norm(tp - anchors[ai])) for ai in connected}
        for kind in config.kinds:
            if kind == "tdoa":
                pairs = [(int(ai), ref) for ai in connected if ai != ref]
            else:
                pairs = [(int(ai), None) for ai in connected]
            for ai, ref_ai in pairs:
                aid = f"a{ai}"
                ref_id = None if ref_ai is None else f"a{ref_ai}"
                if mode == "statistical":
                    az, el = ((0.0, 0.0) if kind in DELAY_KINDS
                              else _pair_angles(tp, anchors[ai], orientations[ai]))
                    value, var = _stat_value(
                        kind, dists[ai], az, el,
                        None if ref_ai is None else dists[ref_ai],
                        config.noise, rng)
                    out.append(Measurement(kind, tid, aid, epoch, float(value),
                                           var, los=True, ref_anchor_id=ref_id))
                else:
                    m = _synth_signal(kind, tp, anchors, ai, ref_ai, config,
                                      rng, target_id=tid, epoch=epoch,
                                      orientations=orientations)
                    if m is not None:
                        out.append(m)
    return out


def _geom_paths(target, anchor, orientation, cfg: MeasurementConfig) -> sig.PathList:
    rng_m, az, el = true_geometry(target, anchor, orientation)
    return sig.PathList.line_of_sight(rng_m, az, el, cfg.ofdm.carrier_freq)


def _synth_signal(kind, target, anchors, ai, ref_ai, cfg: MeasurementConfig,
                  rng, *, target_id, epoch, orientations) -> Measurement | None:
    aid = f"a{ai}"
    paths = cfg.path_lists.get((f"{target_id}-{aid}", epoch))
    if paths is None:
        paths = _geom_paths(target, anchors[ai], orientations[ai], cfg)
    if not paths.los:
        return None  # imported NLoS links are omitted at the source
    if kind in DELAY_KINDS:
        value = _signal_toa(paths, cfg, rng)
        var = cfg.noise.sigma_delay_s ** 2
        if kind == "tdoa":
            ref_id = f"a{ref_ai}"
            ref_paths = cfg.path_lists.get((f"{target_id}-{ref_id}", epoch))
            if ref_paths is None:
                ref_paths = _geom_paths(target, anchors[ref_ai], orientations[ref_ai], cfg)
            value = value - _signal_toa(ref_paths, cfg, rng)
            return Measurement(kind, target_id, aid, epoch, float(value),
                               2.0 * var, los=paths.los, ref_anchor_id=ref_id)
        return Measurement(kind, target_id, aid, epoch, float(value), var,
                           los=paths.los)
    az_est, el_est = _signal_aoa(paths.azimuths[0], paths.elevations[0], cfg, rng)
    value = az_est if kind == "aoa_az" else el_est
    var = cfg.noise.sigma_angle_rad ** 2
    return Measurement(kind, target_id, aid, epoch, float(wrap_angle(value)),
                       var, los=paths.los)
