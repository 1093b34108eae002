"""Signal-level estimators: beam-swept AoA on a rectangular panel and
subcarrier-phase delay estimation on an OFDM grid."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .scene import SPEED_OF_LIGHT


class EstimationError(RuntimeError):
    """An estimator received input it cannot produce an estimate from."""


def _identity3() -> np.ndarray:
    return np.eye(3)


@dataclass(frozen=True, eq=False)
class ArrayConfig:
    """Uniform rectangular panel in the y-z plane of its own frame.

    Boresight is +x; column index m advances along +y, row index n along +z.
    element_spacing is in wavelengths. orientation holds the array axes as
    columns in global coordinates.
    """

    rows: int = 8
    cols: int = 8
    element_spacing: float = 0.5
    orientation: np.ndarray = field(default_factory=_identity3)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be at least 1")
        if self.element_spacing <= 0:
            raise ValueError("element_spacing must be positive")
        R = np.asarray(self.orientation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("orientation must be a 3x3 rotation matrix")
        R.setflags(write=False)
        object.__setattr__(self, "orientation", R)

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols


def _steering_pq(rows: int, cols: int, spacing: float, p: float, q: float) -> np.ndarray:
    # Direction cosines: p = cos(el)*sin(az) along y, q = sin(el) along z.
    col_phase = np.exp(2j * np.pi * spacing * p * np.arange(cols))
    row_phase = np.exp(2j * np.pi * spacing * q * np.arange(rows))
    return np.outer(row_phase, col_phase).ravel()


def steering_vector(array: ArrayConfig, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-modulus plane-wave response of the panel for a given direction.

    Broadside (azimuth 0, elevation 0) gives an all-ones vector.
    """
    if not (math.isfinite(azimuth) and math.isfinite(elevation)):
        raise ValueError("angles must be finite")
    p = math.cos(elevation) * math.sin(azimuth)
    q = math.sin(elevation)
    return _steering_pq(array.rows, array.cols, array.element_spacing, p, q)


@dataclass(frozen=True)
class BeamCodebook:
    """Sweep beams on a uniform grid of direction cosines.

    The panel response is exactly separable in (p, q) = (cos el sin az,
    sin el), so sweeping and refining on this grid keeps the two axes
    independent; a uniform angle grid couples them and loses accuracy at
    combined azimuth/elevation offsets.
    """

    p_grid: tuple
    q_grid: tuple

    def __post_init__(self):
        if len(self.p_grid) < 1 or len(self.q_grid) < 1:
            raise ValueError("codebook grids must be nonempty")
        object.__setattr__(self, "p_grid", tuple(float(v) for v in self.p_grid))
        object.__setattr__(self, "q_grid", tuple(float(v) for v in self.q_grid))

    @property
    def num_beams(self) -> int:
        return len(self.p_grid) * len(self.q_grid)

    @property
    def spacing(self) -> tuple:
        dp = self.p_grid[1] - self.p_grid[0] if len(self.p_grid) > 1 else 0.0
        dq = self.q_grid[1] - self.q_grid[0] if len(self.q_grid) > 1 else 0.0
        return dp, dq

    def directions(self) -> np.ndarray:
        """(num_beams, 2) steering directions as (azimuth, elevation) radians.

        Beams are ordered q-major. Grid corners with p^2 + q^2 > 1 do not map
        to a physical direction and come back as NaN; they still act as guard
        beams for interpolation.
        """
        out = np.full((self.num_beams, 2), np.nan)
        for i, q in enumerate(self.q_grid):
            for j, p in enumerate(self.p_grid):
                if p * p + q * q <= 1.0:
                    el = math.asin(q)
                    cos_el = math.cos(el)
                    az = math.asin(np.clip(p / cos_el, -1.0, 1.0)) if cos_el > 0 else 0.0
                    out[i * len(self.p_grid) + j] = (az, el)
        return out


def make_codebook(span_deg: float = 70.0, beams_per_axis: int = 15) -> BeamCodebook:
    """Uniform direction-cosine codebook covering +-span_deg on both axes.

    The default spans 70 degrees with 15 beams per axis (sine-space step
    0.134, under the 8-element half-power beamwidth of 0.22), leaving one
    guard ring beyond a +-60 degree field of view so that in-FoV directions
    always have interior neighbors for interpolation.
    """
    s = math.sin(math.radians(span_deg))
    grid = np.linspace(-s, s, beams_per_axis)
    return BeamCodebook(tuple(grid), tuple(grid))


@lru_cache(maxsize=8)
def _codebook_weights(rows: int, cols: int, spacing: float,
                      p_grid: tuple, q_grid: tuple) -> np.ndarray:
    W = np.empty((len(q_grid) * len(p_grid), rows * cols), dtype=complex)
    for i, q in enumerate(q_grid):
        for j, p in enumerate(p_grid):
            W[i * len(p_grid) + j] = _steering_pq(rows, cols, spacing, p, q)
    return W


def beam_rsrp(array: ArrayConfig, codebook: BeamCodebook, true_az: float,
              true_el: float, snr_db: float, rng=None) -> np.ndarray:
    """Per-beam received power (dB) of a sweep over the codebook.

    snr_db is the per-element SNR; the matched beam combines to roughly
    snr + 10*log10(num_elements) above the unit-power noise floor. With
    rng=None the sweep is noiseless.
    """
    W = _codebook_weights(array.rows, array.cols, array.element_spacing,
                          codebook.p_grid, codebook.q_grid)
    a = steering_vector(array, true_az, true_el)
    amp = 10.0 ** (snr_db / 20.0)
    z = amp * (W.conj() @ a) / math.sqrt(array.num_elements)
    if rng is not None:
        n = z.size
        z = z + (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    return 10.0 * np.log10(np.abs(z) ** 2 + 1e-300)


class AoaEstimate(NamedTuple):
    azimuth: float
    elevation: float
    on_edge: bool


def _parabolic_offset(ym1: float, y0: float, yp1: float, h: float) -> float:
    denom = ym1 - 2.0 * y0 + yp1
    if denom == 0.0:
        return 0.0
    off = 0.5 * (ym1 - yp1) / denom * h
    return float(np.clip(off, -h, h))


def beam_sweep_aoa(powers, codebook: BeamCodebook) -> AoaEstimate:
    """Direction estimate from sweep powers: argmax beam plus independent
    3-point parabolic refinement along each codebook axis.

    An argmax on a grid edge is returned unrefined on that axis and flagged
    via on_edge.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.size != codebook.num_beams:
        raise ValueError("powers length must equal the codebook size")
    np_, nq = len(codebook.p_grid), len(codebook.q_grid)
    P = powers.reshape(nq, np_)
    i, j = np.unravel_index(int(np.argmax(P)), P.shape)
    p = codebook.p_grid[j]
    q = codebook.q_grid[i]
    dp, dq = codebook.spacing
    on_edge = False
    if 0 < j < np_ - 1:
        p += _parabolic_offset(P[i, j - 1], P[i, j], P[i, j + 1], dp)
    else:
        on_edge = True
    if 0 < i < nq - 1:
        q += _parabolic_offset(P[i - 1, j], P[i, j], P[i + 1, j], dq)
    else:
        on_edge = True
    q = float(np.clip(q, -1.0, 1.0))
    elevation = math.asin(q)
    cos_el = math.cos(elevation)
    azimuth = math.asin(float(np.clip(p / cos_el, -1.0, 1.0))) if cos_el > 0 else 0.0
    return AoaEstimate(azimuth, elevation, on_edge)


@dataclass(frozen=True)
class OfdmConfig:
    """Active OFDM grid used for delay estimation."""

    subcarrier_spacing: float = 60e3
    num_subcarriers: int = 1620
    carrier_freq: float = 26e9

    def __post_init__(self):
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier_spacing must be positive")
        if self.num_subcarriers < 2:
            raise ValueError("need at least 2 subcarriers")

    @property
    def bandwidth(self) -> float:
        return self.subcarrier_spacing * self.num_subcarriers

    @property
    def delay_resolution_m(self) -> float:
        return SPEED_OF_LIGHT / self.bandwidth


@dataclass(frozen=True, eq=False)
class PathList:
    """Multipath components of one link, sorted by delay."""

    delays: np.ndarray      # seconds, strictly increasing, >= 0
    gains: np.ndarray       # complex amplitudes
    azimuths: np.ndarray    # radians, in the receiving array frame
    elevations: np.ndarray  # radians
    los: bool = True

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        gains = np.asarray(self.gains, dtype=complex)
        az = np.asarray(self.azimuths, dtype=float)
        el = np.asarray(self.elevations, dtype=float)
        if not (delays.shape == gains.shape == az.shape == el.shape) or delays.ndim != 1:
            raise ValueError("path arrays must be 1D and share one length")
        if delays.size == 0:
            raise ValueError("a path list must contain at least one path")
        if np.any(delays < 0):
            raise ValueError("delays must be non-negative")
        if np.any(np.diff(delays) <= 0):
            raise ValueError("delays must be strictly increasing")
        for name, arr in (("delays", delays), ("gains", gains),
                          ("azimuths", az), ("elevations", el)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.delays.size

    @classmethod
    def line_of_sight(cls, range_m: float, azimuth: float, elevation: float,
                      carrier_freq: float) -> "PathList":
        """Single direct path with the carrier phase of its propagation delay."""
        tau = range_m / SPEED_OF_LIGHT
        gain = np.exp(-2j * np.pi * carrier_freq * tau)
        return cls(np.array([tau]), np.array([gain]),
                   np.array([azimuth]), np.array([elevation]), los=True)


def load_path_lists(path) -> dict:
    """Read externally produced multipath from CSV.

    Expected columns: pair_id, epoch, delay_s, gain_re, gain_im, az_rad,
    el_rad, los_flag. Returns {(pair_id, epoch): PathList}.
    """
    groups: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"pair_id", "epoch", "delay_s", "gain_re", "gain_im",
                    "az_rad", "el_rad", "los_flag"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValueError(f"path CSV must have columns {sorted(expected)}")
        for row in reader:
            key = (row["pair_id"], int(row["epoch"]))
            groups.setdefault(key, []).append((
                float(row["delay_s"]),
                float(row["gain_re"]) + 1j * float(row["gain_im"]),
                float(row["az_rad"]), float(row["el_rad"]),
                row["los_flag"].strip().lower() in ("1", "true", "yes"),
            ))
    out = {}
    for key, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        delays, gains, az, el, los_flags = zip(*rows)
        out[key] = PathList(np.array(delays), np.array(gains),
                            np.array(az), np.array(el), los=los_flags[0])
    return out


def ofdm_cfr(paths: PathList, cfg: OfdmConfig) -> np.ndarray:
    """Channel frequency response over the baseband subcarrier grid."""
    k = np.arange(cfg.num_subcarriers) - cfg.num_subcarriers // 2
    freqs = k * cfg.subcarrier_spacing
    phases = np.exp(-2j * np.pi * np.outer(freqs, paths.delays))
    return phases @ paths.gains


def ofdm_toa(cfr, cfg: OfdmConfig, oversample: int = 16) -> float:
    """First-arrival delay from a channel frequency response.

    Evaluates the delay spectrum on an oversampled grid via a zero-padded
    inverse transform, picks the earliest circular local peak within 6 dB of
    the global peak, and refines it with quadratic interpolation. Estimates
    in the upper half of the unambiguous window map to negative delays so
    that near-zero delays stay continuous.
    """
    cfr = np.asarray(cfr, dtype=complex)
    if cfr.size != cfg.num_subcarriers:
        raise ValueError("cfr length must equal num_subcarriers")
    if not np.any(cfr):
        raise EstimationError("all-zero channel response")
    n = oversample * cfg.num_subcarriers
    padded = np.zeros(n, dtype=complex)
    padded[: cfg.num_subcarriers] = cfr
    h = np.fft.ifft(padded) * n
    m = np.arange(n)
    # Delay spectrum for baseband-centered subcarrier frequencies.
    h *= np.exp(-2j * np.pi * (cfg.num_subcarriers // 2) * m / n)
    mag = np.abs(h)

    floor = mag.max() * 10.0 ** (-6.0 / 20.0)
    is_peak = (mag >= np.roll(mag, 1)) & (mag >= np.roll(mag, -1)) & (mag >= floor)
    idx = np.flatnonzero(is_peak)
    if idx.size == 0:  # flat spectrum; unreachable for any valid peak shape
        raise EstimationError("no spectral peak found")

    window = 1.0 / cfg.subcarrier_spacing
    tau = m / (n * cfg.subcarrier_spacing)
    tau_signed = np.where(m > n // 2, tau - window, tau)
    first = idx[np.argmin(tau_signed[idx])]
    offset = _parabolic_offset(mag[(first - 1) % n], mag[first],
                               mag[(first + 1) % n], 1.0)
    return float(tau_signed[first] + offset / (n * cfg.subcarrier_spacing))
