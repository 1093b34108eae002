"""End-to-end runs and sweeps: scenario assembly, the filter loop, error
statistics, and the node-count / geometry studies."""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import signal as sig
from .fusion import (InitializationError, ProcessModel, batch_ls_init,
                     init_joint_state, joint_nees, predict, update)
from .measurement import (MeasurementConfig, NoiseModel, expand_measurement_set,
                          epoch_measurements, link_mask)
from .mobility import WaypointModelParams, generate_trajectory
from .scene import BoxObstacle, Scene, gdop, make_anchor_layout

ERROR_CLASSES = ("2d", "vertical", "3d")
NODE_CLASSES = ("joint", "targets", "anchors")

DEFAULT_THRESHOLDS = {"2d": 1.0, "vertical": 0.2, "3d": 1.0}


class ConfigError(ValueError):
    """A config document violates the schema or an invariant."""


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Fully declarative description of one run or sweep."""

    scene: Scene = field(default_factory=Scene)
    layout_kind: str = "noncollinear"
    n_anchors: int = 6
    anchor_z_band: tuple = (3.0, 8.0)
    n_targets: int = 2
    speed_min: float = 1.0
    speed_max: float = 1.2
    target_z_band: tuple = (0.5, 17.5)
    pause_s: float = 0.0
    measurement_set: str = "tdoa+aoa"
    mode: str = "statistical"
    noise: NoiseModel = field(default_factory=NoiseModel)
    snr_db: float = 20.0
    codebook_span_deg: float = 70.0
    codebook_beams_per_axis: int = 15
    ofdm: sig.OfdmConfig = field(default_factory=sig.OfdmConfig)
    path_csv: str | None = None
    duration_s: float = 500.0
    epoch_dt_s: float = 0.1
    burn_in_s: float = 10.0
    target_jerk_psd: float = 1.0
    anchor_jitter: float = 1e-9
    gate_prob: float = 0.99
    anchor_prior_sigma: float = 2.0
    target_pos_sigma: float = 2.0
    vel_sigma: float = 1.5
    acc_sigma: float = 1.5
    seed: int = 1
    monte_carlo_runs: int = 20
    sweep_anchors: tuple = (2, 3, 4, 5, 6)
    sweep_targets: tuple = (1, 2, 3, 4, 6, 8)
    sweep_runs_per_cell: int = 20

    def __post_init__(self):
        if self.n_anchors < 2:
            raise ConfigError("need at least 2 anchors")
        if self.n_targets < 1:
            raise ConfigError("need at least 1 target")
        if self.duration_s < self.epoch_dt_s:
            raise ConfigError("duration_s must cover at least one epoch")
        if self.burn_in_s >= self.duration_s:
            raise ConfigError("burn_in_s must be shorter than duration_s")
        if self.mode not in ("statistical", "signal"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        expand_measurement_set(self.measurement_set)
        if not 0.0 < self.gate_prob < 1.0:
            raise ConfigError("gate_prob must be in (0, 1)")
        if self.anchor_prior_sigma <= 0:
            raise ConfigError("anchor_prior_sigma must be positive")
        object.__setattr__(self, "anchor_z_band", tuple(map(float, self.anchor_z_band)))
        object.__setattr__(self, "target_z_band", tuple(map(float, self.target_z_band)))
        object.__setattr__(self, "sweep_anchors", tuple(map(int, self.sweep_anchors)))
        object.__setattr__(self, "sweep_targets", tuple(map(int, self.sweep_targets)))

    @property
    def epochs(self) -> int:
        return int(math.floor(self.duration_s / self.epoch_dt_s + 1e-9))

    @property
    def burn_in_epochs(self) -> int:
        return min(int(round(self.burn_in_s / self.epoch_dt_s)), self.epochs)

    def process_model(self) -> ProcessModel:
        return ProcessModel(self.epoch_dt_s, self.target_jerk_psd, self.anchor_jitter)

    def measurement_config(self) -> MeasurementConfig:
        path_lists = sig.load_path_lists(self.path_csv) if self.path_csv else {}
        return MeasurementConfig(
            kinds=expand_measurement_set(self.measurement_set),
            noise=self.noise,
            codebook=sig.make_codebook(self.codebook_span_deg,
                                       self.codebook_beams_per_axis),
            ofdm=self.ofdm,
            snr_db=self.snr_db,
            path_lists=path_lists,
        )

    def waypoint_params(self) -> WaypointModelParams:
        return WaypointModelParams(self.speed_min, self.speed_max,
                                   self.duration_s, self.epoch_dt_s,
                                   self.target_z_band, self.pause_s)


# --- config (de)serialization -------------------------------------------

_SCHEMA = {
    "scene": ("bounds", "obstacles", "carrier_freq_hz", "tx_power_dbm",
              "rx_sensitivity_dbm", "rx_array_gain_db"),
    "layout": ("kind", "anchors", "z_band"),
    "targets": ("count", "speed_min", "speed_max", "z_band", "pause_s"),
    "measurements": ("set", "mode", "sigma_delay_m", "sigma_angle_deg",
                     "snr_db", "codebook_span_deg", "codebook_beams_per_axis",
                     "subcarrier_spacing_hz", "num_subcarriers", "path_csv"),
    "filter": ("target_jerk_psd", "anchor_jitter", "gate_prob",
               "anchor_prior_sigma_m", "target_pos_sigma_m", "vel_sigma_ms",
               "acc_sigma_ms2"),
    "run": ("duration_s", "epoch_dt_s", "burn_in_s", "seed", "monte_carlo_runs"),
    "sweep": ("anchors", "targets", "runs_per_cell"),
}


def _check_keys(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for group, sub in doc.items():
        if group not in _SCHEMA:
            raise ConfigError(f"unknown config section {group!r}")
        if not isinstance(sub, dict):
            raise ConfigError(f"section {group!r} must be an object")
        for key in sub:
            if key not in _SCHEMA[group]:
                raise ConfigError(f"unknown config key {group}.{key}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a config from its JSON form, rejecting unknown keys."""
    _check_keys(doc)
    kw = {}
    sc = doc.get("scene", {})
    scene_kw = {}
    if "bounds" in sc:
        scene_kw["bounds"] = BoxObstacle(*sc["bounds"])
    if "obstacles" in sc:
        scene_kw["obstacles"] = tuple(BoxObstacle(*ob) for ob in sc["obstacles"])
    for src, dst in (("carrier_freq_hz", "carrier_freq"),
                     ("tx_power_dbm", "tx_power_dbm"),
                     ("rx_sensitivity_dbm", "rx_sensitivity_dbm"),
                     ("rx_array_gain_db", "rx_array_gain_db")):
        if src in sc:
            scene_kw[dst] = float(sc[src])
    try:
        kw["scene"] = Scene(**scene_kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scene: {exc}") from exc

    lay = doc.get("layout", {})
    if "kind" in lay:
        kw["layout_kind"] = str(lay["kind"])
    if "anchors" in lay:
        kw["n_anchors"] = int(lay["anchors"])
    if "z_band" in lay:
        kw["anchor_z_band"] = tuple(lay["z_band"])

    tg = doc.get("targets", {})
    if "count" in tg:
        kw["n_targets"] = int(tg["count"])
    for src, dst in (("speed_min", "speed_min"), ("speed_max", "speed_max"),
                     ("pause_s", "pause_s")):
        if src in tg:
            kw[dst] = float(tg[src])
    if "z_band" in tg:
        kw["target_z_band"] = tuple(tg["z_band"])

    ms = doc.get("measurements", {})
    if "set" in ms:
        kw["measurement_set"] = str(ms["set"])
    if "mode" in ms:
        kw["mode"] = str(ms["mode"])
    noise_kw = {}
    if "sigma_delay_m" in ms:
        noise_kw["sigma_delay_m"] = float(ms["sigma_delay_m"])
    if "sigma_angle_deg" in ms:
        noise_kw["sigma_angle_deg"] = float(ms["sigma_angle_deg"])
    try:
        kw["noise"] = NoiseModel(**noise_kw)
    except ValueError as exc:
        raise ConfigError(f"measurements: {exc}") from exc
    if "snr_db" in ms:
        kw["snr_db"] = float(ms["snr_db"])
    if "codebook_span_deg" in ms:
        kw["codebook_span_deg"] = float(ms["codebook_span_deg"])
    if "codebook_beams_per_axis" in ms:
        kw["codebook_beams_per_axis"] = int(ms["codebook_beams_per_axis"])
    ofdm_kw = {}
    if "subcarrier_spacing_hz" in ms:
        ofdm_kw["subcarrier_spacing"] = float(ms["subcarrier_spacing_hz"])
    if "num_subcarriers" in ms:
        ofdm_kw["num_subcarriers"] = int(ms["num_subcarriers"])
    ofdm_kw["carrier_freq"] = kw["scene"].carrier_freq
    try:
        kw["ofdm"] = sig.OfdmConfig(**ofdm_kw)
    except ValueError as exc:
        raise ConfigError(f"measurements: {exc}") from exc
    if "path_csv" in ms and ms["path_csv"] is not None:
        kw["path_csv"] = str(ms["path_csv"])

    ft = doc.get("filter", {})
    for src, dst in (("target_jerk_psd", "target_jerk_psd"),
                     ("anchor_jitter", "anchor_jitter"),
                     ("gate_prob", "gate_prob"),
                     ("anchor_prior_sigma_m", "anchor_prior_sigma"),
                     ("target_pos_sigma_m", "target_pos_sigma"),
                     ("vel_sigma_ms", "vel_sigma"),
                     ("acc_sigma_ms2", "acc_sigma")):
        if src in ft:
            kw[dst] = float(ft[src])

    rn = doc.get("run", {})
    for src, dst, conv in (("duration_s", "duration_s", float),
                           ("epoch_dt_s", "epoch_dt_s", float),
                           ("burn_in_s", "burn_in_s", float),
                           ("seed", "seed", int),
                           ("monte_carlo_runs", "monte_carlo_runs", int)):
        if src in rn:
            kw[dst] = conv(rn[src])

    sw = doc.get("sweep", {})
    if "anchors" in sw:
        kw["sweep_anchors"] = tuple(sw["anchors"])
    if "targets" in sw:
        kw["sweep_targets"] = tuple(sw["targets"])
    if "runs_per_cell" in sw:
        kw["sweep_runs_per_cell"] = int(sw["runs_per_cell"])

    try:
        return ExperimentConfig(**kw)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Serialize with every default expanded; inverse of config_from_dict."""
    return {
        "scene": {
            "bounds": [cfg.scene.bounds.min_corner.tolist(),
                       cfg.scene.bounds.max_corner.tolist()],
            "obstacles": [[ob.min_corner.tolist(), ob.max_corner.tolist()]
                          for ob in cfg.scene.obstacles],
            "carrier_freq_hz": cfg.scene.carrier_freq,
            "tx_power_dbm": cfg.scene.tx_power_dbm,
            "rx_sensitivity_dbm": cfg.scene.rx_sensitivity_dbm,
            "rx_array_gain_db": cfg.scene.rx_array_gain_db,
        },
        "layout": {
            "kind": cfg.layout_kind,
            "anchors": cfg.n_anchors,
            "z_band": list(cfg.anchor_z_band),
        },
        "targets": {
            "count": cfg.n_targets,
            "speed_min": cfg.speed_min,
            "speed_max": cfg.speed_max,
            "z_band": list(cfg.target_z_band),
            "pause_s": cfg.pause_s,
        },
        "measurements": {
            "set": cfg.measurement_set,
            "mode": cfg.mode,
            "sigma_delay_m": cfg.noise.sigma_delay_m,
            "sigma_angle_deg": cfg.noise.sigma_angle_deg,
            "snr_db": cfg.snr_db,
            "codebook_span_deg": cfg.codebook_span_deg,
            "codebook_beams_per_axis": cfg.codebook_beams_per_axis,
            "subcarrier_spacing_hz": cfg.ofdm.subcarrier_spacing,
            "num_subcarriers": cfg.ofdm.num_subcarriers,
            "path_csv": cfg.path_csv,
        },
        "filter": {
            "target_jerk_psd": cfg.target_jerk_psd,
            "anchor_jitter": cfg.anchor_jitter,
            "gate_prob": cfg.gate_prob,
            "anchor_prior_sigma_m": cfg.anchor_prior_sigma,
            "target_pos_sigma_m": cfg.target_pos_sigma,
            "vel_sigma_ms": cfg.vel_sigma,
            "acc_sigma_ms2": cfg.acc_sigma,
        },
        "run": {
            "duration_s": cfg.duration_s,
            "epoch_dt_s": cfg.epoch_dt_s,
            "burn_in_s": cfg.burn_in_s,
            "seed": cfg.seed,
            "monte_carlo_runs": cfg.monte_carlo_runs,
        },
        "sweep": {
            "anchors": list(cfg.sweep_anchors),
            "targets": list(cfg.sweep_targets),
            "runs_per_cell": cfg.sweep_runs_per_cell,
        },
    }


# --- single run -----------------------------------------------------------


@dataclass(eq=False)
class RunResult:
    """Per-epoch, per-node error record of one simulated run."""

    node_ids: tuple              # targets first, then anchors
    n_targets: int
    err2d: np.ndarray            # (epochs, nodes) meters
    err_vert: np.ndarray
    err3d: np.ndarray
    nees: np.ndarray             # (epochs,)
    pdop: np.ndarray             # (epochs, n_targets) delay-geometry PDOP
    state_dim: int
    epochs: int
    epoch_dt_s: float
    burn_in_epochs: int
    convergence_epoch: int
    diagnostics: dict
    trace: list | None = None    # optional per-epoch snapshot rows

    def samples(self, err: str = "3d", nodes: str = "joint",
                post_burn_in: bool = True) -> np.ndarray:
        """Pooled error samples for one error class and node class."""
        arr = {"2d": self.err2d, "vertical": self.err_vert, "3d": self.err3d}[err]
        k0 = self.burn_in_epochs if post_burn_in else 0
        if nodes == "targets":
            arr = arr[:, :self.n_targets]
        elif nodes == "anchors":
            arr = arr[:, self.n_targets:]
        elif nodes != "joint":
            raise ValueError(f"unknown node class {nodes!r}")
        return arr[k0:].ravel()


def _true_joint_mean(trajs, anchors, epoch: int) -> np.ndarray:
    parts = []
    for tr in trajs:
        parts.extend([tr.positions[epoch], tr.velocities[epoch],
                      tr.accelerations[epoch]])
    parts.append(anchors.ravel())
    return np.concatenate(parts)


def run_scenario(config: ExperimentConfig, seed=None,
                 record_trace: bool = False) -> RunResult:
    """Simulate one scenario end to end; deterministic per seed.

    Generates the anchor layout and target trajectories, synthesizes
    measurements per epoch, initializes from batch least squares plus anchor
    priors, then runs the predict/update loop recording errors jointly for
    targets and anchors.
    """
    if seed is None:
        seed = config.seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    layout_ss, prior_ss, meas_ss, *traj_ss = ss.spawn(3 + config.n_targets)

    scene = config.scene
    layout = make_anchor_layout(config.layout_kind, config.n_anchors, scene,
                                config.anchor_z_band, layout_ss)
    anchors = layout.positions
    trajs = [generate_trajectory(config.waypoint_params(), scene, traj_ss[i])
             for i in range(config.n_targets)]
    epochs = trajs[0].epochs

    prior_rng = np.random.default_rng(prior_ss)
    priors = {
        f"a{i}": (anchors[i] + config.anchor_prior_sigma * prior_rng.standard_normal(3),
                  config.anchor_prior_sigma)
        for i in range(config.n_anchors)
    }

    mcfg = config.measurement_config()
    meas_rng = np.random.default_rng(meas_ss)
    process = config.process_model()

    targets0 = np.stack([tr.positions[0] for tr in trajs])
    meas0 = epoch_measurements(config.mode, scene, targets0, anchors, mcfg,
                               meas_rng, epoch=0)
    diagnostics = {"init_fallbacks": [], "n_measurements": len(meas0),
                   "n_gated": 0, "n_used": 0}
    # Batch least squares per target; a rank-deficient target falls back to
    # the scene centroid with a covariance wide enough to cover the hall.
    fallback_sigma = float(np.linalg.norm(scene.bounds.size)) / 4.0
    target_inits, pos_sigmas = {}, {}
    for i in range(config.n_targets):
        tid = f"t{i}"
        own = [m for m in meas0 if m.target_id == tid]
        try:
            target_inits[tid] = batch_ls_init(own, priors, scene)[tid]
            pos_sigmas[tid] = config.target_pos_sigma
        except (InitializationError, KeyError) as exc:
            target_inits[tid] = scene.bounds.center
            pos_sigmas[tid] = fallback_sigma
            diagnostics["init_fallbacks"].append(f"{tid}: {exc}")

    state = init_joint_state(target_inits, priors, process,
                             target_pos_sigma=pos_sigmas,
                             vel_sigma=config.vel_sigma,
                             acc_sigma=config.acc_sigma, epoch=0)

    node_ids = state.target_ids + state.anchor_ids
    n_nodes = len(node_ids)
    err2d = np.empty((epochs, n_nodes))
    err_vert = np.empty((epochs, n_nodes))
    err3d = np.empty((epochs, n_nodes))
    nees = np.empty(epochs)
    pdop = np.full((epochs, config.n_targets), np.inf)
    trace = [] if record_trace else None
    gdop_mode = "tdoa" if "tdoa" in mcfg.kinds else "toa"
    pos_offsets = np.asarray([state.index_map[nid] for nid in node_ids])
    target_paths = np.stack([tr.positions for tr in trajs], axis=1)  # (epochs, T, 3)

    def record(k, st):
        truth = np.vstack([target_paths[k], anchors])
        est = np.stack([st.mean[o:o + 3] for o in pos_offsets])
        e = est - truth
        err2d[k] = np.hypot(e[:, 0], e[:, 1])
        err_vert[k] = np.abs(e[:, 2])
        err3d[k] = np.linalg.norm(e, axis=1)
        if trace is not None:
            for col, nid in enumerate(node_ids):
                kind = "target" if col < config.n_targets else "anchor"
                trace.append((k, nid, kind, est[col, 0], est[col, 1], est[col, 2],
                              err3d[k, col], float(np.trace(st.position_cov(nid)))))
        nees[k] = joint_nees(st, _true_joint_mean(trajs, anchors, k))
        linked = link_mask(scene, target_paths[k], anchors)
        for i in range(config.n_targets):
            vis = anchors[linked[i]]
            if vis.shape[0] >= 2:
                pdop[k, i] = gdop(vis, target_paths[k, i], gdop_mode).pdop

    record(0, state)
    for k in range(1, epochs):
        state = predict(state, process)
        meas = epoch_measurements(config.mode, scene, target_paths[k], anchors,
                                  mcfg, meas_rng, epoch=k)
        state, report = update(state, meas, config.gate_prob)
        diagnostics["n_measurements"] += len(meas)
        diagnostics["n_gated"] += report.n_gated
        diagnostics["n_used"] += report.n_used
        record(k, state)

    joint_med = np.median(err3d, axis=1)
    below = np.flatnonzero(joint_med < 1.0)
    convergence_epoch = int(below[0]) if below.size else -1

    return RunResult(
        node_ids=node_ids, n_targets=config.n_targets, err2d=err2d,
        err_vert=err_vert, err3d=err3d, nees=nees, pdop=pdop,
        state_dim=state.dim, epochs=epochs, epoch_dt_s=config.epoch_dt_s,
        burn_in_epochs=config.burn_in_epochs,
        convergence_epoch=convergence_epoch, diagnostics=diagnostics,
        trace=trace,
    )


# --- statistics ------------------------------------------------------------


_PCTS = (5, 25, 50, 75, 90, 95, 99)


@dataclass(eq=False)
class MetricsReport:
    """Order statistics, empirical CDF, and sub-threshold probabilities."""

    n: int
    median: float
    percentiles: dict
    cdf_thresholds: np.ndarray
    cdf: np.ndarray
    p_below: dict

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "median": self.median,
            "percentiles": {str(k): v for k, v in self.percentiles.items()},
            "cdf_thresholds": [float(v) for v in self.cdf_thresholds],
            "cdf": [float(v) for v in self.cdf],
            "p_below": {str(k): v for k, v in self.p_below.items()},
        }


def error_stats(errors, thresholds=(1.0, 0.2)) -> MetricsReport:
    """Summarize an error sample; sub-threshold probabilities use a strict
    'fraction below' convention."""
    errors = np.asarray(errors, dtype=float).ravel()
    if errors.size == 0:
        raise ValueError("empty error array")
    pct = {q: float(np.percentile(errors, q)) for q in _PCTS}
    top = max(float(errors.max()) * 1.02, 1e-6)
    grid = np.linspace(0.0, top, 256)
    cdf = np.searchsorted(np.sort(errors), grid, side="left") / errors.size
    p_below = {float(t): float(np.mean(errors < t)) for t in thresholds}
    return MetricsReport(
        n=int(errors.size), median=pct[50], percentiles=pct,
        cdf_thresholds=grid, cdf=cdf, p_below=p_below,
    )


def pooled_samples(results, err: str, nodes: str = "joint") -> np.ndarray:
    """Post-burn-in samples pooled over a list of runs."""
    return np.concatenate([r.samples(err, nodes) for r in results])


def summarize_runs(results) -> dict:
    """MetricsReports for every node class and error class."""
    out = {}
    for nodes in NODE_CLASSES:
        out[nodes] = {}
        for err in ERROR_CLASSES:
            out[nodes][err] = error_stats(pooled_samples(results, err, nodes),
                                          thresholds=(DEFAULT_THRESHOLDS[err],))
    return out


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LOCFUSE_THREADS", "1")))
    except ValueError:
        return 1


def _run_cell(args):
    config, seed = args
    return run_scenario(config, seed=seed)


def _map_runs(jobs):
    """Run (config, seed) jobs, in order; parallel when LOCFUSE_THREADS > 1.

    Aggregation stays order-independent because results come back in job
    order regardless of the executor.
    """
    workers = _worker_count()
    if workers == 1 or len(jobs) <= 1:
        return [_run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs))


def monte_carlo_runs(config: ExperimentConfig, n_runs: int | None = None,
                     record_trace: bool = False) -> list:
    """Independent runs with seeds spawned from the config seed."""
    n = config.monte_carlo_runs if n_runs is None else n_runs
    children = np.random.SeedSequence(config.seed).spawn(n)
    if record_trace:
        return [run_scenario(config, seed=child, record_trace=True)
                for child in children]
    return _map_runs([(config, child) for child in children])


# --- studies ----------------------------------------------------------------


@dataclass(eq=False)
class SweepResult:
    """P(3D error < 1 m) over the anchor-count x target-count grid."""

    anchor_counts: tuple
    target_counts: tuple
    p_sub1m_3d: np.ndarray          # joint pool, shape (anchors, targets)
    p_sub1m_3d_targets: np.ndarray  # target-node pool, same shape
    runs_per_cell: int

    def rows(self):
        for i, a in enumerate(self.anchor_counts):
            for j, t in enumerate(self.target_counts):
                yield a, t, self.p_sub1m_3d[i, j], self.runs_per_cell


def _sweep_z_band(scene: Scene) -> tuple:
    zmin = float(scene.bounds.min_corner[2])
    zmax = float(scene.bounds.max_corner[2])
    margin = 0.03 * (zmax - zmin)
    return (zmin + margin, zmax - margin)


def sweep(config: ExperimentConfig, anchor_counts=None, target_counts=None,
          runs_per_cell=None, progress=None) -> SweepResult:
    """Monte Carlo grid over node counts with random anchor layouts.

    Every cell uses the fused delay+angle measurement set and anchors dropped
    anywhere in the scene volume. Cell seeds derive from (base seed, anchors,
    targets, run index) so cells are reproducible and decorrelated.
    """
    anchor_counts = tuple(anchor_counts or config.sweep_anchors)
    target_counts = tuple(target_counts or config.sweep_targets)
    runs = int(runs_per_cell or config.sweep_runs_per_cell)
    if not anchor_counts or not target_counts:
        raise ValueError("sweep axes must be nonempty")

    p_joint = np.empty((len(anchor_counts), len(target_counts)))
    p_targets = np.empty_like(p_joint)
    for i, a in enumerate(anchor_counts):
        for j, t in enumerate(target_counts):
            cell_cfg = dataclasses.replace(
                config, layout_kind="random", n_anchors=a, n_targets=t,
                measurement_set="tdoa+aoa",
                anchor_z_band=_sweep_z_band(config.scene))
            results = _map_runs([
                (cell_cfg, np.random.SeedSequence([config.seed, a, t, r]))
                for r in range(runs)
            ])
            p_joint[i, j] = float(np.mean(pooled_samples(results, "3d") < 1.0))
            p_targets[i, j] = float(
                np.mean(pooled_samples(results, "3d", "targets") < 1.0))
            if progress is not None:
                progress(a, t, p_joint[i, j])
    return SweepResult(anchor_counts, target_counts, p_joint, p_targets, runs)


@dataclass(eq=False)
class GeometryComparison:
    """Paired metric reports for the collinear and non-collinear layouts."""

    reports: dict    # kind -> node class -> error class -> MetricsReport
    n_runs: int

    def report(self, kind: str, nodes: str = "joint",
               err: str = "2d") -> MetricsReport:
        return self.reports[kind][nodes][err]


def compare_geometries(config: ExperimentConfig) -> GeometryComparison:
    """Run the same seeds under both anchor geometries.

    Noise streams and trajectories are shared across the pair; only the
    layout kind differs.
    """
    run_seeds = np.random.SeedSequence(config.seed).spawn(config.monte_carlo_runs)
    reports = {}
    for kind in ("collinear", "noncollinear"):
        cfg = dataclasses.replace(config, layout_kind=kind)
        results = _map_runs([(cfg, s) for s in run_seeds])
        reports[kind] = summarize_runs(results)
    return GeometryComparison(reports, config.monte_carlo_runs)
