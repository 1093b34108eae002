"""Joint extended Kalman filter over moving targets and static anchors.

The joint state stacks a 9-scalar kinematic block (position, velocity,
acceleration) per target followed by a 3-scalar position block per anchor.
Posteriors are refined recursively: prediction under a constant-acceleration
model with white-jerk process noise, then a stacked update from the delay
and angle measurements that survive the NLoS omission rule and a per-scalar
chi-square gate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import least_squares
from scipy.stats import chi2

from .measurement import ANGLE_KINDS, Measurement, wrap_angle
from .scene import SPEED_OF_LIGHT, Scene, as_point

_TARGET_DIM = 9
_ANCHOR_DIM = 3

__all__ = [
    "AnchorBlock", "EvaluationError", "InitializationError", "JointState",
    "MeasurementRecord", "ProcessModel", "StateError", "TargetBlock",
    "UpdateReport", "batch_ls_init", "h_model", "init_joint_state",
    "jacobian", "joint_nees", "predict", "update", "wrap_angle",
]


class StateError(ValueError):
    """The joint state violates its invariants or does not fit the input."""


class EvaluationError(ValueError):
    """A measurement model cannot be evaluated at the current estimate."""


class InitializationError(RuntimeError):
    """Batch least-squares initialization failed; the caller may fall back."""


@dataclass(frozen=True, eq=False)
class TargetBlock:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


@dataclass(frozen=True, eq=False)
class AnchorBlock:
    position: np.ndarray


@dataclass(frozen=True)
class ProcessModel:
    """Transition-noise parameters of the joint state."""

    dt: float = 0.1
    target_jerk_psd: float = 1.0   # m^2/s^5 white-jerk spectral density
    anchor_jitter: float = 1e-9    # m^2/s; keeps static blocks positive definite

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.target_jerk_psd < 0 or self.anchor_jitter <= 0:
            raise ValueError("noise parameters must be positive")


def _node_index(node_id: str) -> int:
    return int(node_id[1:])


@dataclass(frozen=True, eq=False)
class JointState:
    """Gaussian belief over all target kinematics and anchor positions."""

    epoch: int
    mean: np.ndarray
    cov: np.ndarray
    target_ids: tuple
    anchor_ids: tuple
    index_map: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        offsets, off = {}, 0
        for tid in self.target_ids:
            offsets[tid] = off
            off += _TARGET_DIM
        for aid in self.anchor_ids:
            offsets[aid] = off
            off += _ANCHOR_DIM
        if mean.shape != (off,) or cov.shape != (off, off):
            raise StateError(
                f"state dimension {off} does not match mean {mean.shape} / cov {cov.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "index_map", offsets)

    @property
    def dim(self) -> int:
        return self.mean.size

    def position(self, node_id: str) -> np.ndarray:
        off = self.index_map[node_id]
        return self.mean[off:off + 3]

    def position_cov(self, node_id: str) -> np.ndarray:
        off = self.index_map[node_id]
        return self.cov[off:off + 3, off:off + 3]

    def target_block(self, node_id: str) -> TargetBlock:
        off = self.index_map[node_id]
        if node_id not in self.target_ids:
            raise KeyError(f"{node_id} is not a target")
        return TargetBlock(self.mean[off:off + 3].copy(),
                           self.mean[off + 3:off + 6].copy(),
                           self.mean[off + 6:off + 9].copy())

    def anchor_block(self, node_id: str) -> AnchorBlock:
        if node_id not in self.anchor_ids:
            raise KeyError(f"{node_id} is not an anchor")
        return AnchorBlock(self.position(node_id).copy())

    def validate(self, tol: float = 1e-9) -> None:
        """Check symmetry and positive definiteness of the covariance."""
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.cov)):
            raise StateError("state contains non-finite entries")
        asym = np.max(np.abs(self.cov - self.cov.T))
        if asym >= tol:
            raise StateError(f"covariance asymmetry {asym:.3e} exceeds {tol:.1e}")
        try:
            np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            raise StateError("covariance is not positive definite") from None


def init_joint_state(target_inits: dict, anchor_priors: dict,
                     model: ProcessModel | None = None, *,
                     target_pos_sigma=2.0, vel_sigma: float = 1.5,
                     acc_sigma: float = 1.5, epoch: int = 0) -> JointState:
    """Assemble the initial joint belief.

    target_inits maps target id to an initial position (batch least-squares
    output). anchor_priors maps anchor id to (mean, sigma) as provided by the
    network side. target_pos_sigma may be a scalar or a per-target-id dict.
    Velocities and accelerations start zero-mean with generous per-axis
    spread; the covariance is block diagonal.
    """
    if not anchor_priors:
        raise ValueError("at least one anchor prior is required")
    target_ids = tuple(sorted(target_inits, key=_node_index))
    anchor_ids = tuple(sorted(anchor_priors, key=_node_index))
    dim = _TARGET_DIM * len(target_ids) + _ANCHOR_DIM * len(anchor_ids)
    mean = np.zeros(dim)
    cov = np.zeros((dim, dim))
    off = 0
    for tid in target_ids:
        mean[off:off + 3] = as_point(target_inits[tid])
        pos_sigma = (target_pos_sigma[tid] if isinstance(target_pos_sigma, dict)
                     else target_pos_sigma)
        diag = ([pos_sigma ** 2] * 3 + [vel_sigma ** 2] * 3
                + [acc_sigma ** 2] * 3)
        cov[off:off + 9, off:off + 9] = np.diag(diag)
        off += _TARGET_DIM
    for aid in anchor_ids:
        prior_mean, prior_sigma = anchor_priors[aid]
        mean[off:off + 3] = as_point(prior_mean)
        cov[off:off + 3, off:off + 3] = np.eye(3) * float(prior_sigma) ** 2
        off += _ANCHOR_DIM
    return JointState(epoch, mean, cov, target_ids, anchor_ids)


@lru_cache(maxsize=16)
def _target_fq(dt: float, jerk_psd: float):
    # Constant-acceleration transition; white-jerk process noise integrated
    # over one step, ordered (position, velocity, acceleration) x (x, y, z).
    F1 = np.array([[1.0, dt, 0.5 * dt * dt],
                   [0.0, 1.0, dt],
                   [0.0, 0.0, 1.0]])
    Q1 = jerk_psd * np.array([
        [dt ** 5 / 20.0, dt ** 4 / 8.0, dt ** 3 / 6.0],
        [dt ** 4 / 8.0, dt ** 3 / 3.0, dt ** 2 / 2.0],
        [dt ** 3 / 6.0, dt ** 2 / 2.0, dt],
    ])
    return np.kron(F1, np.eye(3)), np.kron(Q1, np.eye(3))


def predict(state: JointState, model: ProcessModel) -> JointState:
    """Propagate the joint belief by one epoch.

    Target blocks advance under the constant-acceleration model; anchors keep
    their mean and accrue a tiny position jitter.
    """
    state.validate()
    Ft, Qt = _target_fq(model.dt, model.target_jerk_psd)
    n_t = len(state.target_ids)
    dim = state.dim
    F = np.eye(dim)
    Q = np.zeros((dim, dim))
    for k in range(n_t):
        s = slice(k * _TARGET_DIM, (k + 1) * _TARGET_DIM)
        F[s, s] = Ft
        Q[s, s] = Qt
    a0 = n_t * _TARGET_DIM
    Q[a0:, a0:] = np.eye(dim - a0) * (model.anchor_jitter * model.dt)
    mean = F @ state.mean
    cov = F @ state.cov @ F.T + Q
    cov = 0.5 * (cov + cov.T)
    return JointState(state.epoch + 1, mean, cov, state.target_ids, state.anchor_ids)


def _pair_geometry(p_t: np.ndarray, p_a: np.ndarray, orientation=None):
    d = p_t - p_a
    r = math.sqrt(d.dot(d))
    if r < 1e-9:
        raise EvaluationError("estimated target and anchor positions coincide")
    R = None if orientation is None else np.asarray(orientation, dtype=float)
    d_local = d if R is None else R.T @ d
    return d, d_local, r, R


def _pair_h_grad(kind: str, p_t: np.ndarray, p_a: np.ndarray,
                 p_ref: np.ndarray | None = None, orientation=None,
                 ref_orientation=None):
    """Measurement model for one pair: value plus gradients with respect to
    the target, anchor, and (tdoa only) reference-anchor positions."""
    d, d_local, r, R = _pair_geometry(p_t, p_a, orientation)
    if kind == "toa":
        u = d / r
        g_t = u / SPEED_OF_LIGHT
        return r / SPEED_OF_LIGHT, g_t, -g_t, None
    if kind == "tdoa":
        if p_ref is None:
            raise ValueError("tdoa needs the reference anchor position")
        u = d / r
        d_ref = p_t - p_ref
        r_ref = math.sqrt(d_ref.dot(d_ref))
        if r_ref < 1e-9:
            raise EvaluationError("estimated target and reference anchor coincide")
        u_ref = d_ref / r_ref
        value = (r - r_ref) / SPEED_OF_LIGHT
        g_t = (u - u_ref) / SPEED_OF_LIGHT
        return value, g_t, -u / SPEED_OF_LIGHT, u_ref / SPEED_OF_LIGHT
    if kind in ANGLE_KINDS:
        x, y, z = d_local
        rho2 = x * x + y * y
        if kind == "aoa_az":
            if rho2 < 1e-18:
                raise EvaluationError("azimuth undefined at zenith/nadir")
            value = math.atan2(y, x)
            g_local = np.array([-y / rho2, x / rho2, 0.0])
        else:
            rho = math.sqrt(rho2)
            value = math.atan2(z, rho)
            r2 = rho2 + z * z
            if rho < 1e-12:
                g_local = np.array([0.0, 0.0, 0.0])
            else:
                g_local = np.array([-x * z / rho, -y * z / rho, rho]) / r2
        g_t = g_local if R is None else R @ g_local
        return value, g_t, -g_t, None
    raise ValueError(f"unknown measurement kind {kind!r}")


def h_model(kind: str, state: JointState, target_id: str, anchor_id: str,
            ref_anchor_id: str | None = None, orientation=None,
            ref_orientation=None) -> float:
    """Predicted measurement value at the current state estimate."""
    p_t = state.position(target_id)
    p_a = state.position(anchor_id)
    p_ref = None if ref_anchor_id is None else state.position(ref_anchor_id)
    value, _, _, _ = _pair_h_grad(kind, p_t, p_a, p_ref, orientation, ref_orientation)
    return value


def jacobian(kind: str, state: JointState, target_id: str, anchor_id: str,
             ref_anchor_id: str | None = None, orientation=None,
             ref_orientation=None) -> np.ndarray:
    """Row of measurement partials over the full joint state.

    Only the target position sub-block and the anchor position block(s) are
    nonzero; velocity and acceleration partials vanish for all kinds.
    """
    p_t = state.position(target_id)
    p_a = state.position(anchor_id)
    p_ref = None if ref_anchor_id is None else state.position(ref_anchor_id)
    _, g_t, g_a, g_ref = _pair_h_grad(kind, p_t, p_a, p_ref, orientation,
                                      ref_orientation)
    row = np.zeros(state.dim)
    off_t = state.index_map[target_id]
    row[off_t:off_t + 3] = g_t
    off_a = state.index_map[anchor_id]
    row[off_a:off_a + 3] = g_a
    if g_ref is not None:
        off_r = state.index_map[ref_anchor_id]
        row[off_r:off_r + 3] += g_ref
    return row


@dataclass(frozen=True)
class MeasurementRecord:
    kind: str
    target_id: str
    anchor_id: str
    innovation: float
    innovation_var: float
    gated: bool
    used: bool
    note: str = ""


@dataclass(frozen=True)
class UpdateReport:
    records: tuple
    cov_trace: float

    @property
    def n_used(self) -> int:
        return sum(r.used for r in self.records)

    @property
    def n_gated(self) -> int:
        return sum(r.gated for r in self.records)


@lru_cache(maxsize=16)
def _gate_threshold(gate_prob: float) -> float:
    return float(chi2.ppf(gate_prob, df=1))


def update(state: JointState, measurements, gate_prob: float = 0.99,
           orientations: dict | None = None):
    """Stacked EKF update from one epoch's measurements.

    NLoS measurements are dropped outright; the rest are gated on their
    normalized innovation (chi-square, one degree of freedom). Angle
    innovations are wrapped before use. With nothing surviving, the
    posterior equals the prediction. Returns (state, UpdateReport).
    """
    state.validate()
    orientations = orientations or {}
    threshold = _gate_threshold(gate_prob)
    P = state.cov

    records = []
    accepted = []  # (index array, gradient values, residual, variance)
    for m in measurements:
        if m.epoch != state.epoch:
            raise StateError(f"measurement epoch {m.epoch} != state epoch {state.epoch}")
        if not m.los:
            records.append(MeasurementRecord(m.kind, m.target_id, m.anchor_id,
                                             math.nan, math.nan, False, False,
                                             note="nlos"))
            continue
        orientation = orientations.get(m.anchor_id)
        ref_orientation = orientations.get(m.ref_anchor_id)
        try:
            value, g_t, g_a, g_ref = _pair_h_grad(
                m.kind, state.position(m.target_id), state.position(m.anchor_id),
                None if m.ref_anchor_id is None else state.position(m.ref_anchor_id),
                orientation, ref_orientation)
        except EvaluationError as exc:
            records.append(MeasurementRecord(m.kind, m.target_id, m.anchor_id,
                                             math.nan, math.nan, False, False,
                                             note=str(exc)))
            continue
        off_t = state.index_map[m.target_id]
        off_a = state.index_map[m.anchor_id]
        idx = [off_t, off_t + 1, off_t + 2, off_a, off_a + 1, off_a + 2]
        gvals = np.concatenate([g_t, g_a])
        if g_ref is not None:
            off_r = state.index_map[m.ref_anchor_id]
            idx += [off_r, off_r + 1, off_r + 2]
            gvals = np.concatenate([gvals, g_ref])
        idx = np.asarray(idx)

        nu = m.value - value
        if m.kind in ANGLE_KINDS and not (-math.pi < nu <= math.pi):
            nu = float(wrap_angle(nu))
        # Rows are sparse (two or three position blocks), so the innovation
        # variance only needs the corresponding covariance sub-block.
        s = float(gvals @ P[idx[:, None], idx] @ gvals) + m.variance
        if s <= 0 or not math.isfinite(s):
            records.append(MeasurementRecord(m.kind, m.target_id, m.anchor_id,
                                             nu, s, False, False,
                                             note="innovation variance not PD"))
            continue
        gated = nu * nu / s > threshold
        records.append(MeasurementRecord(m.kind, m.target_id, m.anchor_id,
                                         nu, s, gated, not gated))
        if not gated:
            accepted.append((idx, gvals, nu, m.variance))

    if not accepted:
        return state, UpdateReport(tuple(records), float(np.trace(state.cov)))

    H = np.zeros((len(accepted), state.dim))
    nu = np.empty(len(accepted))
    R = np.empty(len(accepted))
    for i, (idx, gvals, res, var) in enumerate(accepted):
        H[i, idx] = gvals
        nu[i] = res
        R[i] = var
    PHt = P @ H.T
    S = H @ PHt + np.diag(R)
    try:
        K = cho_solve(cho_factor(S), PHt.T).T
    except np.linalg.LinAlgError:
        K = np.linalg.solve(S, PHt.T).T
    mean = state.mean + K @ nu
    A = np.eye(state.dim) - K @ H
    cov = A @ P @ A.T + (K * R) @ K.T
    cov = 0.5 * (cov + cov.T)
    new_state = JointState(state.epoch, mean, cov, state.target_ids, state.anchor_ids)
    return new_state, UpdateReport(tuple(records), float(np.trace(cov)))


def joint_nees(state: JointState, true_mean) -> float:
    """Normalized estimation error squared against the full true state."""
    e = state.mean - np.asarray(true_mean, dtype=float)
    return float(e @ cho_solve(cho_factor(state.cov), e))


def _ls_start_points(scene: Scene) -> np.ndarray:
    lo = scene.bounds.min_corner
    hi = scene.bounds.max_corner
    axes = [np.linspace(lo[i] + 0.1 * (hi[i] - lo[i]),
                        hi[i] - 0.1 * (hi[i] - lo[i]), n)
            for i, n in ((0, 3), (1, 3), (2, 2))]
    grid = np.array(list(itertools.product(*axes)))
    return np.vstack([scene.bounds.center, grid])


def batch_ls_init(measurements, anchor_priors: dict, scene: Scene,
                  orientations: dict | None = None) -> dict:
    """Per-target positions from the first epoch's measurements.

    Nonlinear least squares on normalized residuals with anchors fixed at
    their prior means, multi-started from a coarse grid over the scene
    bounds; the best in-bounds local minimum wins. Raises
    InitializationError for under-determined or rank-deficient targets.
    """
    orientations = orientations or {}
    prior_means = {aid: as_point(mean) for aid, (mean, _) in anchor_priors.items()}

    by_target: dict = {}
    for m in measurements:
        if m.los:
            by_target.setdefault(m.target_id, []).append(m)

    results = {}
    for tid, ms in sorted(by_target.items(), key=lambda kv: _node_index(kv[0])):
        if len(ms) < 3:
            raise InitializationError(
                f"{tid}: {len(ms)} usable measurements, need at least 3")

        cache = {}

        def residuals_and_jac(p):
            key = p.tobytes()
            if key not in cache:
                res = np.empty(len(ms))
                J = np.empty((len(ms), 3))
                for i, m in enumerate(ms):
                    p_ref = (None if m.ref_anchor_id is None
                             else prior_means[m.ref_anchor_id])
                    value, g_t, _, _ = _pair_h_grad(
                        m.kind, p, prior_means[m.anchor_id], p_ref,
                        orientations.get(m.anchor_id),
                        orientations.get(m.ref_anchor_id))
                    err = m.value - value
                    if m.kind in ANGLE_KINDS:
                        err = float(wrap_angle(err))
                    sigma = math.sqrt(m.variance)
                    res[i] = err / sigma
                    J[i] = -g_t / sigma
                cache.clear()
                cache[key] = (res, J)
            return cache[key]

        lo = scene.bounds.min_corner
        hi = scene.bounds.max_corner
        best = None
        for x0 in _ls_start_points(scene):
            try:
                sol = least_squares(
                    lambda p: residuals_and_jac(p)[0], x0,
                    jac=lambda p: residuals_and_jac(p)[1],
                    bounds=(lo, hi), method="trf",
                    xtol=1e-14, ftol=1e-14, gtol=1e-14)
            except EvaluationError:
                continue
            if best is None or sol.cost < best.cost:
                best = sol
            # Normalized residuals make 0.5*m the expected cost at the true
            # optimum; a fit this good will not be beaten by another basin.
            if best.cost < len(ms):
                break
        if best is None:
            raise InitializationError(f"{tid}: every start point failed to evaluate")

        _, J = residuals_and_jac(best.x)
        svals = np.linalg.svd(J, compute_uv=False)
        if svals[-1] < 1e-6 * svals[0]:
            raise InitializationError(
                f"{tid}: rank-deficient geometry (singular values {svals})")
        results[tid] = best.x
    return results
