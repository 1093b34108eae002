"""Joint positioning and tracking of anchor and target nodes in a 3D
industrial scene from sidelink delay (ToA/TDoA) and angle (AoA)
measurements, built around a joint extended Kalman filter."""

from .scene import (BoxObstacle, Scene, AnchorLayout, los_check, path_loss_db,
                    link_available, gdop, make_anchor_layout, SPEED_OF_LIGHT)
from .mobility import WaypointModelParams, Trajectory, generate_trajectory, kinematic_sample
from .measurement import (Measurement, NoiseModel, MeasurementConfig,
                          calibrate_sigma, synth_statistical, true_geometry,
                          epoch_measurements, wrap_angle)
from .signal import (ArrayConfig, BeamCodebook, OfdmConfig, PathList,
                     steering_vector, beam_rsrp, beam_sweep_aoa, make_codebook,
                     ofdm_cfr, ofdm_toa, load_path_lists)
from .fusion import (JointState, ProcessModel, predict, update, h_model,
                     jacobian, batch_ls_init, init_joint_state, joint_nees)
from .experiment import (ExperimentConfig, RunResult, MetricsReport,
                         run_scenario, error_stats, sweep, compare_geometries,
                         monte_carlo_runs, config_from_dict, config_to_dict)

__version__ = "0.1.0"
