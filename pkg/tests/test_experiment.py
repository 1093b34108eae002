import dataclasses
import json

import numpy as np
import pytest

from locfuse.experiment import (ConfigError, ExperimentConfig, compare_geometries,
                                config_from_dict, config_to_dict, error_stats,
                                monte_carlo_runs, pooled_samples, run_scenario,
                                summarize_runs, sweep)
from locfuse.scene import BoxObstacle, Scene


def quick_config(**kw):
    defaults = dict(duration_s=15.0, burn_in_s=3.0, n_targets=1, n_anchors=4,
                    anchor_prior_sigma=0.3, monte_carlo_runs=2, seed=9)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def quick_run():
    return run_scenario(quick_config())


class TestErrorStats:
    def test_median_of_three(self):
        rep = error_stats([1.0, 2.0, 3.0])
        assert rep.median == 2.0

    def test_threshold_above_max_gives_one(self):
        rep = error_stats([0.1, 0.2, 0.3], thresholds=(5.0,))
        assert rep.p_below[5.0] == 1.0

    def test_cdf_monotone_ends_at_one(self):
        rng = np.random.default_rng(0)
        rep = error_stats(rng.exponential(1.0, size=500))
        assert np.all(np.diff(rep.cdf) >= 0)
        assert rep.cdf[-1] == 1.0

    def test_probability_monotone_in_threshold(self):
        errors = np.random.default_rng(1).uniform(0, 2, 300)
        rep = error_stats(errors, thresholds=(0.5, 1.0, 1.5))
        ps = [rep.p_below[t] for t in (0.5, 1.0, 1.5)]
        assert ps == sorted(ps)

    def test_strictly_below_convention(self):
        rep = error_stats([1.0, 1.0, 2.0], thresholds=(1.0,))
        assert rep.p_below[1.0] == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            error_stats([])

    def test_linear_interpolation_percentiles(self):
        rep = error_stats([0.0, 1.0])
        assert rep.percentiles[75] == pytest.approx(0.75)


class TestRunScenario:
    def test_deterministic(self, quick_run):
        again = run_scenario(quick_config())
        assert np.array_equal(quick_run.err3d, again.err3d)
        assert np.array_equal(quick_run.nees, again.nees)
        assert np.array_equal(quick_run.pdop, again.pdop)

    def test_seed_changes_result(self, quick_run):
        other = run_scenario(quick_config(), seed=123)
        assert not np.array_equal(quick_run.err3d, other.err3d)

    def test_shapes(self, quick_run):
        assert quick_run.epochs == 150
        assert quick_run.err3d.shape == (150, 5)
        assert quick_run.node_ids == ("t0", "a0", "a1", "a2", "a3")
        assert quick_run.nees.shape == (150,)
        assert quick_run.pdop.shape == (150, 1)

    def test_error_decomposition_identity(self, quick_run):
        lhs = quick_run.err3d ** 2
        rhs = quick_run.err2d ** 2 + quick_run.err_vert ** 2
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_joint_pool_is_union_of_classes(self, quick_run):
        joint = quick_run.samples("3d", "joint")
        targets = quick_run.samples("3d", "targets")
        anchors = quick_run.samples("3d", "anchors")
        assert joint.size == targets.size + anchors.size
        # same multiset of samples
        assert np.allclose(np.sort(joint),
                           np.sort(np.concatenate([targets, anchors])))

    def test_zero_noise_config_converges(self):
        # seed 0 yields a single constant-velocity leg over the window, so
        # the near-noiseless run is free of turn transients that the
        # chi-square gate would (correctly) reject at this noise level
        cfg = quick_config(
            duration_s=20.0, seed=0,
            noise=dataclasses.replace(quick_config().noise,
                                      sigma_delay_m=1e-4, sigma_angle_deg=1e-4),
            anchor_prior_sigma=1e-6, target_pos_sigma=0.5)
        res = run_scenario(cfg)
        tail = res.err3d[-50:, 0]
        assert np.median(tail) < 1e-3

    def test_trace_recording(self):
        res = run_scenario(quick_config(duration_s=5.0), record_trace=True)
        assert res.trace is not None
        assert len(res.trace) == res.epochs * len(res.node_ids)
        epoch, node_id, kind, *_ = res.trace[0]
        assert (epoch, node_id, kind) == (0, "t0", "target")


class TestStudies:
    def test_sweep_dimensions_and_rows(self):
        cfg = quick_config(duration_s=8.0)
        res = sweep(cfg, (2, 3), (1, 2), runs_per_cell=2)
        assert res.p_sub1m_3d.shape == (2, 2)
        rows = list(res.rows())
        assert len(rows) == 4
        assert rows[0][:2] == (2, 1)
        assert all(0.0 <= r[2] <= 1.0 for r in rows)

    def test_sweep_deterministic(self):
        cfg = quick_config(duration_s=8.0)
        a = sweep(cfg, (2, 3), (1,), runs_per_cell=2)
        b = sweep(cfg, (2, 3), (1,), runs_per_cell=2)
        assert np.array_equal(a.p_sub1m_3d, b.p_sub1m_3d)

    def test_compare_geometries_pairs_seeds(self):
        cfg = quick_config(duration_s=10.0, n_anchors=6, measurement_set="toa")
        comp = compare_geometries(cfg)
        assert set(comp.reports) == {"collinear", "noncollinear"}
        rep = comp.report("noncollinear", "joint", "2d")
        assert rep.n > 0

    def test_summarize_runs_pooling(self):
        runs = monte_carlo_runs(quick_config(duration_s=8.0), n_runs=2)
        reports = summarize_runs(runs)
        joint = reports["joint"]["3d"]
        pooled = pooled_samples(runs, "3d", "joint")
        assert joint.n == pooled.size
        assert joint.median == pytest.approx(np.median(pooled))


class TestConfigSerialization:
    def test_minimal_document_gets_defaults(self):
        cfg = config_from_dict({})
        assert cfg.scene.carrier_freq == 26e9
        assert cfg.epoch_dt_s == 0.1
        assert cfg.scene.tx_power_dbm == 0.0
        assert cfg.scene.rx_sensitivity_dbm == -90.0
        assert cfg.noise.sigma_delay_m == pytest.approx(0.10204)

    def test_unknown_key_rejected_with_name(self):
        with pytest.raises(ConfigError, match="sigma_toa_feet"):
            config_from_dict({"measurements": {"sigma_toa_feet": 1.0}})
        with pytest.raises(ConfigError, match="antenas"):
            config_from_dict({"antenas": {}})

    def test_roundtrip_identity(self):
        doc = {
            "scene": {"obstacles": [[[10, 5, 0], [20, 9, 6]]],
                      "tx_power_dbm": 3.0},
            "layout": {"kind": "random", "anchors": 5, "z_band": [2, 9]},
            "targets": {"count": 3, "speed_max": 1.4},
            "measurements": {"set": "toa+aoa", "mode": "statistical"},
            "filter": {"gate_prob": 0.97, "anchor_prior_sigma_m": 1.5},
            "run": {"duration_s": 42.0, "seed": 77},
            "sweep": {"anchors": [2, 4], "targets": [1], "runs_per_cell": 3},
        }
        cfg = config_from_dict(doc)
        full = config_to_dict(cfg)
        cfg2 = config_from_dict(full)
        assert config_to_dict(cfg2) == full
        assert cfg2.gate_prob == 0.97
        assert cfg2.n_anchors == 5
        assert len(cfg2.scene.obstacles) == 1

    def test_invariant_violations_surface_as_config_errors(self):
        with pytest.raises(ConfigError):
            config_from_dict({"layout": {"anchors": 1}})
        with pytest.raises(ConfigError):
            config_from_dict({"measurements": {"set": "rss"}})
        with pytest.raises(ConfigError):
            config_from_dict({"filter": {"gate_prob": 1.5}})
        with pytest.raises(ConfigError):
            config_from_dict({"scene": {"carrier_freq_hz": -1.0}})

    def test_json_roundtrip_via_text(self):
        cfg = quick_config()
        text = json.dumps(config_to_dict(cfg), sort_keys=True)
        cfg2 = config_from_dict(json.loads(text))
        assert config_to_dict(cfg2) == config_to_dict(cfg)


class TestNlosScenario:
    def test_blocked_scene_still_runs(self):
        scene = Scene(obstacles=(BoxObstacle((30.0, 8.0, 0.0), (40.0, 17.0, 9.0)),))
        cfg = quick_config(scene=scene, duration_s=12.0, n_anchors=5)
        res = run_scenario(cfg)
        assert np.isfinite(res.samples("3d")).all()
