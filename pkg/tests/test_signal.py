import math

import numpy as np
import pytest

from locfuse.scene import SPEED_OF_LIGHT
from locfuse.signal import (ArrayConfig, BeamCodebook, EstimationError,
                            OfdmConfig, PathList, beam_rsrp, beam_sweep_aoa,
                            load_path_lists, make_codebook, ofdm_cfr,
                            ofdm_toa, steering_vector)


@pytest.fixture(scope="module")
def array8():
    return ArrayConfig()


@pytest.fixture(scope="module")
def codebook():
    return make_codebook()


class TestSteeringVector:
    def test_broadside_all_equal(self, array8):
        a = steering_vector(array8, 0.0, 0.0)
        assert np.allclose(a, 1.0)

    def test_unit_modulus(self, array8):
        a = steering_vector(array8, 0.43, -0.2)
        assert np.allclose(np.abs(a), 1.0)

    def test_self_inner_product_is_element_count(self, array8):
        a = steering_vector(array8, -0.7, 0.55)
        assert abs(np.vdot(a, a)) == pytest.approx(64.0)

    def test_length(self):
        a = steering_vector(ArrayConfig(rows=4, cols=6), 0.1, 0.1)
        assert a.shape == (24,)

    def test_nonfinite_rejected(self, array8):
        with pytest.raises(ValueError):
            steering_vector(array8, math.nan, 0.0)


class TestBeamRsrp:
    def test_matched_beam_is_global_max_noiseless(self, array8, codebook):
        # truth exactly on a codebook beam with a physical direction
        q = codebook.q_grid[7]       # 0.0
        p = codebook.p_grid[9]
        el = math.asin(q)
        az = math.asin(p / math.cos(el))
        powers = beam_rsrp(array8, codebook, az, el, 20.0, rng=None)
        assert int(np.argmax(powers)) == 7 * 15 + 9

    def test_output_length(self, array8, codebook):
        powers = beam_rsrp(array8, codebook, 0.1, 0.2, 10.0,
                           np.random.default_rng(0))
        assert powers.shape == (codebook.num_beams,)

    def test_argmax_stable_across_seeds_at_high_snr(self, array8, codebook):
        q = codebook.q_grid[6]
        p = codebook.p_grid[8]
        el = math.asin(q)
        az = math.asin(p / math.cos(el))
        arg = set()
        for seed in range(20):
            powers = beam_rsrp(array8, codebook, az, el, 20.0,
                               np.random.default_rng(seed))
            arg.add(int(np.argmax(powers)))
        assert arg == {6 * 15 + 8}


class TestBeamSweepAoa:
    def test_on_grid_truth_exact(self, array8, codebook):
        q = codebook.q_grid[7]
        p = codebook.p_grid[5]
        el = math.asin(q)
        az = math.asin(p / math.cos(el))
        powers = beam_rsrp(array8, codebook, az, el, 30.0, rng=None)
        est = beam_sweep_aoa(powers, codebook)
        assert est.azimuth == pytest.approx(az, abs=1e-9)
        assert est.elevation == pytest.approx(el, abs=1e-9)
        assert not est.on_edge

    def test_midway_truth_noiseless_within_half_degree(self, array8, codebook):
        # dense-grid style check at off-grid directions between beams
        for jp in (5, 6, 8):
            for jq in (6, 7):
                p = 0.5 * (codebook.p_grid[jp] + codebook.p_grid[jp + 1])
                q = 0.5 * (codebook.q_grid[jq] + codebook.q_grid[jq + 1])
                el = math.asin(q)
                az = math.asin(p / math.cos(el))
                powers = beam_rsrp(array8, codebook, az, el, 30.0, rng=None)
                est = beam_sweep_aoa(powers, codebook)
                assert abs(math.degrees(est.azimuth - az)) <= 0.5
                assert abs(math.degrees(est.elevation - el)) <= 0.5

    def test_equal_neighbors_keep_grid_value(self, codebook):
        powers = np.full(codebook.num_beams, -30.0)
        center = 7 * 15 + 7
        powers[center] = 0.0
        powers[center - 1] = -10.0
        powers[center + 1] = -10.0   # symmetric: zero offset
        powers[center - 15] = -10.0
        powers[center + 15] = -10.0
        est = beam_sweep_aoa(powers, codebook)
        assert est.azimuth == pytest.approx(0.0, abs=1e-12)
        assert est.elevation == pytest.approx(0.0, abs=1e-12)

    def test_edge_argmax_flagged(self, codebook):
        powers = np.full(codebook.num_beams, -30.0)
        powers[0] = 0.0
        est = beam_sweep_aoa(powers, codebook)
        assert est.on_edge

    def test_wrong_length_rejected(self, codebook):
        with pytest.raises(ValueError):
            beam_sweep_aoa(np.zeros(10), codebook)

    def test_codebook_grid_and_directions(self, codebook):
        assert codebook.num_beams == 225
        span = math.sin(math.radians(70.0))
        assert max(abs(v) for v in codebook.p_grid) == pytest.approx(span)
        dirs = codebook.directions()
        assert dirs.shape == (225, 2)
        # elevations map straight from the q grid; the center beam is broadside
        finite = np.isfinite(dirs[:, 1])
        assert np.all(np.abs(dirs[finite, 1]) <= math.radians(70.0) + 1e-9)
        center = 7 * 15 + 7
        assert dirs[center, 0] == pytest.approx(0.0)
        assert dirs[center, 1] == pytest.approx(0.0)
        # grid corners fall outside the visible region and carry no direction
        assert np.isnan(dirs[0, 0])


class TestOfdm:
    def test_single_unit_gain_path_flat_magnitude(self):
        cfg = OfdmConfig()
        paths = PathList(np.array([20e-9]), np.array([1.0 + 0j]),
                         np.zeros(1), np.zeros(1))
        H = ofdm_cfr(paths, cfg)
        assert H.shape == (1620,)
        assert np.allclose(np.abs(H), 1.0)

    def test_zero_delay_gives_constant_gain(self):
        cfg = OfdmConfig()
        g = 0.3 - 0.4j
        paths = PathList(np.array([0.0]), np.array([g]), np.zeros(1), np.zeros(1))
        assert np.allclose(ofdm_cfr(paths, cfg), g)

    def test_linearity(self):
        cfg = OfdmConfig()
        p1 = PathList(np.array([10e-9]), np.array([1.0 + 0j]), np.zeros(1), np.zeros(1))
        p2 = PathList(np.array([35e-9]), np.array([0.5j]), np.zeros(1), np.zeros(1))
        both = PathList(np.array([10e-9, 35e-9]), np.array([1.0, 0.5j]),
                        np.zeros(2), np.zeros(2))
        assert np.allclose(ofdm_cfr(both, cfg),
                           ofdm_cfr(p1, cfg) + ofdm_cfr(p2, cfg))

    def test_single_path_delay_recovered(self):
        cfg = OfdmConfig()
        for dist in (0.5, 10.0, 33.3, 60.0):
            tau = dist / SPEED_OF_LIGHT
            paths = PathList.line_of_sight(dist, 0.0, 0.0, cfg.carrier_freq)
            est = ofdm_toa(ofdm_cfr(paths, cfg), cfg)
            assert abs(est - tau) * SPEED_OF_LIGHT <= 0.05

    def test_zero_delay_recovered(self):
        cfg = OfdmConfig()
        paths = PathList(np.array([0.0]), np.array([1.0 + 0j]), np.zeros(1), np.zeros(1))
        est = ofdm_toa(ofdm_cfr(paths, cfg), cfg)
        assert abs(est) * SPEED_OF_LIGHT <= 0.05

    def test_two_path_first_arrival(self):
        # quadrature relative phase keeps the arrivals distinguishable at
        # one-resolution-cell separation; in-phase overlap at that spacing
        # merges the peaks, which is a bandwidth limit rather than an
        # estimator defect.
        cfg = OfdmConfig()
        for sep in (3.1, 4.0, 6.17, 9.25, 12.0):
            tau1 = 10.0 / SPEED_OF_LIGHT
            tau2 = (10.0 + sep) / SPEED_OF_LIGHT
            paths = PathList(np.array([tau1, tau2]), np.array([1.0, 1.0j]),
                             np.zeros(2), np.zeros(2))
            est = ofdm_toa(ofdm_cfr(paths, cfg), cfg)
            assert abs(est - tau1) * SPEED_OF_LIGHT <= 0.2, f"sep={sep}"

    def test_resolution_constant(self):
        cfg = OfdmConfig()
        assert cfg.delay_resolution_m == pytest.approx(3.084, abs=2e-3)

    def test_all_zero_cfr_rejected(self):
        with pytest.raises(EstimationError):
            ofdm_toa(np.zeros(1620, dtype=complex), OfdmConfig())

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            ofdm_toa(np.ones(100, dtype=complex), OfdmConfig())


class TestPathList:
    def test_sorted_delays_enforced(self):
        with pytest.raises(ValueError):
            PathList(np.array([2e-9, 1e-9]), np.ones(2, complex),
                     np.zeros(2), np.zeros(2))

    def test_negative_delay_rejected(self):
        with pytest.raises(ValueError):
            PathList(np.array([-1e-9]), np.ones(1, complex),
                     np.zeros(1), np.zeros(1))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            PathList(np.array([]), np.array([], complex), np.array([]),
                     np.array([]))

    def test_csv_roundtrip(self, tmp_path):
        csv_path = tmp_path / "paths.csv"
        csv_path.write_text(
            "pair_id,epoch,delay_s,gain_re,gain_im,az_rad,el_rad,los_flag\n"
            "t0-a0,0,3.3e-08,1.0,0.0,0.5,0.1,1\n"
            "t0-a0,0,4.5e-08,-0.3,0.2,0.8,0.0,1\n"
            "t0-a1,2,5.0e-08,0.1,0.1,-0.2,0.3,0\n")
        lists = load_path_lists(csv_path)
        assert set(lists) == {("t0-a0", 0), ("t0-a1", 2)}
        p = lists[("t0-a0", 0)]
        assert len(p) == 2
        assert p.los
        assert p.delays[0] == pytest.approx(3.3e-8)
        assert not lists[("t0-a1", 2)].los

    def test_csv_schema_checked(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("pair,epoch\nx,0\n")
        with pytest.raises(ValueError):
            load_path_lists(bad)
