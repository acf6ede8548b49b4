"""Codebook construction, bistatic gains, sensing SINR, and radar MI."""

import numpy as np
import pytest

from isac_planner import geometry as ge
from isac_planner import sensing as sn
from conftest import small_scenario

GEOM = ge.ArrayGeometry(nx=8, ny=8, dx=0.05, dy=0.05, wavelength=0.1)


def aimed_single_bin_scenario(base, q_uav, mi_threshold=5.0, N=3, M=1,
                              bs=None):
    """One codebook bin pointed exactly at a hovering UAV."""
    bs = bs if bs is not None else [[0.0, 0.0]]
    v = np.asarray(bs[0])
    dx, dy = np.asarray(q_uav) - v
    zen = np.arctan2(np.hypot(dx, dy), 80.0)
    azi = np.arctan2(dy, dx)
    return small_scenario(
        base, K=1, M=M, N=N, bs_positions=bs,
        uav_start=[list(q_uav)], uav_end=[list(q_uav)],
        zenith_count=1, azimuth_count=1,
        zenith_range=[zen, min(zen + 0.02, np.pi / 2)],
        azimuth_range=[azi, azi + 0.02],
        mi_threshold=mi_threshold)


class TestCodebook:
    def test_grid_size(self, setting1):
        cb = sn.codebook_from_scenario(setting1)
        assert cb.num_beams == 7 * 16 == 112
        assert cb.beams.shape == (7, 16, 64)

    def test_single_beam_grid(self):
        cb = sn.build_codebook(GEOM, 1, 1, [0.3, 0.4], [0.1, 0.2])
        assert cb.num_beams == 1
        expected = ge.steering_from_angles(0.3, 0.1, GEOM) / 8.0
        assert np.allclose(cb.beams[0, 0], expected, atol=1e-12)

    def test_unit_norms(self, setting1):
        cb = sn.codebook_from_scenario(setting1)
        norms = np.linalg.norm(cb.flat_beams(), axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12

    def test_uniform_spacing(self, setting1):
        cb = sn.codebook_from_scenario(setting1)
        assert np.allclose(np.diff(cb.zenith), cb.zenith[1] - cb.zenith[0])
        assert np.allclose(np.diff(cb.azimuth), 2 * np.pi / 16)
        assert cb.azimuth[0] == pytest.approx(-np.pi)
        assert cb.azimuth[-1] < np.pi  # exclusive upper edge


class TestBistaticGain:
    def test_monostatic_overhead(self):
        g = sn.bistatic_gain([0, 0], 80.0, [0, 0], [0, 0], 1.0)
        assert g == pytest.approx(1.0 / 6400 ** 2, rel=1e-12)
        assert g == pytest.approx(2.44140625e-8, rel=1e-6)

    def test_symmetric_bistatic_equals_monostatic(self):
        # Equal leg lengths: same product of free-space legs.
        g_bi = sn.bistatic_gain([0, 0], 80.0, [60, 0], [-60, 0], 1.0)
        g_mono = sn.bistatic_gain([60, 0], 80.0, [120, 0], [120, 0], 1.0)
        assert g_bi == pytest.approx(g_mono, rel=1e-12)

    def test_fourth_power_law(self):
        g1 = sn.bistatic_gain([0, 0], 80.0, [60, 0], [0, 60], 1.0)
        g2 = sn.bistatic_gain([0, 0], 160.0, [120, 0], [0, 120], 1.0)
        assert g2 == pytest.approx(g1 / 16.0, rel=1e-12)

    def test_tx_rx_symmetry(self, setting1):
        traj = ge.Trajectory.straight_line(setting1)
        cb = sn.codebook_from_scenario(setting1)
        cache = sn.build_sensing_cache(traj, cb, setting1)
        assert np.allclose(cache.beta_s, cache.beta_s.transpose(1, 0, 2, 3))

    def test_coupling_operator_norm_bound(self, setting1):
        traj = ge.Trajectory.straight_line(setting1)
        cb = sn.codebook_from_scenario(setting1)
        cache = sn.build_sensing_cache(traj, cb, setting1)
        n_p = setting1.n_elements
        bound = np.einsum("jmkn->jmn", cache.beta_s) * n_p ** 2
        assert np.all(cache.coupling <= bound[:, :, None, :] + 1e-12)
        assert np.all(cache.coupling >= 0)


class TestSensingSinr:
    def test_zero_power_zero_sinr(self, setting1):
        s = small_scenario(setting1, K=1, M=1, N=2)
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        sinr = sn.sensing_sinr_all(cache, np.zeros((1, cb.num_beams, 2)),
                                   s.noise_bs)
        assert np.all(sinr == 0.0)

    def test_matched_monostatic_closed_form(self, setting1):
        # Combiner and beam exactly matched to the true angles: with
        # unit-norm beams |u^H a|^2 = |a^H w|^2 = Np, so the bin SINR is
        # beta_s * p * Np^2 / noise.
        s = aimed_single_bin_scenario(setting1, [30.0, 10.0])
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        p = 0.37
        eta = np.full((1, 1, 3), p)
        d2 = 80.0 ** 2 + 30.0 ** 2 + 10.0 ** 2
        beta_s = s.ref_gain ** 2 / d2 ** 2
        expected = beta_s * p * 64 ** 2 / s.noise_bs
        got = sn.sensing_sinr(0, 0, 0, 0, cache, eta, s)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_orthogonal_combiner_kills_signal(self, setting1):
        # A bin pointed at the array null of the true direction sees ~0.
        s = aimed_single_bin_scenario(setting1, [30.0, 10.0])
        traj = ge.Trajectory.straight_line(s)
        cb_hit = sn.codebook_from_scenario(s)
        cache_hit = sn.build_sensing_cache(traj, cb_hit, s)
        # Steer the bin far away in azimuth: pattern factor collapses.
        s_miss = s.with_updates(azimuth_range=[2.0, 2.02])
        cb_miss = sn.codebook_from_scenario(s_miss)
        cache_miss = sn.build_sensing_cache(traj, cb_miss, s_miss)
        hit = cache_hit.coupling[0, 0, 0, 0]
        miss = cache_miss.coupling[0, 0, 0, 0]
        assert miss < 1e-3 * hit

    def test_monotone_in_powers(self, setting1):
        rng = np.random.default_rng(12)
        s = small_scenario(setting1, K=2, M=2, N=2)
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        B = cb.num_beams
        for _ in range(20):
            eta = rng.uniform(0.0, 0.4, (2, B, 2))
            base = sn.sensing_sinr_all(cache, eta, s.noise_bs)
            up = eta.copy()
            up[0] *= 1.5
            boosted = sn.sensing_sinr_all(cache, up, s.noise_bs)
            assert np.all(boosted[0] >= base[0] - 1e-12)
            assert np.all(boosted[1] <= base[1] + 1e-12)


class TestRadarMi:
    def test_zero_power_zero_mi(self, setting1):
        s = small_scenario(setting1, K=1, M=1, N=2)
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        assert sn.radar_mi_per_slot(0, cache, np.zeros((1, cb.num_beams, 2)),
                                    s) == 0.0

    def test_single_bin_sinr_three_gives_two_bits(self, setting1):
        s = aimed_single_bin_scenario(setting1, [30.0, 10.0])
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        # Scale power so the sole bin hits SINR exactly 3.
        p = 3.0 * s.noise_bs / cache.coupling[0, 0, 0, 0]
        eta = np.full((1, 1, 3), p)
        assert sn.radar_mi_per_slot(0, cache, eta, s) == \
            pytest.approx(2.0, rel=1e-12)

    def _ring_scenario(self, setting1, m, angles):
        r = 90.0
        bs = [[r * np.cos(a), r * np.sin(a)] for a in angles]
        zen = np.arctan2(r, 80.0)
        return small_scenario(setting1, K=1, M=m, N=2, bs_positions=bs,
                              uav_start=[[0.0, 0.0]], uav_end=[[0.0, 0.0]],
                              zenith_count=1, azimuth_count=m,
                              zenith_range=[zen, zen + 0.01],
                              azimuth_range=[-np.pi, np.pi])

    def test_symmetric_three_bs_layout(self, setting1):
        # Three BSs at equal range around a centered UAV with matching
        # azimuth bins: per-BS SINR multisets agree (to the level allowed
        # by the square array, which is not 120-degree symmetric) and the
        # slot MI is M times one BS's bin sum of log2(1 + sinr).
        s = self._ring_scenario(setting1, 3,
                                (0.0, 2 * np.pi / 3, 4 * np.pi / 3))
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        eta = np.full((3, 3, 2), 0.2)
        sinr = sn.sensing_sinr_all(cache, eta, s.noise_bs)
        per_bs_mi = np.log2(1 + sinr[:, :, 0]).sum(axis=1)
        assert np.ptp(per_bs_mi) < 1e-2 * per_bs_mi[0]
        assert sn.radar_mi_per_slot(0, cache, eta, s) == \
            pytest.approx(3 * per_bs_mi.mean(), rel=1e-2)

    def test_symmetric_four_bs_layout_exact(self, setting1):
        # A right-angle ring respects the square array's symmetry group,
        # so the per-BS SINR multisets are identical to round-off and the
        # slot MI equals M * Q * L terms of log2(1 + s) exactly.
        s = self._ring_scenario(setting1, 4,
                                (0.0, np.pi / 2, np.pi, -np.pi / 2))
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        eta = np.full((4, 4, 2), 0.2)
        sinr = sn.sensing_sinr_all(cache, eta, s.noise_bs)
        per_bs = np.sort(sinr[:, :, 0], axis=1)
        assert np.allclose(per_bs, per_bs[0], rtol=1e-9, atol=1e-15)
        expected = 4 * np.log2(1 + per_bs[0]).sum()
        assert sn.radar_mi_per_slot(0, cache, eta, s) == \
            pytest.approx(expected, rel=1e-12)

    def test_cumulative_mi_linear_in_delta(self, setting1):
        rng = np.random.default_rng(4)
        s = small_scenario(setting1, K=2, M=2, N=4)
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        eta = rng.uniform(0, 0.3, (2, cb.num_beams, 4))
        delta = rng.uniform(0.05, 0.95, 4)
        base = sn.cumulative_radar_mi(cache, eta, delta, s)
        slopes = sn.radar_mi_slopes(cache, eta, s.noise_bs)
        assert base == pytest.approx(float(delta @ slopes), rel=1e-12)
        for alpha in (0.25, 0.5, 1.0):
            assert sn.cumulative_radar_mi(cache, eta, alpha * delta, s) == \
                pytest.approx(alpha * base, rel=1e-12)

    def test_constant_slope_sum(self, setting1):
        s = aimed_single_bin_scenario(setting1, [30.0, 10.0], N=3)
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        eta = np.full((1, 1, 3), 0.1)
        c = sn.radar_mi_slopes(cache, eta, s.noise_bs)[0]
        delta = np.full(3, 0.05)
        assert sn.cumulative_radar_mi(cache, eta, delta, s) == \
            pytest.approx(3 * 0.05 * c, rel=1e-12)

    def test_two_slot_arithmetic_example(self, setting1):
        # delta = [0.575, 0.95], slopes [10, 5] -> 10.5 bits.
        s = small_scenario(setting1, K=1, M=1, N=2)
        traj = ge.Trajectory.straight_line(s)
        cb = sn.codebook_from_scenario(s)
        cache = sn.build_sensing_cache(traj, cb, s)
        # Scale per-slot powers so slопes are exactly [10, 5] bits.
        eta = np.zeros((1, cb.num_beams, 2))
        best = np.argmax(cache.coupling[0, 0, :, 0])
        for n, target in enumerate((10.0, 5.0)):
            coup = cache.coupling[0, 0, best, n]
            eta[0, best, n] = (2.0 ** target - 1.0) * s.noise_bs / coup
        assert sn.cumulative_radar_mi(cache, eta, np.array([0.575, 0.95]),
                                      s) == pytest.approx(10.5, rel=1e-9)
