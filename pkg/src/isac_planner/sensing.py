"""Sensing-phase model: beam codebook, bistatic couplings, radar MI.

Each BS sweeps the same Q x L codebook of unit-norm beams during the
sensing phase.  Echoes bounce off the UAVs; the receive combiner for bin
(q, l) is the codebook beam itself (scan-based angle estimates coincide
with the bin angles).  With the unit-variance RCS averaged out, the bin
SINR reduces to deterministic quadratic forms in the steering vectors,
and the per-slot MI slope is the sum of log2(1 + SINR) over BSs and bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (ArrayGeometry, Trajectory, direction_cosines,
                       slant_distance_sq, steering_from_angles,
                       steering_vector, _check_slant)

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class BeamCodebook:
    """Unit-norm scan beams on a uniform (zenith, azimuth) grid."""

    zenith: np.ndarray   # (Q,) radians
    azimuth: np.ndarray  # (L,) radians
    beams: np.ndarray    # (Q, L, Np) complex, unit norm

    @property
    def num_zenith(self):
        return self.zenith.size

    @property
    def num_azimuth(self):
        return self.azimuth.size

    @property
    def num_beams(self):
        return self.zenith.size * self.azimuth.size

    def flat_beams(self):
        """Beams reshaped to (Q*L, Np), zenith-major."""
        return self.beams.reshape(self.num_beams, -1)


def build_codebook(geom: ArrayGeometry, num_zenith, num_azimuth,
                   zenith_range, azimuth_range) -> BeamCodebook:
    """Normalized steering vectors on a uniform angle grid.

    The zenith grid includes both range endpoints; the azimuth grid treats
    the upper edge as exclusive (full-circle grids do not duplicate +-pi).
    """
    zen = np.linspace(zenith_range[0], zenith_range[1], num_zenith)
    azi = np.linspace(azimuth_range[0], azimuth_range[1], num_azimuth,
                      endpoint=False)
    a = steering_from_angles(zen[:, None], azi[None, :], geom)
    beams = a / np.sqrt(geom.n_elements)
    return BeamCodebook(zenith=zen, azimuth=azi, beams=beams)


def codebook_from_scenario(scenario) -> BeamCodebook:
    return build_codebook(ArrayGeometry.from_scenario(scenario),
                          scenario.zenith_count, scenario.azimuth_count,
                          scenario.zenith_range, scenario.azimuth_range)


def bistatic_gain(q, h, v_tx, v_rx, beta0):
    """Two-leg reflection gain beta0^2 / (d^2(q, v_tx) * d^2(q, v_rx)).

    The unit-mean radar cross section is already averaged out, so this is
    the full path weight of the tx -> UAV -> rx echo.
    """
    d2_tx = slant_distance_sq(q, h, v_tx)
    d2_rx = slant_distance_sq(q, h, v_rx)
    _check_slant(d2_tx)
    _check_slant(d2_rx)
    return beta0 ** 2 / (d2_tx * d2_rx)


@dataclass
class SensingGeometryCache:
    """Trajectory-dependent sensing couplings, rebuilt after each move.

    coupling[j, m, b, n] sums over UAVs the echo power weight of
    transmitter j's bin-b beam at receiver m in slot n:
        sum_k beta_s[j, m, k, n] * pattern[m, k, n, b] * pattern[j, k, n, b]
    where pattern[m, k, n, b] = |w_b^H a(q_k[n], v_m)|^2.  The j == m
    entries are the useful monostatic echoes, the rest are cross-BS
    interference.
    """

    pattern: np.ndarray    # (M, K, N, B) beam-alignment gains
    beta_s: np.ndarray     # (M, M, K, N) two-leg reflection gains [tx, rx]
    coupling: np.ndarray   # (M, M, B, N) per-UAV-summed couplings [tx, rx]

    @property
    def num_bins(self):
        return self.pattern.shape[3]


def build_sensing_cache(traj: Trajectory, codebook: BeamCodebook,
                        scenario) -> SensingGeometryCache:
    geom = ArrayGeometry.from_scenario(scenario)
    v = scenario.bs_positions                      # (M, 2)
    q = traj.positions                             # (K, N, 2)
    h = traj.altitudes                             # (K,)

    # Steering vectors BS m -> UAV k at slot n: (M, K, N, Np).
    cos = direction_cosines(q[None, :, :, :], h[None, :, None],
                            v[:, None, None, :])
    steer = steering_vector(cos, geom)

    w = codebook.flat_beams()                      # (B, Np)
    inner = np.einsum("bp,mknp->mknb", w, np.conj(steer))
    pattern = np.abs(inner) ** 2                   # (M, K, N, B)

    d2 = slant_distance_sq(q[None, :, :, :], h[None, :, None],
                           v[:, None, None, :])    # (M, K, N)
    beta_s = scenario.ref_gain ** 2 / (d2[:, None, :, :] * d2[None, :, :, :])

    coupling = np.einsum("jmkn,jknb,mknb->jmbn", beta_s, pattern, pattern,
                         optimize=True)
    return SensingGeometryCache(pattern=pattern, beta_s=beta_s,
                                coupling=coupling)


def _flat_power(eta_s, num_bs, num_bins, num_slots):
    """Accept (M, Q, L, N) or (M, B, N) sensing powers; return (M, B, N)."""
    eta = np.asarray(eta_s, dtype=float)
    if eta.ndim == 4:
        eta = eta.reshape(num_bs, num_bins, num_slots)
    return eta


def sensing_sinr_all(cache: SensingGeometryCache, eta_s, noise_bs):
    """Bin SINRs for all receivers, bins, and slots: (M, B, N)."""
    M, _, B, N = cache.coupling.shape
    eta = _flat_power(eta_s, M, B, N)
    # received[j, m, b, n] = coupling * eta of transmitter j
    received = cache.coupling * eta[:, None, :, :]
    total = received.sum(axis=0)
    own = np.einsum("mmbn->mbn", received)
    interference = total - own
    return own / (interference + noise_bs)


def sensing_sinr(n, m, q_idx, l_idx, cache: SensingGeometryCache, eta_s,
                 scenario):
    """Sensing SINR at BS m for bin (q_idx, l_idx) in slot n."""
    b = q_idx * scenario.azimuth_count + l_idx
    return float(sensing_sinr_all(cache, eta_s, scenario.noise_bs)[m, b, n])


def radar_mi_slopes(cache: SensingGeometryCache, eta_s, noise_bs):
    """Per-slot MI slope c[n] = sum_{m,q,l} log2(1 + sinr); shape (N,)."""
    sinr = sensing_sinr_all(cache, eta_s, noise_bs)
    return np.log1p(sinr).sum(axis=(0, 1)) / LOG2


def radar_mi_per_slot(n, cache: SensingGeometryCache, eta_s, scenario):
    """Slot n's MI slope in bits (the slot contributes delta[n] times this)."""
    return float(radar_mi_slopes(cache, eta_s, scenario.noise_bs)[n])


def cumulative_radar_mi(cache: SensingGeometryCache, eta_s, delta, scenario):
    """Mission radar MI sum_n delta[n] * c[n] in bits."""
    slopes = radar_mi_slopes(cache, eta_s, scenario.noise_bs)
    return float(np.dot(np.asarray(delta, dtype=float), slopes))


def check_sensing_power(eta_s, delta, scenario, tol=1e-9):
    """Violation messages for nonnegativity and the per-slot energy budget."""
    M, B = scenario.num_bs, scenario.zenith_count * scenario.azimuth_count
    eta = _flat_power(eta_s, M, B, scenario.num_slots)
    bad = []
    if np.any(eta < -tol):
        bad.append("sensing power: negative entry")
    energy = np.asarray(delta) * eta.sum(axis=1)   # (M, N), units of watts
    if np.any(energy > scenario.p_sense_max + tol):
        bad.append("sensing power: per-slot energy budget exceeded")
    return bad
