"""Communication-phase model: beamformers, SINR, and sum rate.

Beamformers are matched filters built from the angular knowledge acquired
during sensing: either the exact normalized steering vector toward the UAV
("exact" mode) or the codebook beam of the nearest scan bin ("quantized"
mode, the default, which ties link quality to the sensing resolution).
"""

from __future__ import annotations

import numpy as np

from .geometry import (ArrayGeometry, Trajectory, direction_cosines,
                       slant_distance_sq, steering_vector)
from .sensing import BeamCodebook

LOG2 = np.log(2.0)


def _quantize_angles(zenith, azimuth, codebook: BeamCodebook):
    """Indices of the codebook bin nearest to the given angles.

    Zenith snaps to the nearest grid point (clamped to the range); azimuth
    uses circular distance.
    """
    zi = np.argmin(np.abs(np.asarray(zenith)[..., None] - codebook.zenith),
                   axis=-1)
    diff = np.asarray(azimuth)[..., None] - codebook.azimuth
    wrapped = np.abs((diff + np.pi) % (2 * np.pi) - np.pi)
    li = np.argmin(wrapped, axis=-1)
    return zi, li


def matched_beamformer(q, h, v, codebook: BeamCodebook, mode,
                       geom: ArrayGeometry):
    """Unit-norm transmit beam toward the UAV at (q, h) as seen from v."""
    cos = direction_cosines(q, h, v)
    if mode == "exact":
        return steering_vector(cos, geom) / np.sqrt(geom.n_elements)
    if mode == "quantized":
        zi, li = _quantize_angles(cos.zenith, cos.azimuth, codebook)
        return codebook.beams[zi, li]
    raise ValueError(f"unknown beam mode {mode!r}")


def matched_beams(traj: Trajectory, codebook: BeamCodebook, scenario,
                  mode=None):
    """Matched beamformers for every (BS, UAV, slot): (M, K, N, Np)."""
    geom = ArrayGeometry.from_scenario(scenario)
    mode = scenario.beam_mode if mode is None else mode
    q = traj.positions[None, :, :, :]
    h = traj.altitudes[None, :, None]
    v = scenario.bs_positions[:, None, None, :]
    return matched_beamformer(q, h, v, codebook, mode, geom)


def comm_gain_tensor(traj: Trajectory, beams, scenario):
    """Effective channel-beam gains G[m, k, i, n] = beta_mk |a_mk^H w_mi|^2.

    eta[m, i, n] * G[m, k, i, n] is the power UAV k receives from the beam
    BS m points at UAV i.
    """
    geom = ArrayGeometry.from_scenario(scenario)
    q = traj.positions[None, :, :, :]
    h = traj.altitudes[None, :, None]
    v = scenario.bs_positions[:, None, None, :]
    cos = direction_cosines(q, h, v)
    steer = steering_vector(cos, geom)                      # (M, K, N, Np)
    beta = scenario.ref_gain / slant_distance_sq(q, h, v)   # (M, K, N)
    inner = np.einsum("mknp,minp->mkin", np.conj(steer), beams)
    return beta[:, :, None, :] * np.abs(inner) ** 2


def comm_signal_interference(gains, eta_c, noise_uav):
    """Per-UAV received signal and interference powers, each (K, N)."""
    received = np.einsum("min,mkin->kin", np.asarray(eta_c, dtype=float),
                         gains)
    total = received.sum(axis=1)
    own = np.einsum("kkn->kn", received)
    return own, total - own + noise_uav


def comm_sinr_all(gains, eta_c, noise_uav):
    """Communication SINR of every UAV in every slot: (K, N)."""
    own, interference = comm_signal_interference(gains, eta_c, noise_uav)
    return own / interference


def comm_sinr(n, k, traj, eta_c, beams, scenario):
    gains = comm_gain_tensor(traj, beams, scenario)
    return float(comm_sinr_all(gains, eta_c, scenario.noise_uav)[k, n])


def per_slot_rates(gains, eta_c, noise_uav):
    """Per-UAV spectral efficiencies log2(1 + sinr), shape (K, N)."""
    return np.log1p(comm_sinr_all(gains, eta_c, noise_uav)) / LOG2


def slot_sum_rate(n, traj, eta_c, beams, delta_n, scenario):
    """Slot sum rate (1 - delta[n]) * sum_k log2(1 + sinr_k[n])."""
    gains = comm_gain_tensor(traj, beams, scenario)
    rates = per_slot_rates(gains, eta_c, scenario.noise_uav)
    return float((1.0 - delta_n) * rates[:, n].sum())


def mission_sum_rate(gains, eta_c, delta, noise_uav):
    """Mission objective sum_n (1 - delta[n]) * sum_k rate_k[n]."""
    rates = per_slot_rates(gains, eta_c, noise_uav)
    return float(np.dot(1.0 - np.asarray(delta, dtype=float),
                        rates.sum(axis=0)))


def check_comm_power(eta_c, scenario, tol=1e-9):
    """Violation messages for nonnegativity and the per-BS power budget."""
    eta = np.asarray(eta_c, dtype=float)
    bad = []
    if np.any(eta < -tol):
        bad.append("comm power: negative entry")
    if np.any(eta.sum(axis=1) > scenario.p_comm_max + tol):
        bad.append("comm power: per-BS budget exceeded")
    return bad
