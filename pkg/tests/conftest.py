"""Shared fixtures: scenario factories and random feasible states."""

import numpy as np
import pytest

from isac_planner import comm as cm
from isac_planner import geometry as ge
from isac_planner import scenario as sc
from isac_planner import sensing as sn


@pytest.fixture(scope="session")
def setting1():
    return sc.load_bundled("setting1")


@pytest.fixture(scope="session")
def setting2():
    return sc.load_bundled("setting2")


def small_scenario(base, K=2, M=2, N=4, spread=150.0, **kw):
    """Shrunken mission with reachable endpoints and valid separations."""
    starts = np.column_stack([np.zeros(K), np.linspace(0.0, spread * (K - 1), K)])
    duration = float(kw.get("mission_duration", N))
    hop = min(60.0, 0.8 * (N - 1) * base.v_max * duration / N)
    ends = starts + [hop, 0.0]
    defaults = dict(num_uavs=K, num_bs=M, num_slots=N,
                    mission_duration=float(N),
                    uav_altitudes=np.full(K, 80.0),
                    bs_positions=np.asarray(base.bs_positions)[:M] / 3.0,
                    uav_start=starts, uav_end=ends)
    defaults.update(kw)
    return base.with_updates(**defaults)


def random_feasible_state(base, rng, K=None, M=None, N=None):
    """Random scenario + decision variables satisfying every constraint.

    Used by the surrogate and monotonicity suites; trajectories are
    straight lines with small interior detours that keep the speed and
    separation margins intact.
    """
    K = K or int(rng.integers(1, 4))
    M = M or int(rng.integers(1, 4))
    N = N or int(rng.integers(3, 9))
    s = small_scenario(base, K=K, M=M, N=N,
                       mi_threshold=float(rng.uniform(0.5, 3.0)))
    traj = ge.Trajectory.straight_line(s)
    wiggle = rng.uniform(-2.0, 2.0, traj.positions.shape)
    wiggle[:, 0] = 0.0
    wiggle[:, -1] = 0.0
    traj = ge.Trajectory(traj.positions + wiggle, traj.altitudes)

    codebook = sn.codebook_from_scenario(s)
    beams = cm.matched_beams(traj, codebook, s)
    gains = cm.comm_gain_tensor(traj, beams, s)
    cache = sn.build_sensing_cache(traj, codebook, s)

    eta_c = rng.uniform(0.05, 0.9, (M, K, N)) * s.p_comm_max / K
    delta = rng.uniform(*s.delta_bounds, N)
    eta_s = rng.uniform(0.0, 1.0, (M, codebook.num_beams, N))
    eta_s *= s.p_sense_max / (delta * eta_s.sum(axis=1))[:, None, :] \
        * rng.uniform(0.2, 0.95)
    return {
        "scenario": s, "trajectory": traj, "codebook": codebook,
        "beams": beams, "gains": gains, "cache": cache,
        "eta_c": eta_c, "eta_s": eta_s, "delta": delta,
    }
