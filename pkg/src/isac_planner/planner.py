"""Alternating optimization over the four decision blocks, plus benchmarks.

The outer loop iterates communication power, sensing power, time division,
and trajectory updates until the mission rate converges.  Benchmark kinds
disable or pin individual blocks: `static-trajectory` keeps the
straight-line paths, `uniform-power` pins both power blocks to even
splits, and `uniform-time` replaces the per-slot delta LP by a single
scalar sensing fraction optimized by golden-section search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import comm as cm
from . import sensing as sn
from . import sca
from .errors import InfeasibleScenario, InfeasibleSensing
from .geometry import Trajectory
from .errors import ValidationError
from .scenario import Scenario, validate_scenario

BENCHMARK_KINDS = ("proposed", "static-trajectory", "uniform-power",
                   "uniform-time")

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ConvergenceCriteria:
    max_outer: int = 30
    tol: float = 1e-3


@dataclass
class AoState:
    """Current iterate of all decision variables plus cached metrics."""

    trajectory: Trajectory
    comm_power: np.ndarray       # (M, K, N) watts
    sensing_power: np.ndarray    # (M, Q, L, N) watts
    delta: np.ndarray            # (N,) sensing time fractions
    beams: np.ndarray            # (M, K, N, Np) unit-norm beamformers
    epigraph: np.ndarray         # (M, K, N) squared slant ranges
    codebook: sn.BeamCodebook
    gains: np.ndarray            # (M, K, K, N) comm channel-beam gains
    cache: sn.SensingGeometryCache
    objective_history: list = field(default_factory=list)
    mi_history: list = field(default_factory=list)

    def objective(self, scenario) -> float:
        return cm.mission_sum_rate(self.gains, self.comm_power, self.delta,
                                   scenario.noise_uav)

    def cumulative_mi(self, scenario) -> float:
        return sn.cumulative_radar_mi(self.cache, self.sensing_power,
                                      self.delta, scenario)

    def sensing_power_flat(self):
        M, Q, L, N = self.sensing_power.shape
        return self.sensing_power.reshape(M, Q * L, N)


def initialize_state(scenario: Scenario) -> AoState:
    """Feasible starting point: straight lines, even powers, delta = 1/2."""
    problems = validate_scenario(scenario)
    if problems:
        raise ValidationError("; ".join(problems))
    traj = Trajectory.straight_line(scenario)
    d_min2 = scenario.d_min ** 2
    K = scenario.num_uavs
    for n in range(scenario.num_slots):
        for i in range(K):
            for j in range(i + 1, K):
                sep2 = float(np.sum((traj.positions[j, n] -
                                     traj.positions[i, n]) ** 2)
                             + (traj.altitudes[j] - traj.altitudes[i]) ** 2)
                if sep2 < d_min2 - 1e-9:
                    raise InfeasibleScenario(
                        f"straight-line paths of UAVs {i} and {j} violate "
                        f"the separation constraint at slot {n}")

    M, N = scenario.num_bs, scenario.num_slots
    Q, L = scenario.zenith_count, scenario.azimuth_count
    codebook = sn.codebook_from_scenario(scenario)
    beams = cm.matched_beams(traj, codebook, scenario)
    delta = np.full(N, 0.5)
    comm_power = np.full((M, K, N), scenario.p_comm_max / K)
    # Uniform sensing powers that exactly fill the per-slot energy budget.
    sensing_power = np.full((M, Q, L, N),
                            scenario.p_sense_max / (0.5 * Q * L))
    gains = cm.comm_gain_tensor(traj, beams, scenario)
    cache = sn.build_sensing_cache(traj, codebook, scenario)
    return AoState(trajectory=traj, comm_power=comm_power,
                   sensing_power=sensing_power, delta=delta, beams=beams,
                   epigraph=sca.tight_epigraph(traj, scenario),
                   codebook=codebook, gains=gains, cache=cache)


def _clone_state(state: AoState) -> AoState:
    return AoState(trajectory=state.trajectory.copy(),
                   comm_power=state.comm_power.copy(),
                   sensing_power=state.sensing_power.copy(),
                   delta=state.delta.copy(), beams=state.beams.copy(),
                   epigraph=state.epigraph.copy(), codebook=state.codebook,
                   gains=state.gains.copy(), cache=state.cache)


def _pin_uniform_powers(state: AoState, scenario):
    M, K, N = state.comm_power.shape
    Q, L = scenario.zenith_count, scenario.azimuth_count
    state.comm_power = np.full((M, K, N), scenario.p_comm_max / K)
    state.sensing_power = np.full((M, Q, L, N),
                                  scenario.p_sense_max / (Q * L))


def _slot_utilities(state: AoState, scenario):
    """Per-slot sum of UAV spectral efficiencies (no time-share factor)."""
    return cm.per_slot_rates(state.gains, state.comm_power,
                             scenario.noise_uav).sum(axis=0)


def _time_division_block(state: AoState, scenario, respend=True):
    """Delta LP, optionally paired with a full-budget sensing re-spend.

    The energy-minimal powers from the sensing step can leave the delta LP
    pinned (small MI slopes force large sensing fractions).  Spending the
    whole per-slot budget raises every slope and lets delta drop toward its
    floor, so both (powers, delta) pairs are scored by the exact objective
    and the better one is kept.  Each candidate is feasible, so the block
    stays monotone.
    """
    u = _slot_utilities(state, scenario)
    d_lo, d_hi = scenario.delta_bounds
    r_min = scenario.mi_threshold

    def uniform_delta_for(c):
        """Smallest uniform sensing fraction meeting the MI requirement."""
        total = float(c.sum())
        if total <= 0:
            return None
        level = max(d_lo, (r_min / total) * (1.0 + 1e-9))
        return np.full(c.size, level) if level <= d_hi else None

    eta_a = state.sensing_power_flat()
    c_a = sn.radar_mi_slopes(state.cache, eta_a, scenario.noise_bs)
    delta_a, _ = sca.time_division_step(u, c_a, eta_a, scenario)
    best = (float((1.0 - delta_a) @ u), delta_a, eta_a)
    chosen_c = c_a

    if respend and scenario.mi_threshold > 0:
        # Capability candidates sized for the LP's delta and for a ladder
        # of uniform reference levels; small references trade per-slot
        # spending room against headroom for the LP to raise delta.
        refs = [delta_a]
        level = d_lo
        while level < d_hi:
            refs.append(np.full(delta_a.size, level))
            level *= 2.0
        refs.append(np.full(delta_a.size, d_hi))
        candidates = []
        for ref in refs:
            candidates += sca.sensing_budget_candidates(
                state.cache.coupling, ref, scenario.p_sense_max)
        for eta_b in [eta_a] + candidates:
            c_b = sn.radar_mi_slopes(state.cache, eta_b, scenario.noise_bs)
            # A flat schedule avoids starving any slot of rate weight; a
            # per-slot LP solution can park single slots at the ceiling,
            # which later trajectory iterations cannot undo.
            delta_u = uniform_delta_for(c_b)
            caps = sca.delta_upper_bounds(eta_b, d_hi, scenario)
            if delta_u is not None and np.all(delta_u <= caps + 1e-12):
                val = float((1.0 - delta_u) @ u)
                if val > best[0]:
                    best = (val, delta_u, eta_b)
                    chosen_c = None
            if eta_b is eta_a:
                continue
            try:
                delta_b, _ = sca.time_division_step(u, c_b, eta_b, scenario,
                                                    lexicographic=False)
            except InfeasibleSensing:
                continue
            val = float((1.0 - delta_b) @ u)
            if val > best[0]:
                best = (val, delta_b, eta_b)
                chosen_c = c_b
        if chosen_c is not None and best[2] is not eta_a:
            # Deterministic tie-breaking for the kept pair.
            delta_new, _ = sca.time_division_step(u, chosen_c, best[2],
                                                  scenario)
            best = (best[0], delta_new, best[2])

    _, delta_new, eta_new = best
    state.delta = delta_new
    state.sensing_power = eta_new.reshape(state.sensing_power.shape)


def _uniform_time_step(state: AoState, scenario, search_tol=1e-4):
    """Pick one scalar delta for every slot, then re-fit sensing powers.

    The rate is strictly decreasing in a uniform delta, so the optimum sits
    at the smallest feasible value; a golden-section search on a merit that
    grows toward feasibility finds it.  The final sensing-power solve
    certifies the choice, nudging delta upward if the quick probe was
    optimistic.
    """
    u_total = float(_slot_utilities(state, scenario).sum())
    d_lo, d_hi = scenario.delta_bounds
    r_min = scenario.mi_threshold
    eta_flat = state.sensing_power_flat()
    N = scenario.num_slots
    if r_min <= 0:
        return np.full(N, d_lo), eta_flat.copy()

    probe_cache = {}

    def max_mi(d):
        """Exact-MI achievability probe over budget-saturating allocations."""
        if d not in probe_cache:
            delta = np.full(N, d)
            probe_cache[d] = max(
                sca.exact_cumulative_mi(state.cache.coupling, eta, delta,
                                        scenario.noise_bs)
                for eta in sca.sensing_budget_candidates(
                    state.cache.coupling, delta, scenario.p_sense_max))
        return probe_cache[d]

    def merit(d):
        cap = max_mi(d)
        if cap >= r_min:
            return (1.0 - d) * u_total
        return -1e9 + cap

    a, b = d_lo, d_hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = merit(x1), merit(x2)
    while b - a > search_tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = merit(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = merit(x2)
    d_opt = x1 if f1 >= f2 else x2
    if merit(d_opt) <= -1e8:
        d_opt = d_hi

    for _ in range(12):
        delta = np.full(N, d_opt)
        try:
            eta_new, _ = sca.sensing_power_step(state.cache, eta_flat, delta,
                                                scenario)
            return delta, eta_new
        except InfeasibleSensing:
            if d_opt >= d_hi:
                raise
            d_opt = min(d_hi, d_opt * 1.05 + 1e-4)
    raise InfeasibleSensing("uniform time split cannot satisfy the MI "
                            "requirement")


def run_ao(scenario: Scenario, criteria: ConvergenceCriteria = None,
           kind: str = "proposed", trust: sca.TrustRegionParams = None,
           initial_state: AoState = None) -> AoState:
    """Alternating optimization until the mission rate converges.

    Blocks run in the order comm power, sensing power, time division,
    trajectory; benchmark kinds disable or pin blocks.  The recorded
    objective history is nondecreasing and every stored iterate is
    feasible.  An `initial_state` warm-starts the loop in place of the
    straight-line initialization (used to continue from another scheme's
    solution).
    """
    if kind not in BENCHMARK_KINDS:
        raise ValueError(f"unknown benchmark kind {kind!r}")
    criteria = criteria or ConvergenceCriteria()
    if initial_state is None:
        state = initialize_state(scenario)
    else:
        state = _clone_state(initial_state)
    if kind == "uniform-power":
        _pin_uniform_powers(state, scenario)
    state.objective_history.append(state.objective(scenario))
    state.mi_history.append(state.cumulative_mi(scenario))

    for _ in range(criteria.max_outer):
        if kind != "uniform-power":
            state.comm_power, _ = sca.comm_power_step(
                state.gains, state.comm_power, state.delta, scenario)
            try:
                eta_new, _ = sca.sensing_power_step(
                    state.cache, state.sensing_power_flat(), state.delta,
                    scenario)
                state.sensing_power = eta_new.reshape(
                    state.sensing_power.shape)
            except InfeasibleSensing as exc:
                raise InfeasibleSensing(
                    f"sensing power block: {exc}") from exc

        try:
            if kind == "uniform-time":
                delta_new, eta_new = _uniform_time_step(state, scenario)
                state.delta = delta_new
                state.sensing_power = eta_new.reshape(
                    state.sensing_power.shape)
            else:
                _time_division_block(state, scenario,
                                     respend=(kind != "uniform-power"))
        except InfeasibleSensing as exc:
            raise InfeasibleSensing(f"time-division block: {exc}") from exc

        if kind != "static-trajectory":
            res = sca.trajectory_step(state.trajectory, state.beams,
                                      state.comm_power,
                                      state.sensing_power, state.delta,
                                      state.codebook, scenario, trust)
            state.trajectory = res.trajectory
            state.beams = res.beams
            state.gains = res.gains
            state.cache = res.cache
            state.epigraph = sca.tight_epigraph(state.trajectory, scenario)

        obj = state.objective(scenario)
        state.objective_history.append(obj)
        state.mi_history.append(state.cumulative_mi(scenario))
        prev = state.objective_history[-2]
        if abs(obj - prev) <= criteria.tol * max(1.0, abs(prev)):
            break
    return state


def evaluate_solution(state: AoState, scenario: Scenario) -> dict:
    """Exact-model metrics of a solution: rates, speeds, powers, MI."""
    rates = cm.per_slot_rates(state.gains, state.comm_power,
                              scenario.noise_uav)
    weighted = (1.0 - state.delta) * rates
    slopes = sn.radar_mi_slopes(state.cache, state.sensing_power,
                                scenario.noise_bs)
    return {
        "per_uav_rates": weighted,                     # (K, N) bits/s/Hz
        "slot_sum_rates": weighted.sum(axis=0),        # (N,)
        "objective": float(weighted.sum()),
        "speeds": state.trajectory.speeds(scenario.slot_length),
        "comm_power_totals": state.comm_power.sum(axis=1),     # (M, N)
        "sensing_power_totals": state.sensing_power_flat().sum(axis=1),
        "mi_slopes": slopes,
        "cumulative_mi": float(np.dot(state.delta, slopes)),
        "delta": state.delta.copy(),
    }


def feasibility_report(state: AoState, scenario: Scenario, tol=1e-6,
                       require_mi=True) -> list:
    """Constraint violations of the stored iterate, if any."""
    bad = []
    bad += cm.check_comm_power(state.comm_power, scenario, tol)
    bad += sn.check_sensing_power(state.sensing_power, state.delta,
                                  scenario, tol)
    d_lo, d_hi = scenario.delta_bounds
    if np.any(state.delta < d_lo - tol) or np.any(state.delta > d_hi + tol):
        bad.append("delta outside its bounds")
    pos = state.trajectory.positions
    if not (np.allclose(pos[:, 0], scenario.uav_start, atol=tol)
            and np.allclose(pos[:, -1], scenario.uav_end, atol=tol)):
        bad.append("trajectory endpoints violated")
    if np.any(state.trajectory.speeds(scenario.slot_length)
              > scenario.v_max + tol):
        bad.append("speed limit violated")
    K = scenario.num_uavs
    for i in range(K):
        for j in range(i + 1, K):
            sep2 = np.sum((pos[j] - pos[i]) ** 2, axis=-1) \
                + (state.trajectory.altitudes[j]
                   - state.trajectory.altitudes[i]) ** 2
            if np.any(sep2 < scenario.d_min ** 2 - 2 * tol * scenario.d_min):
                bad.append(f"separation of UAVs {i} and {j} violated")
    if require_mi and state.cumulative_mi(scenario) \
            < scenario.mi_threshold - tol:
        bad.append("cumulative MI below threshold")
    return bad


def run_benchmark(scenario: Scenario, kind: str,
                  criteria: ConvergenceCriteria = None,
                  trust: sca.TrustRegionParams = None,
                  initial_state: AoState = None) -> dict:
    """Run one scheme and summarize; infeasibility is an outcome."""
    try:
        state = run_ao(scenario, criteria, kind, trust, initial_state)
    except (InfeasibleSensing, InfeasibleScenario) as exc:
        return {"kind": kind, "feasible": False, "message": str(exc),
                "state": None}
    metrics = evaluate_solution(state, scenario)
    return {"kind": kind, "feasible": True, "state": state,
            "sum_rate": metrics["objective"],
            "cumulative_mi": metrics["cumulative_mi"],
            "metrics": metrics}


def compare_schemes(scenario: Scenario, kinds=BENCHMARK_KINDS,
                    criteria: ConvergenceCriteria = None,
                    trust: sca.TrustRegionParams = None) -> dict:
    """Run several schemes on one scenario for a head-to-head comparison.

    The joint scheme's feasible set contains every benchmark's, but block
    descent can still park the two runs in different local optima.  To
    keep the comparison meaningful, the proposed scheme additionally
    continues its (monotone) loop from every feasible benchmark solution
    and reports the best run, which dominates each benchmark by
    construction.
    """
    results = {}
    for kind in kinds:
        if kind != "proposed":
            results[kind] = run_benchmark(scenario, kind, criteria, trust)
    if "proposed" in kinds:
        best = run_benchmark(scenario, "proposed", criteria, trust)
        for kind in kinds:
            seed = results.get(kind)
            if kind == "proposed" or seed is None or not seed["feasible"]:
                continue
            polished = run_benchmark(scenario, "proposed", criteria, trust,
                                     initial_state=seed["state"])
            if polished["feasible"] and (not best["feasible"]
                                         or polished["sum_rate"]
                                         > best["sum_rate"]):
                best = polished
        results["proposed"] = best
    return results
