"""Successive convex approximation steps for the four decision blocks.

Each block update maximizes a concave surrogate that is tight at the
current iterate, so the true mission rate never decreases:

* communication power: interference log replaced by its tangent plane,
  leaving a concave program per slot under the per-BS budget;
* sensing power: same device on the radar MI; since the rate does not
  depend on sensing power, the step minimizes sensing energy subject to
  the surrogate MI constraint (a dual water-filling solve);
* time division: exact linear program in delta;
* trajectory: affine gain model plus epigraph variables for the squared
  slant ranges, alternating q and z updates inside a trust region with
  accept/reject on the exactly evaluated objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import comm as cm
from . import sensing as sn
from .errors import DegenerateAnchor, InfeasibleSensing
from .geometry import ArrayGeometry, Trajectory, direction_cosines, \
    steering_gradient, steering_vector
from .solvers import (BallRows, ConcaveProgram, LinearProgram, SolveReport,
                      solve_concave_program, solve_lp)

LOG2 = np.log(2.0)


# ---------------------------------------------------------------------------
# Communication power block
# ---------------------------------------------------------------------------

@dataclass
class CommSurrogate:
    """Concave lower bound of the mission rate in the comm powers.

    Tight at the anchor: the interference log of each UAV is replaced by
    its first-order upper bound around `anchor`, with per-watt slopes
    B[k, m, i, n] (zero on the desired link i == k).
    """

    gains: np.ndarray          # (M, K, K, N)
    anchor: np.ndarray         # (M, K, N)
    anchor_interf: np.ndarray  # (K, N) interference + noise at the anchor
    slopes: np.ndarray         # (K, M, K, N)
    noise: float

    def rates(self, eta_c):
        """Per-UAV surrogate rates (K, N) at the given powers."""
        eta = np.asarray(eta_c, dtype=float)
        total = np.einsum("min,mkin->kn", eta, self.gains) + self.noise
        lin = np.einsum("kmin,min->kn", self.slopes, eta - self.anchor)
        return (np.log(total) - np.log(self.anchor_interf)) / LOG2 - lin

    def mission_value_grad(self, eta_c, delta):
        """Mission surrogate value and gradient w.r.t. the powers."""
        eta = np.asarray(eta_c, dtype=float)
        w = 1.0 - np.asarray(delta, dtype=float)
        total = np.einsum("min,mkin->kn", eta, self.gains) + self.noise
        lin = np.einsum("kmin,min->kn", self.slopes, eta - self.anchor)
        per_link = (np.log(total) - np.log(self.anchor_interf)) / LOG2 - lin
        value = float(np.dot(w, per_link.sum(axis=0)))
        inv = w / (total * LOG2)                      # (K, N)
        grad = np.einsum("kn,mkin->min", inv, self.gains)
        grad -= np.einsum("n,kmin->min", w, self.slopes)
        return value, grad

    def curvature_diag(self, eta_c, delta):
        """Diagonal of -hessian of the mission surrogate in the powers."""
        eta = np.asarray(eta_c, dtype=float)
        w = 1.0 - np.asarray(delta, dtype=float)
        total = np.einsum("min,mkin->kn", eta, self.gains) + self.noise
        inv2 = w / (total ** 2 * LOG2)
        return np.einsum("kn,mkin->min", inv2, self.gains ** 2)


def build_comm_surrogate(gains, eta_anchor, noise) -> CommSurrogate:
    eta = np.asarray(eta_anchor, dtype=float)
    M, K, _, N = gains.shape
    received = np.einsum("min,mkin->kin", eta, gains)
    interf = received.sum(axis=1) - np.einsum("kkn->kn", received) + noise
    slopes = gains.transpose(1, 0, 2, 3) / (interf[:, None, None, :] * LOG2)
    mask = 1.0 - np.eye(K)[:, None, :, None]          # zero out i == k
    return CommSurrogate(gains=gains, anchor=eta.copy(),
                         anchor_interf=interf, slopes=slopes * mask,
                         noise=noise)


def comm_power_step(gains, eta_c, delta, scenario, gap_tol=1e-7):
    """Update the communication powers by one SCA iteration."""
    M, K, _, N = gains.shape
    p_max = scenario.p_comm_max
    surro = build_comm_surrogate(gains, eta_c, scenario.noise_uav)

    def objective(x):
        v, g = surro.mission_value_grad(x.reshape(M, K, N), delta)
        return v, g.ravel()

    # One budget row per (BS, slot): sum_k eta[m, k, n] <= p_max.
    n_vars = M * K * N
    a_ub = np.zeros((M * N, n_vars))
    flat = np.arange(n_vars).reshape(M, K, N)
    for m in range(M):
        for n in range(N):
            a_ub[m * N + n, flat[m, :, n]] = 1.0

    def curvature(x):
        return surro.curvature_diag(x.reshape(M, K, N), delta).ravel()

    program = ConcaveProgram(objective=objective, num_vars=n_vars,
                             a_ub=a_ub, b_ub=np.full(M * N, p_max),
                             lower=np.zeros(n_vars),
                             curvature_diag=curvature)

    # Strictly interior start near the anchor.
    x0 = np.maximum(np.asarray(eta_c, dtype=float), p_max * 1e-9)
    row_sum = x0.sum(axis=1)
    scale = np.minimum(1.0, p_max * (1.0 - 1e-7) / row_sum)
    x0 = (x0 * scale[:, None, :]).ravel()

    report = solve_concave_program(program, x0, gap_tol=gap_tol)
    new_eta = report.x.reshape(M, K, N)
    v_new, _ = surro.mission_value_grad(new_eta, delta)
    v_old, _ = surro.mission_value_grad(eta_c, delta)
    if not np.isfinite(v_new) or v_new < v_old:
        return np.asarray(eta_c, dtype=float).copy(), report
    return new_eta, report


# ---------------------------------------------------------------------------
# Sensing power block
# ---------------------------------------------------------------------------

@dataclass
class SensingSurrogate:
    """Concave lower bound of the cumulative radar MI in the sensing powers.

    coupling[j, m, b, n] are the per-UAV-summed echo weights; the cross-BS
    interference log at each receiver is replaced by its tangent plane at
    `anchor`, making the bound a global lower bound of the true MI.
    """

    coupling: np.ndarray       # (M, M, B, N) [tx, rx]
    anchor: np.ndarray         # (M, B, N)
    anchor_interf: np.ndarray  # (M, B, N) cross interference + noise
    slopes: np.ndarray         # (M, M, B, N) [tx, rx], zero on tx == rx
    delta: np.ndarray          # (N,)
    noise: float

    def per_bin(self, eta_s):
        """Surrogate MI density per (receiver, bin, slot), in bits."""
        eta = np.asarray(eta_s, dtype=float)
        total = np.einsum("jbn,jmbn->mbn", eta, self.coupling) + self.noise
        lin = np.einsum("jmbn,jbn->mbn", self.slopes, eta - self.anchor)
        return (np.log(total) - np.log(self.anchor_interf)) / LOG2 - lin

    def value(self, eta_s):
        return float(np.einsum("n,mbn->", self.delta, self.per_bin(eta_s)))

    def value_grad(self, eta_s):
        eta = np.asarray(eta_s, dtype=float)
        total = np.einsum("jbn,jmbn->mbn", eta, self.coupling) + self.noise
        lin = np.einsum("jmbn,jbn->mbn", self.slopes, eta - self.anchor)
        dens = (np.log(total) - np.log(self.anchor_interf)) / LOG2 - lin
        value = float(np.einsum("n,mbn->", self.delta, dens))
        grad = np.einsum("n,mbn,jmbn->jbn", self.delta, 1.0 / (total * LOG2),
                         self.coupling)
        grad -= np.einsum("n,jmbn->jbn", self.delta, self.slopes)
        return value, grad


def build_sensing_surrogate(coupling, eta_anchor, delta,
                            noise) -> SensingSurrogate:
    eta = np.asarray(eta_anchor, dtype=float)
    M = coupling.shape[0]
    received = np.einsum("jbn,jmbn->jmbn", eta, coupling)
    interf = received.sum(axis=0) - np.einsum("mmbn->mbn", received) + noise
    slopes = coupling / (interf[None, :, :, :] * LOG2)
    mask = 1.0 - np.eye(M)[:, :, None, None]
    return SensingSurrogate(coupling=coupling, anchor=eta.copy(),
                            anchor_interf=interf, slopes=slopes * mask,
                            delta=np.asarray(delta, dtype=float).copy(),
                            noise=noise)


def exact_cumulative_mi(coupling, eta_s, delta, noise):
    """True cumulative MI from the coupling tensor (no surrogate)."""
    eta = np.asarray(eta_s, dtype=float)
    received = np.einsum("jbn,jmbn->jmbn", eta, coupling)
    total = received.sum(axis=0)
    own = np.einsum("mmbn->mbn", received)
    sinr = own / (total - own + noise)
    slopes = np.log1p(sinr).sum(axis=(0, 1)) / LOG2
    return float(np.dot(np.asarray(delta, dtype=float), slopes))


def sensing_budget_candidates(coupling, delta, p_sense_max):
    """Budget-saturating trial allocations used for feasibility probing.

    The per-slot spend is sized so the energy budget holds at the given
    delta (with a margin for float accumulation over the bins).
    """
    M, _, B, N = coupling.shape
    delta = np.asarray(delta, dtype=float)
    per_slot = (1.0 - 1e-9) * p_sense_max / np.maximum(delta, 1e-12)
    uniform = np.broadcast_to(per_slot / B, (M, B, N)).copy()
    # All per-slot power into each BS's strongest own bin.
    own = np.einsum("mmbn->mbn", coupling)
    best = own.argmax(axis=1)                                # (M, N)
    concentrated = np.zeros((M, B, N))
    m_idx, n_idx = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    concentrated[m_idx, best, n_idx] = per_slot[None, :]
    return [uniform, concentrated]


def _waterfill_eta(surro: SensingSurrogate, nu, tau, p_sense_max, sweeps=4,
                   newton_iters=40):
    """Inner maximizer of the MI-energy Lagrangian at multiplier nu.

    Cyclic coordinate ascent over transmitters, each coordinate solved by
    safeguarded Newton on its scalar optimality condition, vectorized over
    all (bin, slot) cells; the per-slot energy budgets are enforced by a
    final downward scaling.
    """
    T = surro.coupling
    M, _, B, N = T.shape
    delta = surro.delta
    # Energy weight plus the interference growth priced by the tangent.
    w = delta[None, None, :] * tau + nu * np.einsum(
        "n,jmbn->jbn", delta, surro.slopes)
    eta = np.zeros((M, B, N))
    for _ in range(sweeps):
        for j in range(M):
            # alpha[m, b, n]: received power at m excluding transmitter j.
            contrib = np.einsum("ibn,imbn->mbn", eta, T)
            contrib -= eta[j][None, :, :] * T[j]
            alpha = contrib + surro.noise
            Tj = T[j]                                   # (M, B, N)
            coef = nu * delta[None, :] / LOG2           # (1, N) broadcast
            t = eta[j].copy()
            h0 = (coef * np.einsum("mbn->bn", Tj / alpha)) - w[j]
            t = np.where(h0 <= 0, 0.0, np.maximum(t, 1e-12))
            active = h0 > 0
            for _ in range(newton_iters):
                denom = alpha[:, :, :] + Tj * t[None, :, :]
                h = coef * np.einsum("mbn->bn", Tj / denom) - w[j]
                hp = -coef * np.einsum("mbn->bn", (Tj / denom) ** 2)
                step = np.where(active, h / np.where(hp == 0, -1.0, hp), 0.0)
                t_new = np.clip(t - step, 0.0, None)
                if np.max(np.abs(t_new - t)) <= 1e-12 * (1.0 + np.max(t)):
                    t = t_new
                    break
                t = t_new
            eta[j] = np.where(h0 > 0, t, 0.0)
    # Per-(BS, slot) energy budgets: delta[n] * sum_b eta <= p_sense_max.
    load = delta[None, :] * eta.sum(axis=1)            # (M, N)
    scale = np.minimum(1.0, p_sense_max / np.maximum(load, 1e-300))
    return eta * scale[:, None, :]


def sensing_power_step(cache: sn.SensingGeometryCache, eta_s, delta,
                       scenario, nu_max=1e16, bisect_iters=60):
    """Minimize sensing energy subject to the surrogate MI constraint.

    Runs a bisection on the MI multiplier; every kept allocation is checked
    against the surrogate in closed form, so the returned powers
    certifiably satisfy the true MI requirement (the surrogate is a global
    lower bound).  When the surrogate anchored at the current powers cannot
    reach the threshold anywhere, the step re-anchors once at an exactly
    feasible budget-saturating allocation before giving up; only if the
    exact MI of every such candidate falls short is InfeasibleSensing
    raised.
    """
    M, B = scenario.num_bs, cache.num_bins
    N = scenario.num_slots
    r_min = scenario.mi_threshold
    eta0 = sn._flat_power(eta_s, M, B, N)
    if r_min <= 0.0:
        return eta0.copy(), SolveReport("optimal", eta0.ravel(), 0.0, 0.0, 0)

    coupling = cache.coupling
    noise = scenario.noise_bs
    tau = scenario.slot_length
    delta = np.asarray(delta, dtype=float)

    def energy(eta):
        return float(tau * np.einsum("n,mn->", delta, eta.sum(axis=1)))

    best_eta = None
    best_energy = np.inf
    iters = 0
    anchor = eta0
    for round_ in range(2):
        surro = build_sensing_surrogate(coupling, anchor, delta, noise)
        if surro.value(anchor) >= r_min:
            e = energy(anchor)
            if e < best_energy:
                best_eta, best_energy = anchor.copy(), e
        # Bracket the multiplier: grow nu until the surrogate clears r_min.
        nu_lo, nu_hi = None, None
        nu = 1e-8
        while nu <= nu_max:
            eta = _waterfill_eta(surro, nu, tau, scenario.p_sense_max)
            iters += 1
            if surro.value(eta) >= r_min:
                nu_hi = nu
                e = energy(eta)
                if e < best_energy:
                    best_eta, best_energy = eta, e
                break
            nu_lo = nu
            nu *= 10.0
        if nu_hi is not None:
            if nu_lo is None:
                nu_lo = nu_hi / 1e6
            for _ in range(bisect_iters):
                nu_mid = np.sqrt(nu_lo * nu_hi)
                eta = _waterfill_eta(surro, nu_mid, tau,
                                     scenario.p_sense_max)
                iters += 1
                if surro.value(eta) >= r_min:
                    nu_hi = nu_mid
                    e = energy(eta)
                    if e < best_energy:
                        best_eta, best_energy = eta, e
                else:
                    nu_lo = nu_mid
                if nu_hi / nu_lo < 1.0 + 1e-9:
                    break
            break
        if best_eta is not None:
            break
        if round_ == 1:
            break
        # Re-anchor at an exactly feasible budget-saturating allocation.
        candidates = sensing_budget_candidates(coupling, delta,
                                               scenario.p_sense_max)
        candidates.append(_waterfill_eta(surro, nu_max, tau,
                                         scenario.p_sense_max))
        feasible = [c for c in candidates
                    if exact_cumulative_mi(coupling, c, delta, noise)
                    >= r_min]
        if not feasible:
            raise InfeasibleSensing(
                f"cumulative MI requirement {r_min} unreachable within "
                f"the sensing budget")
        anchor = min(feasible, key=energy)

    if best_eta is None:
        raise InfeasibleSensing(
            f"cumulative MI requirement {r_min} unreachable within the "
            f"sensing budget")
    report = SolveReport("optimal", best_eta.ravel(), best_energy, 0.0,
                         iters)
    return best_eta, report


# ---------------------------------------------------------------------------
# Time division block
# ---------------------------------------------------------------------------

def delta_upper_bounds(eta_s, delta_max, scenario):
    """Per-slot ceiling on delta from the sensing energy budgets."""
    M, B = scenario.num_bs, scenario.zenith_count * scenario.azimuth_count
    eta = sn._flat_power(eta_s, M, B, scenario.num_slots)
    load = eta.sum(axis=1)                              # (M, N)
    with np.errstate(divide="ignore"):
        caps = np.where(load > 0, scenario.p_sense_max / load, np.inf)
    return np.minimum(delta_max, caps.min(axis=0))


def time_division_step(slot_utilities, mi_slopes, eta_s, scenario,
                       lexicographic=True):
    """Solve the delta LP: max sum (1 - delta[n]) u[n] s.t. MI and boxes."""
    u = np.asarray(slot_utilities, dtype=float)
    c = np.asarray(mi_slopes, dtype=float)
    d_lo, d_hi = scenario.delta_bounds
    hi = delta_upper_bounds(eta_s, d_hi, scenario)
    if np.any(hi < d_lo - 1e-12):
        raise InfeasibleSensing("sensing energy budget forces delta below "
                                "its lower bound")
    hi = np.maximum(hi, d_lo)
    r_min = scenario.mi_threshold
    if float(hi @ c) < r_min - 1e-9:
        raise InfeasibleSensing(
            f"max achievable MI {float(hi @ c):.3f} < required {r_min}")
    lp = LinearProgram(objective=-u, a_ub=-c[None, :], b_ub=np.array([-r_min]),
                       lower=np.full(u.size, d_lo), upper=hi)
    report = solve_lp(lp, lexicographic=lexicographic)
    if report.status != "optimal":
        raise InfeasibleSensing("time-division LP reported " + report.status)
    delta = certify_mi_schedule(report.x.copy(), c, r_min, d_lo, hi)
    return delta, report


def certify_mi_schedule(delta, c, r_min, d_lo, hi, margin=1e-9):
    """Bump a schedule minimally so the MI row holds despite LP tolerance.

    LP solvers satisfy constraints only to their own feasibility tolerance;
    the mission MI requirement is certified exactly here by nudging every
    non-capped slot up by the (tiny) deficit share.
    """
    c = np.asarray(c, dtype=float)
    target = r_min + margin * max(1.0, abs(r_min))
    for _ in range(4):
        deficit = target - float(delta @ c)
        if deficit <= 0:
            return delta
        open_slots = (np.asarray(hi) - delta > 0) & (c > 0)
        mass = float(c[open_slots].sum())
        if mass <= 0:
            break
        delta = np.minimum(delta + (deficit / mass) * open_slots, hi)
    if float(delta @ c) < r_min - 1e-9 * max(1.0, abs(r_min)):
        raise InfeasibleSensing("could not certify the MI schedule within "
                                "the slot caps")
    return delta


# ---------------------------------------------------------------------------
# Trajectory block: building pieces
# ---------------------------------------------------------------------------

def collision_linearization(q_i, q_j, h_i, h_j, d_min):
    """Affine restriction of the pairwise separation constraint.

    Returns (coef_i, coef_j, rhs) such that coef_i . q_i + coef_j . q_j >=
    rhs is implied by, and tight at, the anchors; any point satisfying it
    satisfies the true separation constraint.
    """
    q_i = np.asarray(q_i, dtype=float)
    q_j = np.asarray(q_j, dtype=float)
    gap = d_min ** 2 - (h_j - h_i) ** 2
    diff = q_j - q_i
    norm2 = float(diff @ diff)
    if norm2 <= 0.0 and gap > 0.0:
        raise DegenerateAnchor("coincident anchors with insufficient "
                               "altitude separation")
    return -2.0 * diff, 2.0 * diff, gap + norm2


def inv_z_tangent(z, z_ref):
    """Tangent of 1/z at z_ref: a global lower bound of 1/z on z > 0."""
    z = np.asarray(z, dtype=float)
    z_ref = np.asarray(z_ref, dtype=float)
    return 1.0 / z_ref - (z - z_ref) / z_ref ** 2


def tight_epigraph(traj: Trajectory, scenario):
    """Exact squared slant ranges (M, K, N): the z-step closed form."""
    q = traj.positions[None, :, :, :]
    h = traj.altitudes[None, :, None]
    v = scenario.bs_positions[:, None, None, :]
    return h ** 2 + np.sum((q - v) ** 2, axis=-1)


@dataclass
class GainModel:
    """Affine model of every directional gain around an anchor trajectory.

    value[m, k, i, n] and grad[m, k, i, n, :] describe
    |a(q_k[n], v_m)^H w_{m,i}[n]|^2 and its gradient in q_k[n] at the
    anchor; `linear` evaluates the model, clamped at zero where the affine
    extrapolation goes negative.
    """

    value: np.ndarray
    grad: np.ndarray
    anchor: np.ndarray   # (K, N, 2)

    def linear(self, positions, clamp=True):
        """Model gains at the given (K, N, 2) positions: (M, K, K, N)."""
        shift = np.asarray(positions, dtype=float) - self.anchor  # (K, N, 2)
        lin = self.value + np.einsum("mkind,knd->mkin", self.grad, shift)
        return np.maximum(lin, 0.0) if clamp else lin

    def active_grad(self, positions):
        """Gradient of the clamped model at the given positions."""
        shift = np.asarray(positions, dtype=float) - self.anchor
        lin = self.value + np.einsum("mkind,knd->mkin", self.grad, shift)
        return self.grad * (lin > 0.0)[..., None], np.maximum(lin, 0.0)


def build_gain_model(traj: Trajectory, beams, scenario) -> GainModel:
    geom = ArrayGeometry.from_scenario(scenario)
    q = traj.positions[None, :, :, :]
    h = traj.altitudes[None, :, None]
    v = scenario.bs_positions[:, None, None, :]
    cos = direction_cosines(q, h, v)
    steer = steering_vector(cos, geom)                  # (M, K, N, Np)
    da_dx, da_dy = steering_gradient(q, h, v, geom)
    c0 = np.einsum("mknp,minp->mkin", np.conj(steer), beams)
    cx = np.einsum("mknp,minp->mkin", np.conj(da_dx), beams)
    cy = np.einsum("mknp,minp->mkin", np.conj(da_dy), beams)
    gx = 2.0 * np.real(cx * np.conj(c0))
    gy = 2.0 * np.real(cy * np.conj(c0))
    return GainModel(value=np.abs(c0) ** 2, grad=np.stack([gx, gy], axis=-1),
                     anchor=traj.positions.copy())


def q_surrogate(model: GainModel, z, eta_c, delta, scenario, y_ref=None):
    """Rate surrogate for the q-step: 1/z frozen, interference tangent.

    Returns a (value, grad) callable over full (K, N, 2) position arrays
    plus the reference interference levels used in the tangent.
    """
    eta = np.asarray(eta_c, dtype=float)
    coef = scenario.ref_gain * eta[:, None, :, :] / z[:, :, None, :]
    noise = scenario.noise_uav
    K = model.value.shape[1]
    own = np.eye(K)[None, :, :, None]
    weights = 1.0 - np.asarray(delta, dtype=float)

    if y_ref is None:
        gl = model.linear(model.anchor)
        y_ref = np.einsum("mkin,mkin->kn", coef * (1.0 - own), gl) + noise

    def value_grad(positions):
        grad_g, gl = model.active_grad(positions)
        sig = np.einsum("mkin,mkin->kn", coef, gl) + noise
        intf = np.einsum("mkin,mkin->kn", coef * (1.0 - own), gl) + noise
        per = (np.log(sig) - np.log(y_ref)) / LOG2 \
            - (intf - y_ref) / (y_ref * LOG2)
        value = float(weights @ per.sum(axis=0))
        gsig = np.einsum("mkin,mkind->knd", coef, grad_g)
        gint = np.einsum("mkin,mkind->knd", coef * (1.0 - own), grad_g)
        gper = gsig / (sig * LOG2)[:, :, None] \
            - gint / (y_ref * LOG2)[:, :, None]
        return value, gper * weights[None, :, None]

    def curvature(positions):
        grad_g, gl = model.active_grad(positions)
        sig = np.einsum("mkin,mkin->kn", coef, gl) + noise
        gsig = np.einsum("mkin,mkind->knd", coef, grad_g)
        return weights[None, :, None] * gsig ** 2 / (sig ** 2 * LOG2)[:, :, None]

    return value_grad, y_ref, curvature


def z_surrogate_value(model: GainModel, positions, z, z_ref, eta_c, delta,
                      scenario, y_ref=None):
    """Rate surrogate for the z-step: positions fixed, 1/z tangent-bounded."""
    eta = np.asarray(eta_c, dtype=float)
    gl = model.linear(positions)
    ell = np.maximum(inv_z_tangent(z, z_ref), 0.0)      # (M, K, N)
    coef = scenario.ref_gain * eta[:, None, :, :] * ell[:, :, None, :]
    noise = scenario.noise_uav
    K = model.value.shape[1]
    own = np.eye(K)[None, :, :, None]
    sig = np.einsum("mkin,mkin->kn", coef, gl) + noise
    intf = np.einsum("mkin,mkin->kn", coef * (1.0 - own), gl) + noise
    if y_ref is None:
        ell0 = 1.0 / z_ref
        coef0 = scenario.ref_gain * eta[:, None, :, :] * ell0[:, :, None, :]
        y_ref = np.einsum("mkin,mkin->kn", coef0 * (1.0 - own), gl) + noise
    per = (np.log(sig) - np.log(y_ref)) / LOG2 - (intf - y_ref) / (y_ref * LOG2)
    weights = 1.0 - np.asarray(delta, dtype=float)
    return float(weights @ per.sum(axis=0))


# ---------------------------------------------------------------------------
# Trajectory block: waypoint (q) step
# ---------------------------------------------------------------------------

def _interior_index(K, N):
    """Map (k, n) to the free-point index; endpoints are fixed."""
    idx = -np.ones((K, N), dtype=int)
    if N > 2:
        inner = np.arange(K * (N - 2)).reshape(K, N - 2)
        idx[:, 1:N - 1] = inner
    return idx


def q_step(anchor: Trajectory, z, psi, model: GainModel, eta_c, delta,
           scenario, gap_tol=3e-3, max_inner=150):
    """Solve the trust-region trajectory subproblem around the anchor.

    Decision variables are the interior waypoints; endpoint constraints
    hold by construction, speed and slant-range rows are quadratic balls,
    collision rows are the affine restrictions, and movement is limited to
    a ball of radius psi around the anchor.
    """
    K, N = anchor.num_uavs, anchor.num_slots
    if N <= 2:
        return anchor.copy(), SolveReport("optimal", None, 0.0, 0.0, 0)
    idx = _interior_index(K, N)
    P = K * (N - 2)
    n_vars = 2 * P
    pos0 = anchor.positions
    h = anchor.altitudes
    v = scenario.bs_positions
    vt = scenario.v_max * scenario.slot_length

    value_grad, _, curvature = q_surrogate(model, z, eta_c, delta, scenario)

    def objective(x):
        grid = pos0.copy()
        grid[:, 1:N - 1, :] = x.reshape(K, N - 2, 2)
        val, grad = value_grad(grid)
        return val, grad[:, 1:N - 1, :].ravel()

    def obj_curvature(x):
        grid = pos0.copy()
        grid[:, 1:N - 1, :] = x.reshape(K, N - 2, 2)
        return curvature(grid)[:, 1:N - 1, :].ravel()

    ia, ib, centers, radii = [], [], [], []

    def add_ball(pa, pb, center, radius, anchor_vec):
        # Inflate rows that are tight at the anchor so the barrier can start.
        r2 = radius ** 2
        a2 = float(anchor_vec @ anchor_vec)
        if r2 <= a2 * (1.0 + 1e-9) + 1e-12:
            r2 = a2 * (1.0 + 1e-9) + 1e-12
        ia.append(pa)
        ib.append(pb)
        centers.append(center)
        radii.append(np.sqrt(r2))

    # Slant-range epigraph rows for interior waypoints.
    for k in range(K):
        for n in range(1, N - 1):
            for m in range(scenario.num_bs):
                rad2 = max(z[m, k, n] - h[k] ** 2, 0.0)
                add_ball(idx[k, n], -1, v[m], np.sqrt(rad2),
                         pos0[k, n] - v[m])
    # Speed rows between consecutive waypoints.
    for k in range(K):
        for n in range(N - 1):
            pa, pb = idx[k, n + 1], idx[k, n]
            if pa < 0 and pb < 0:
                continue
            if pa >= 0 and pb >= 0:
                add_ball(pa, pb, np.zeros(2), vt,
                         pos0[k, n + 1] - pos0[k, n])
            elif pa >= 0:
                add_ball(pa, -1, pos0[k, n], vt, pos0[k, n + 1] - pos0[k, n])
            else:
                add_ball(pb, -1, pos0[k, n + 1], vt,
                         pos0[k, n] - pos0[k, n + 1])
    # Trust region around the anchor.
    for k in range(K):
        for n in range(1, N - 1):
            add_ball(idx[k, n], -1, pos0[k, n], psi, np.zeros(2))

    balls = BallRows(ia=np.array(ia), ib=np.array(ib),
                     center=np.array(centers), radius=np.array(radii))

    # Affine collision rows for interior slots.
    rows, rhs = [], []
    for n in range(1, N - 1):
        for i in range(K):
            for j in range(i + 1, K):
                ci, cj, target = collision_linearization(
                    pos0[i, n], pos0[j, n], h[i], h[j], scenario.d_min)
                row = np.zeros(n_vars)
                row[2 * idx[i, n]: 2 * idx[i, n] + 2] = -ci
                row[2 * idx[j, n]: 2 * idx[j, n] + 2] = -cj
                bound = -target
                slack0 = bound - (-ci @ pos0[i, n] - cj @ pos0[j, n])
                if slack0 <= 0:
                    bound += -slack0 + 1e-9
                rows.append(row)
                rhs.append(bound)
    a_ub = np.array(rows) if rows else None
    b_ub = np.array(rhs) if rows else None

    program = ConcaveProgram(objective=objective, num_vars=n_vars,
                             a_ub=a_ub, b_ub=b_ub, balls=balls,
                             curvature_diag=obj_curvature)
    x0 = pos0[:, 1:N - 1, :].ravel()
    report = solve_concave_program(program, x0, gap_tol=gap_tol,
                                   max_inner=max_inner)
    grid = pos0.copy()
    grid[:, 1:N - 1, :] = report.x.reshape(K, N - 2, 2)
    return Trajectory(grid, h.copy()), report


def z_step(traj: Trajectory, scenario):
    """Epigraph update: the optimum sits on the tight constraints."""
    return tight_epigraph(traj, scenario)


# ---------------------------------------------------------------------------
# Trajectory block: outer loop with trust region (accept/reject on the exact
# objective, shrink on rejection)
# ---------------------------------------------------------------------------

@dataclass
class TrustRegionParams:
    psi0: Optional[float] = None    # default v_max * tau
    floor: float = 1e-2
    shrink: float = 0.5
    inner_tol: float = 1e-3
    outer_tol: float = 1e-3
    max_outer: int = 3
    max_inner: int = 6
    gap_tol: float = 3e-3


@dataclass
class TrajectoryStepResult:
    trajectory: Trajectory
    beams: np.ndarray
    gains: np.ndarray
    cache: sn.SensingGeometryCache
    objective: float
    trace: list = field(default_factory=list)


def _exact_objective(traj, beams, eta_c, delta, scenario):
    gains = cm.comm_gain_tensor(traj, beams, scenario)
    return cm.mission_sum_rate(gains, eta_c, delta, scenario.noise_uav), gains


def trajectory_step(traj: Trajectory, beams, eta_c, eta_s, delta, codebook,
                    scenario, params: TrustRegionParams = None,
                    refresh_beams=True) -> TrajectoryStepResult:
    """One full pass of the SCA trajectory optimization.

    Outer iterations rebuild the affine gain model at the incumbent; inner
    iterations alternate the q-step and the closed-form z-step, accepting a
    candidate only when the exactly evaluated mission rate improves and the
    exact cumulative MI still clears the requirement, halving the trust
    radius otherwise.  Worst case the incumbent is returned unchanged.
    """
    params = params or TrustRegionParams()
    psi0 = params.psi0 or scenario.v_max * scenario.slot_length
    r_min = scenario.mi_threshold

    best_traj = traj.copy()
    best_beams = np.array(beams)
    best_obj, best_gains = _exact_objective(best_traj, best_beams, eta_c,
                                            delta, scenario)
    best_cache = sn.build_sensing_cache(best_traj, codebook, scenario)
    trace = []

    for outer in range(params.max_outer):
        model = build_gain_model(best_traj, best_beams, scenario)
        q_r = best_traj.copy()
        obj_r = best_obj
        z = tight_epigraph(q_r, scenario)
        psi = psi0
        accepted = 0
        for _ in range(params.max_inner):
            cand, _ = q_step(q_r, z, psi, model, eta_c, delta, scenario,
                             gap_tol=params.gap_tol)
            obj_c, _ = _exact_objective(cand, best_beams, eta_c, delta,
                                        scenario)
            cache_c = sn.build_sensing_cache(cand, codebook, scenario)
            mi_c = sn.cumulative_radar_mi(cache_c, eta_s, delta, scenario)
            if obj_c > obj_r and mi_c >= r_min - 1e-9:
                gain = obj_c - obj_r
                q_r, obj_r = cand, obj_c
                accepted += 1
                z = z_step(q_r, scenario)
                if gain < params.inner_tol:
                    break
            else:
                psi *= params.shrink
                z = z_step(q_r, scenario)
                if psi < params.floor:
                    break

        if refresh_beams:
            beams_new = cm.matched_beams(q_r, codebook, scenario)
        else:
            beams_new = best_beams
        obj_new, gains_new = _exact_objective(q_r, beams_new, eta_c, delta,
                                              scenario)
        trace.append({"outer": outer, "accepted": accepted,
                      "objective": obj_new, "psi": psi})
        improved = obj_new - best_obj
        if improved > 0:
            best_traj, best_beams = q_r, beams_new
            best_obj, best_gains = obj_new, gains_new
            best_cache = sn.build_sensing_cache(best_traj, codebook, scenario)
            if improved < params.outer_tol * max(1.0, abs(best_obj)):
                break
        else:
            break

    return TrajectoryStepResult(trajectory=best_traj, beams=best_beams,
                                gains=best_gains, cache=best_cache,
                                objective=best_obj, trace=trace)
