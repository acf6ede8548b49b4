"""Deterministic solvers for the convex subproblems the SCA steps generate.

Two problem classes are supported: linear programs (box bounds plus affine
inequality rows) and smooth concave maximization over affine rows, box
bounds, and quadratic ball rows on planar points.  The LP path rides on
HiGHS; the concave path is a log-barrier method with diagonally scaled
backtracking gradient ascent, which is a good match for the small, nearly
separable programs built here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.optimize

from .errors import InfeasibleStart, InfeasibleSubproblem

_ARMIJO = 1e-4
_BOUNDARY_FRACTION = 0.995


@dataclass
class LinearProgram:
    """maximize objective @ x  s.t.  a_ub @ x <= b_ub, lower <= x <= upper."""

    objective: np.ndarray
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.size
        if self.a_ub is not None:
            self.a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
            self.b_ub = np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        if self.lower is None:
            self.lower = np.full(n, -np.inf)
        else:
            self.lower = np.asarray(self.lower, dtype=float)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        else:
            self.upper = np.asarray(self.upper, dtype=float)

    @property
    def num_vars(self):
        return self.objective.size


@dataclass
class BallRows:
    """Rows ||X[ia] - X[ib] - center|| <= radius over planar points.

    X is the decision vector viewed as (n/2, 2); ib == -1 drops the second
    point, giving a plain ball around `center`.
    """

    ia: np.ndarray
    ib: np.ndarray
    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        self.ia = np.asarray(self.ia, dtype=int)
        self.ib = np.asarray(self.ib, dtype=int)
        self.center = np.asarray(self.center, dtype=float).reshape(-1, 2)
        self.radius = np.asarray(self.radius, dtype=float)

    def values(self, points):
        vec = points[self.ia] - self.center
        has_b = self.ib >= 0
        if np.any(has_b):
            vec = vec - np.where(has_b[:, None], points[np.maximum(self.ib, 0)], 0.0)
        return vec

    def slacks(self, points):
        vec = self.values(points)
        return self.radius ** 2 - np.sum(vec ** 2, axis=1)


@dataclass
class ConcaveProgram:
    """maximize f(x) s.t. a_ub @ x <= b_ub, ball rows, lower <= x <= upper.

    `objective` returns (value, gradient) and must be concave and smooth on
    the interior of the feasible set.
    """

    objective: Callable[[np.ndarray], tuple]
    num_vars: int
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    balls: Optional[BallRows] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    # Optional diag of -hessian(objective); sharpens the scaled ascent.
    curvature_diag: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.a_ub is not None:
            self.a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
            self.b_ub = np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        self.lower = (np.full(self.num_vars, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float))
        self.upper = (np.full(self.num_vars, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float))

    def num_constraints(self):
        m = 0
        if self.a_ub is not None:
            m += self.a_ub.shape[0]
        if self.balls is not None:
            m += self.balls.radius.size
        m += int(np.isfinite(self.lower).sum() + np.isfinite(self.upper).sum())
        return m


@dataclass
class SolveReport:
    status: str                 # "optimal" | "infeasible" | "iteration-limit"
    x: Optional[np.ndarray]
    objective: float
    kkt_residual: float
    iterations: int
    stage_objectives: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------

def _linprog(c_max, a_ub, b_ub, lower, upper, maxiter=10000):
    bounds = list(zip(np.where(np.isfinite(lower), lower, None),
                      np.where(np.isfinite(upper), upper, None)))
    return scipy.optimize.linprog(-np.asarray(c_max, dtype=float),
                                  A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                                  method="highs",
                                  options={"maxiter": int(maxiter)})


def solve_lp(p: LinearProgram, lexicographic=True,
             max_iterations=10000) -> SolveReport:
    """Solve a small dense LP; ties broken toward the lexicographically
    smallest solution (earliest variable index minimized first).
    """
    res = _linprog(p.objective, p.a_ub, p.b_ub, p.lower, p.upper,
                   max_iterations)
    iterations = int(getattr(res, "nit", 0))
    if res.status == 2:
        return SolveReport("infeasible", None, -np.inf, np.inf, iterations)
    if res.status == 3:
        # Unbounded objective; report as a failed solve.
        return SolveReport("iteration-limit", None, np.inf, np.inf, iterations)
    if not res.success:
        return SolveReport("iteration-limit", res.x, -np.inf, np.inf,
                           iterations)
    x = np.asarray(res.x, dtype=float)
    best = float(p.objective @ x)

    if lexicographic and p.num_vars > 1:
        tie = 1e-9 * max(1.0, abs(best))
        lo = p.lower.copy()
        hi = p.upper.copy()
        # Keep the objective optimal, then minimize coordinates in order.
        if p.a_ub is None:
            a_rows = -p.objective[None, :]
            b_rows = np.array([-(best - tie)])
        else:
            a_rows = np.vstack([p.a_ub, -p.objective[None, :]])
            b_rows = np.append(p.b_ub, -(best - tie))
        refined = x
        for i in range(p.num_vars):
            unit = np.zeros(p.num_vars)
            unit[i] = -1.0
            sub = _linprog(unit, a_rows, b_rows, lo, hi)
            if not sub.success:
                refined = None
                break
            refined = np.asarray(sub.x, dtype=float)
            iterations += int(getattr(sub, "nit", 0))
            hi[i] = refined[i] + tie
            lo[i] = max(p.lower[i], refined[i] - tie)
        if refined is not None:
            refined = np.clip(refined, p.lower, p.upper)
            # Solver tolerances can erode the objective along the pass;
            # keep the refinement only when the optimum survives intact.
            if float(p.objective @ refined) >= best - tie:
                x = refined

    grad = p.objective
    resid = kkt_residual_parts(grad, x, p.a_ub, p.b_ub, None, p.lower, p.upper)
    return SolveReport("optimal", x, float(p.objective @ x), resid, iterations)


# ---------------------------------------------------------------------------
# Concave maximization via log barrier
# ---------------------------------------------------------------------------

def _slack_blocks(p: ConcaveProgram, x):
    """All constraint slacks; any nonpositive entry means x is not interior."""
    blocks = []
    if p.a_ub is not None:
        blocks.append(p.b_ub - p.a_ub @ x)
    if p.balls is not None:
        blocks.append(p.balls.slacks(x.reshape(-1, 2)))
    fin_lo = np.isfinite(p.lower)
    fin_hi = np.isfinite(p.upper)
    if fin_lo.any():
        blocks.append((x - p.lower)[fin_lo])
    if fin_hi.any():
        blocks.append((p.upper - x)[fin_hi])
    return blocks


def min_slack(p: ConcaveProgram, x):
    blocks = _slack_blocks(p, x)
    return min((float(b.min()) for b in blocks if b.size), default=np.inf)


def _barrier_terms(p: ConcaveProgram, x):
    """Barrier value, gradient, and diagonal curvature of sum(log(slack))."""
    val = 0.0
    grad = np.zeros_like(x)
    diag = np.zeros_like(x)
    if p.a_ub is not None:
        s = p.b_ub - p.a_ub @ x
        if np.any(s <= 0):
            return -np.inf, grad, diag
        val += np.log(s).sum()
        inv = 1.0 / s
        grad -= p.a_ub.T @ inv
        diag += (p.a_ub ** 2).T @ inv ** 2
    if p.balls is not None:
        pts = x.reshape(-1, 2)
        vec = p.balls.values(pts)
        s = p.balls.radius ** 2 - np.sum(vec ** 2, axis=1)
        if np.any(s <= 0):
            return -np.inf, grad, diag
        val += np.log(s).sum()
        coef = (2.0 / s)[:, None] * vec              # -d log s / d X[ia]
        gpts = np.zeros_like(pts)
        np.add.at(gpts, p.balls.ia, -coef)
        has_b = p.balls.ib >= 0
        if np.any(has_b):
            np.add.at(gpts, p.balls.ib[has_b], coef[has_b])
        grad += gpts.ravel()
        curv = (coef ** 2) + (2.0 / s)[:, None]      # first + second order
        dpts = np.zeros_like(pts)
        np.add.at(dpts, p.balls.ia, curv)
        if np.any(has_b):
            np.add.at(dpts, p.balls.ib[has_b], curv[has_b])
        diag += dpts.ravel()
    fin_lo = np.isfinite(p.lower)
    if fin_lo.any():
        s = (x - p.lower)[fin_lo]
        if np.any(s <= 0):
            return -np.inf, grad, diag
        val += np.log(s).sum()
        grad[fin_lo] += 1.0 / s
        diag[fin_lo] += 1.0 / s ** 2
    fin_hi = np.isfinite(p.upper)
    if fin_hi.any():
        s = (p.upper - x)[fin_hi]
        if np.any(s <= 0):
            return -np.inf, grad, diag
        val += np.log(s).sum()
        grad[fin_hi] -= 1.0 / s
        diag[fin_hi] += 1.0 / s ** 2
    return val, grad, diag


def _max_step(p: ConcaveProgram, x, d):
    """Largest step along d keeping every slack positive, times a margin."""
    t = np.inf
    if p.a_ub is not None:
        ad = p.a_ub @ d
        s = p.b_ub - p.a_ub @ x
        rising = ad > 0
        if np.any(rising):
            t = min(t, float(np.min(s[rising] / ad[rising])))
    if p.balls is not None:
        pts = x.reshape(-1, 2)
        dpts = d.reshape(-1, 2)
        vec = p.balls.values(pts)
        dvec = dpts[p.balls.ia]
        has_b = p.balls.ib >= 0
        if np.any(has_b):
            dvec = dvec - np.where(has_b[:, None],
                                   dpts[np.maximum(p.balls.ib, 0)], 0.0)
        a = np.sum(dvec ** 2, axis=1)
        b = np.sum(vec * dvec, axis=1)
        s = p.balls.radius ** 2 - np.sum(vec ** 2, axis=1)
        moving = a > 0
        if np.any(moving):
            disc = np.sqrt(b[moving] ** 2 + a[moving] * s[moving])
            roots = (-b[moving] + disc) / a[moving]
            t = min(t, float(np.min(roots)))
    fin_lo = np.isfinite(p.lower) & (d < 0)
    if fin_lo.any():
        t = min(t, float(np.min((x - p.lower)[fin_lo] / -d[fin_lo])))
    fin_hi = np.isfinite(p.upper) & (d > 0)
    if fin_hi.any():
        t = min(t, float(np.min((p.upper - x)[fin_hi] / d[fin_hi])))
    return _BOUNDARY_FRACTION * t


def solve_concave_program(p: ConcaveProgram, x0, gap_tol=1e-7,
                          stage_gtol=1e-9, max_inner=500,
                          max_iterations=100000) -> SolveReport:
    """Log-barrier maximization from a strictly feasible start.

    The barrier parameter shrinks by 10x per stage until the duality-gap
    proxy (constraint count times mu) falls below `gap_tol`.  Each stage
    runs backtracking gradient ascent with a fraction-to-boundary step cap:
    diagonally scaled when the program supplies analytic curvature,
    spectral (Barzilai-Borwein) steps with non-monotone acceptance
    otherwise.  Intermediate stages are solved loosely, only the final
    stage is driven to `stage_gtol`.
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.size != p.num_vars:
        raise ValueError("x0 has the wrong length")
    if min_slack(p, x) <= 0:
        raise InfeasibleStart("x0 is not strictly feasible")

    m = max(p.num_constraints(), 1)
    f0, g0 = p.objective(x)
    _, bgrad, _ = _barrier_terms(p, x)
    gnorm_f = float(np.linalg.norm(g0))
    gnorm_b = float(np.linalg.norm(bgrad))
    mu = min(max(gnorm_f / max(gnorm_b, 1e-12), 1e-6), 1.0)

    scale = max(1.0, abs(f0))
    total_iter = 0
    stage_objectives = []
    best_x, best_f = x.copy(), f0
    status = "optimal"
    step = 0.1 * (1.0 + float(np.linalg.norm(x)))
    while True:
        final_stage = m * mu <= gap_tol
        gtol = stage_gtol if final_stage else max(stage_gtol, 1e-5)
        ftol = 1e-14 if final_stage else 1e-10
        fx, gx = p.objective(x)
        bval, bgrad, bdiag = _barrier_terms(p, x)
        phi = fx + mu * bval
        gphi = gx + mu * bgrad
        odiag = (p.curvature_diag(x) if p.curvature_diag is not None
                 else None)
        prev_x, prev_g = None, None
        history = [phi]
        stall = 0
        flat = 0
        for _ in range(max_inner):
            if odiag is not None:
                # Diagonally scaled ascent with analytic curvature.
                diag = mu * bdiag + odiag
                ridge = 1e-9 * float(diag.max(initial=0.0)) + 1e-15
                d = gphi / (diag + ridge)
                norm = float(np.linalg.norm(d))
                if norm == 0.0:
                    break
                d /= norm
                t = 2.0 * step
            else:
                # Barzilai-Borwein step on the raw gradient; the spectral
                # step length absorbs the curvature the diagonal cannot see.
                norm = float(np.linalg.norm(gphi))
                if norm == 0.0:
                    break
                d = gphi / norm
                if prev_x is None:
                    t = step
                else:
                    dx = x - prev_x
                    dg = gphi - prev_g
                    denom = -float(dx @ dg)
                    t = (float(dx @ dx) / denom * norm if denom > 0
                         else 2.0 * step)
                t = min(max(t, 1e-14 * (1.0 + scale)), 1e6 * (1.0 + scale))
            gd = float(gphi @ d)   # ascent rate per unit step length
            if gd <= gtol * max(scale, abs(phi)) / (1.0 + step):
                break
            cap = _max_step(p, x, d)
            t = min(t, cap)
            accepted = False
            # Non-monotone acceptance (needed for spectral steps to bite).
            ref = max(history[-10:]) if odiag is None else phi
            for _ in range(50):
                xn = x + t * d
                fn, gn = p.objective(xn)
                bn, bgn, bdn = _barrier_terms(p, xn)
                phin = fn + mu * bn
                if np.isfinite(phin) and phin >= ref + _ARMIJO * t * gd \
                        and phin >= phi - 0.1 * abs(phi):
                    accepted = True
                    break
                t *= 0.5
            total_iter += 1
            if total_iter >= max_iterations:
                status = "iteration-limit"
                break
            if not accepted:
                step *= 0.25
                stall += 1
                if stall > 3 or step < 1e-16 * (1.0 + scale):
                    break
                continue
            stall = 0
            gain = phin - phi
            step = t
            prev_x, prev_g = x, gphi
            if p.curvature_diag is not None:
                odiag = p.curvature_diag(xn)
            x, fx, gx = xn, fn, gn
            bval, bgrad, bdiag = bn, bgn, bdn
            phi, gphi = phin, gn + mu * bgn
            history.append(phi)
            flat = flat + 1 if abs(gain) <= ftol * max(scale, abs(phi)) else 0
            if flat >= 4:
                break
        if fx > best_f:
            best_x, best_f = x.copy(), fx
        stage_objectives.append(best_f)
        if total_iter >= max_iterations:
            status = "iteration-limit"
            break
        if final_stage:
            break
        mu = max(mu / 10.0, gap_tol / (2.0 * m))

    if best_f > fx:
        x, fx = best_x, best_f
    _, gx = p.objective(x)
    resid = kkt_residual_parts(gx, x, p.a_ub, p.b_ub, p.balls,
                               p.lower, p.upper)
    if status == "optimal" and resid > 1e-5:
        # Loose solves hand back the best point without claiming optimality.
        status = "iteration-limit"
    return SolveReport(status, x, float(fx), resid, total_iter,
                       stage_objectives)


def phase_one(p: ConcaveProgram):
    """Find a strictly feasible point for the affine/box part of a program.

    Solves the auxiliary LP max t s.t. A x + t <= b, lower + t <= x <=
    upper - t and declares the program infeasible when the achievable
    margin is below 1e-7.  Ball rows are not handled; callers of the
    trajectory subproblem always start from a feasible incumbent.
    """
    n = p.num_vars
    c = np.zeros(n + 1)
    c[-1] = 1.0
    rows = []
    rhs = []
    if p.a_ub is not None:
        rows.append(np.hstack([p.a_ub, np.ones((p.a_ub.shape[0], 1))]))
        rhs.append(p.b_ub)
    for j in np.where(np.isfinite(p.lower))[0]:
        row = np.zeros(n + 1)
        row[j] = -1.0
        row[-1] = 1.0
        rows.append(row[None, :])
        rhs.append(np.array([-p.lower[j]]))
    for j in np.where(np.isfinite(p.upper))[0]:
        row = np.zeros(n + 1)
        row[j] = 1.0
        row[-1] = 1.0
        rows.append(row[None, :])
        rhs.append(np.array([p.upper[j]]))
    if not rows:
        return np.zeros(n), np.inf
    lp = LinearProgram(objective=c, a_ub=np.vstack(rows),
                       b_ub=np.concatenate(rhs),
                       upper=np.append(np.full(n, np.inf), 1e9))
    rep = solve_lp(lp, lexicographic=False)
    if rep.status != "optimal" or rep.x is None or rep.x[-1] <= 1e-7:
        raise InfeasibleSubproblem("phase-I margin <= 1e-7; program infeasible")
    return rep.x[:-1], float(rep.x[-1])


# ---------------------------------------------------------------------------
# KKT residual
# ---------------------------------------------------------------------------

def kkt_residual_parts(obj_grad, x, a_ub, b_ub, balls, lower, upper,
                       active_tol=1e-5):
    """Stationarity plus complementary-slackness residual at x.

    Multipliers for the near-active constraints are fit by nonnegative least
    squares; the residual is ||grad f - J^T lambda|| plus the weighted slack
    of the multipliers used.  Zero iff x is a KKT point.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(obj_grad, dtype=float)
    scale = max(1.0, float(np.linalg.norm(g)))
    rows = []
    slacks = []
    if a_ub is not None:
        s = b_ub - a_ub @ x
        for i in np.where(s <= active_tol * scale)[0]:
            rows.append(a_ub[i])
            slacks.append(max(s[i], 0.0))
    if balls is not None:
        pts = x.reshape(-1, 2)
        vec = balls.values(pts)
        s = balls.radius ** 2 - np.sum(vec ** 2, axis=1)
        for i in np.where(s <= active_tol * scale)[0]:
            row = np.zeros_like(pts)
            row[balls.ia[i]] = 2.0 * vec[i]
            if balls.ib[i] >= 0:
                row[balls.ib[i]] -= 2.0 * vec[i]
            rows.append(row.ravel())
            slacks.append(max(s[i], 0.0))
    if lower is not None:
        fin = np.isfinite(lower)
        s = x - lower
        for i in np.where(fin & (s <= active_tol * scale))[0]:
            row = np.zeros_like(x)
            row[i] = -1.0
            rows.append(row)
            slacks.append(max(s[i], 0.0))
    if upper is not None:
        fin = np.isfinite(upper)
        s = upper - x
        for i in np.where(fin & (s <= active_tol * scale))[0]:
            row = np.zeros_like(x)
            row[i] = 1.0
            rows.append(row)
            slacks.append(max(s[i], 0.0))

    if not rows:
        return float(np.linalg.norm(g))
    jac = np.array(rows)
    lam, _ = scipy.optimize.nnls(jac.T, g)
    stationarity = float(np.linalg.norm(g - jac.T @ lam))
    comp = float(np.dot(lam, slacks))
    return stationarity + comp


def kkt_residual(p, x):
    """KKT residual of a LinearProgram or ConcaveProgram at x."""
    x = np.asarray(x, dtype=float)
    if isinstance(p, LinearProgram):
        return kkt_residual_parts(p.objective, x, p.a_ub, p.b_ub, None,
                                  p.lower, p.upper)
    _, g = p.objective(x)
    return kkt_residual_parts(g, x, p.a_ub, p.b_ub, p.balls, p.lower, p.upper)
