"""LP and concave-program solvers against independent oracles."""

import itertools

import numpy as np
import pytest

from isac_planner import solvers as sv
from isac_planner.errors import InfeasibleStart, InfeasibleSubproblem


def enumerate_vertices(lp: sv.LinearProgram):
    """Brute-force LP oracle: check every basic feasible point.

    Collects all constraint rows (inequalities plus finite bounds), solves
    each n-subset as equalities, keeps feasible solutions, and returns the
    best objective value.  Independent of the solver under test.
    """
    n = lp.num_vars
    rows = []
    rhs = []
    if lp.a_ub is not None:
        for a, b in zip(lp.a_ub, lp.b_ub):
            rows.append(a)
            rhs.append(b)
    for i in range(n):
        if np.isfinite(lp.lower[i]):
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
            rhs.append(-lp.lower[i])
        if np.isfinite(lp.upper[i]):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            rhs.append(lp.upper[i])
    rows = np.array(rows)
    rhs = np.array(rhs)
    best = -np.inf
    arg = None
    for combo in itertools.combinations(range(len(rows)), n):
        a = rows[list(combo)]
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        x = np.linalg.solve(a, rhs[list(combo)])
        if np.all(rows @ x <= rhs + 1e-9):
            val = float(lp.objective @ x)
            if val > best:
                best, arg = val, x
    return best, arg


class TestSolveLp:
    def test_single_variable_example(self):
        lp = sv.LinearProgram(objective=[-1.0], a_ub=[[-10.0]], b_ub=[-6.0],
                              lower=[0.05], upper=[0.95])
        rep = sv.solve_lp(lp)
        assert rep.status == "optimal"
        assert rep.x[0] == pytest.approx(0.6, abs=1e-9)

    def test_contradictory_rows_infeasible(self):
        lp = sv.LinearProgram(objective=[1.0], a_ub=[[-10.0]], b_ub=[-10.0],
                              lower=[0.0], upper=[0.95])
        assert sv.solve_lp(lp).status == "infeasible"

    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(2024)
        for trial in range(50):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 9))
            lower = np.zeros(n)
            upper = rng.uniform(0.5, 2.0, n)
            a = rng.normal(size=(m, n))
            # Keep the box's lower corner feasible with margin.
            b = a @ lower + rng.uniform(0.1, 1.5, m)
            c = rng.normal(size=n)
            lp = sv.LinearProgram(objective=c, a_ub=a, b_ub=b,
                                  lower=lower, upper=upper)
            rep = sv.solve_lp(lp)
            oracle, _ = enumerate_vertices(lp)
            assert rep.status == "optimal", f"trial {trial}"
            assert rep.objective == pytest.approx(oracle, abs=1e-8), \
                f"trial {trial}"

    def test_lexicographic_tie_break(self):
        # Maximize x0 + x1 on the unit box: the whole face x0 + x1 is not
        # tied, use objective x0 only so x1 is free; lexicographic order
        # pins x1 at its lower bound.
        lp = sv.LinearProgram(objective=[1.0, 0.0], lower=[0.0, 0.0],
                              upper=[1.0, 1.0])
        rep = sv.solve_lp(lp)
        assert rep.x[0] == pytest.approx(1.0, abs=1e-8)
        assert rep.x[1] == pytest.approx(0.0, abs=1e-8)

    def test_deterministic(self):
        lp = sv.LinearProgram(objective=[1.0, 2.0, -0.5],
                              a_ub=[[1.0, 1.0, 1.0]], b_ub=[2.0],
                              lower=np.zeros(3), upper=np.full(3, 1.5))
        a = sv.solve_lp(lp)
        b = sv.solve_lp(lp)
        assert np.array_equal(a.x, b.x)
        assert a.objective == b.objective


class TestSolveConcave:
    def test_monotone_objective_hits_upper_bound(self):
        def f(x):
            return float(np.log1p(x[0])), np.array([1 / (1 + x[0])])
        p = sv.ConcaveProgram(objective=f, num_vars=1, lower=[0.0],
                              upper=[10.0])
        rep = sv.solve_concave_program(p, np.array([5.0]))
        assert rep.status == "optimal"
        assert rep.x[0] == pytest.approx(10.0, abs=1e-5)
        assert rep.kkt_residual <= 1e-5

    def test_symmetric_water_filling(self):
        n, total = 4, 10.0

        def f(x):
            return float(np.sum(np.log1p(x))), 1.0 / (1.0 + x)
        p = sv.ConcaveProgram(objective=f, num_vars=n,
                              a_ub=np.ones((1, n)), b_ub=[total],
                              lower=np.zeros(n))
        rep = sv.solve_concave_program(p, np.full(n, 0.1))
        assert np.max(np.abs(rep.x - total / n)) < 1e-6

    def test_two_variable_grid_search_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            w = rng.uniform(0.5, 2.0, 2)
            q = rng.uniform(0.2, 1.0, 2)
            cap = rng.uniform(0.8, 1.6)

            def f(x, w=w, q=q):
                val = float(w @ np.log1p(x) - q @ x ** 2)
                return val, w / (1.0 + x) - 2 * q * x

            p = sv.ConcaveProgram(objective=f, num_vars=2,
                                  a_ub=np.ones((1, 2)), b_ub=[cap],
                                  lower=np.zeros(2), upper=np.ones(2))
            rep = sv.solve_concave_program(p, np.full(2, min(0.25, cap / 3)))

            # Two-stage grid search, final resolution 1e-4.
            best = -np.inf
            lo = np.zeros(2)
            hi = np.ones(2)
            for stage in range(2):
                g0 = np.linspace(lo[0], hi[0], 101)
                g1 = np.linspace(lo[1], hi[1], 101)
                xx, yy = np.meshgrid(g0, g1, indexing="ij")
                mask = xx + yy <= cap
                vals = (w[0] * np.log1p(xx) + w[1] * np.log1p(yy)
                        - q[0] * xx ** 2 - q[1] * yy ** 2)
                vals = np.where(mask, vals, -np.inf)
                idx = np.unravel_index(vals.argmax(), vals.shape)
                best = max(best, float(vals[idx]))
                span = np.array([g0[1] - g0[0], g1[1] - g1[0]])
                center = np.array([g0[idx[0]], g1[idx[1]]])
                lo = np.maximum(center - span, 0.0)
                hi = np.minimum(center + span, 1.0)
            assert rep.objective >= best - 1e-3, f"trial {trial}"

    def test_infeasible_start_raises(self):
        def f(x):
            return float(-x[0] ** 2), np.array([-2 * x[0]])
        p = sv.ConcaveProgram(objective=f, num_vars=1, lower=[0.0],
                              upper=[1.0])
        with pytest.raises(InfeasibleStart):
            sv.solve_concave_program(p, np.array([2.0]))

    def test_deterministic_reports(self):
        def f(x):
            return float(np.sum(np.log1p(x))), 1.0 / (1.0 + x)
        p = sv.ConcaveProgram(objective=f, num_vars=3,
                              a_ub=np.ones((1, 3)), b_ub=[2.0],
                              lower=np.zeros(3))
        a = sv.solve_concave_program(p, np.full(3, 0.2))
        b = sv.solve_concave_program(p, np.full(3, 0.2))
        assert np.array_equal(a.x, b.x)
        assert a.objective == b.objective
        assert a.iterations == b.iterations

    def test_barrier_stages_monotone(self):
        def f(x):
            return float(np.sum(np.log1p(x))), 1.0 / (1.0 + x)
        p = sv.ConcaveProgram(objective=f, num_vars=4,
                              a_ub=np.ones((1, 4)), b_ub=[10.0],
                              lower=np.zeros(4))
        rep = sv.solve_concave_program(p, np.full(4, 0.1))
        stages = rep.stage_objectives
        assert all(b >= a - 1e-9 for a, b in zip(stages, stages[1:]))

    def test_feasibility_and_status_honesty(self):
        # Returned points are always feasible and near-optimal; the
        # "optimal" label is only claimed when the KKT residual certifies
        # it (barrier centering cannot always be driven that far with
        # first-order steps, and then the honest status is the limit one).
        rng = np.random.default_rng(17)
        for _ in range(10):
            n = int(rng.integers(2, 5))
            w = rng.uniform(0.5, 2.0, n)
            cap = rng.uniform(1.0, 3.0)

            def f(x, w=w):
                return float(w @ np.log1p(x)), w / (1.0 + x)
            p = sv.ConcaveProgram(objective=f, num_vars=n,
                                  a_ub=np.ones((1, n)), b_ub=[cap],
                                  lower=np.zeros(n))
            rep = sv.solve_concave_program(p, np.full(n, cap / (2 * n)))
            assert float(rep.x.sum()) <= cap + 1e-6
            assert np.all(rep.x >= -1e-6)
            if rep.status == "optimal":
                assert rep.kkt_residual <= 1e-5
            # water-filling closed form: x_i = w_i / lam - 1, clipped
            from scipy.optimize import brentq
            lam = brentq(lambda l: np.clip(w / l - 1, 0, None).sum() - cap,
                         1e-6, 10.0)
            x_star = np.clip(w / lam - 1, 0, None)
            assert rep.objective >= f(x_star)[0] - 1e-4

    def test_ball_constraint_rows(self):
        # Maximize x + y inside a unit disk around (1, 1).
        def f(x):
            return float(x.sum()), np.ones(2)
        balls = sv.BallRows(ia=[0], ib=[-1], center=[[1.0, 1.0]],
                            radius=[1.0])
        p = sv.ConcaveProgram(objective=f, num_vars=2, balls=balls)
        rep = sv.solve_concave_program(p, np.array([1.0, 1.0]))
        expected = np.array([1.0, 1.0]) + np.sqrt(0.5)
        assert np.max(np.abs(rep.x - expected)) < 1e-4
        assert balls.slacks(rep.x.reshape(-1, 2))[0] > 0


class TestKktResidual:
    def test_unconstrained_concave_quadratic(self):
        target = np.array([0.7, -1.3])

        def f(x):
            diff = x - target
            return float(-diff @ diff), -2 * diff
        p = sv.ConcaveProgram(objective=f, num_vars=2)
        assert sv.kkt_residual(p, target) < 1e-10

    def test_boundary_optimum_small_residual(self):
        def f(x):
            return float(np.log1p(x[0])), np.array([1 / (1 + x[0])])
        p = sv.ConcaveProgram(objective=f, num_vars=1, lower=[0.0],
                              upper=[10.0])
        rep = sv.solve_concave_program(p, np.array([5.0]))
        assert sv.kkt_residual(p, rep.x) <= 1e-5

    def test_interior_non_stationary_point(self):
        def f(x):
            return float(np.log1p(x[0])), np.array([1 / (1 + x[0])])
        p = sv.ConcaveProgram(objective=f, num_vars=1, lower=[0.0],
                              upper=[10.0])
        assert sv.kkt_residual(p, np.array([5.0])) > 1e-3


def test_phase_one_finds_interior_point():
    def f(x):
        return 0.0, np.zeros(2)
    p = sv.ConcaveProgram(objective=f, num_vars=2,
                          a_ub=[[1.0, 1.0]], b_ub=[1.0],
                          lower=np.zeros(2))
    x, margin = sv.phase_one(p)
    assert margin > 1e-7
    assert np.all(x >= margin - 1e-9)
    assert x.sum() <= 1.0 - margin + 1e-9


def test_phase_one_detects_infeasible():
    def f(x):
        return 0.0, np.zeros(1)
    p = sv.ConcaveProgram(objective=f, num_vars=1,
                          a_ub=[[1.0]], b_ub=[-1.0], lower=[0.0])
    with pytest.raises(InfeasibleSubproblem):
        sv.phase_one(p)
