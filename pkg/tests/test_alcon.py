"""Augmented-Lagrangian layer: penalty arithmetic, multiplier updates,
and constrained solves against brute-force oracles."""
import numpy as np
import pytest

from admmddp.alcon import (AlSettings, AlState, penalized_cost,
                           solve_constrained, update_multipliers,
                           violation_norm)
from admmddp.constraints import BoxConstraint, PairDistanceConstraint
from admmddp.ddp import solve
from admmddp.models import DubinsCar
from admmddp.problem import (BlockCost, BlockDynamics, DdpSettings,
                             LinearDynamics, QuadraticGoalCost, SumCost,
                             Trajectory, rollout)

from oracles import brute_force_box_qp, fd_gradient, rel_err


class _ConstantRow(BoxConstraint):
    """Helper: a single row with value s = y0 - limit on control comp 0."""


def _row_block(limit):
    # control component 0 <= limit gives row u0 - limit
    return BoxConstraint([-np.inf], [limit], target="control", indices=[0])


class TestPenalizedCost:
    def test_inactive_rows_leave_cost_unchanged(self):
        base = QuadraticGoalCost([1.0, 1.0], [1.0], [1.0, 1.0], [0.0, 0.0])
        blk = _row_block(10.0)
        state = AlState.fresh(5, blk.nrows, beta_init=2.0)
        pc = penalized_cost(base, [blk], state)
        x, u = np.array([0.3, -0.2]), np.array([0.5])
        assert pc.running(x, u, 2) == pytest.approx(base.running(x, u, 2))
        assert pc.terminal(x) == pytest.approx(base.terminal(x))

    def test_single_violated_row_adds_printed_penalty(self):
        # s = 1, w = 0, beta = 2 -> added term (beta/2) max(0, s)^2 = 1.0
        base = QuadraticGoalCost([0.0, 0.0], [0.0], [0.0, 0.0], [0.0, 0.0])
        blk = _row_block(0.0)
        state = AlState.fresh(5, 1, beta_init=2.0)
        pc = penalized_cost(base, [blk], state)
        assert pc.running(np.zeros(2), np.array([1.0]), 0) == pytest.approx(1.0)

    def test_gradient_is_beta_s_times_row_gradient(self):
        base = QuadraticGoalCost([0.0, 0.0], [0.0], [0.0, 0.0], [0.0, 0.0])
        blk = _row_block(0.0)
        state = AlState.fresh(5, 1, beta_init=2.0)
        pc = penalized_cost(base, [blk], state)
        u = np.array([1.0])
        # beta * s * grad_s = 2 * 1 * 1
        assert pc.lu(np.zeros(2), u, 0)[0] == pytest.approx(2.0)
        g = fd_gradient(lambda z: pc.running(np.zeros(2), z, 0), u)
        assert rel_err(g, pc.lu(np.zeros(2), u, 0)) < 1e-6

    def test_derivatives_match_fd_away_from_kink(self):
        rng = np.random.default_rng(0)
        base = QuadraticGoalCost([2.0, 1.0, 0.5, 1.0], [0.5, 0.5],
                                 [3.0, 3.0, 1.0, 1.0], [1.0, -1.0, 0.0, 0.0])
        blocks = [
            BoxConstraint([-0.5, -0.5], [0.5, 0.5], target="control"),
            BoxConstraint([-2.0], [2.0], target="state", indices=[3]),
        ]
        state = AlState(np.abs(rng.normal(size=(11, 6))),
                        np.full((11, 6), 4.0))
        pc = penalized_cost(base, blocks, state)
        checked = 0
        for _ in range(200):
            x = rng.normal(size=4)
            u = rng.normal(size=2)
            k = int(rng.integers(0, 10))
            s = np.concatenate([b.value(x, u, k) for b in blocks])
            shift = s + state.multipliers[k] / state.penalties[k]
            if np.min(np.abs(shift)) < 1e-4:
                continue  # stay away from the kink
            checked += 1
            gx = fd_gradient(lambda z: pc.running(z, u, k), x)
            gu = fd_gradient(lambda z: pc.running(x, z, k), u)
            assert rel_err(gx, pc.lx(x, u, k)) < 1e-5
            assert rel_err(gu, pc.lu(x, u, k)) < 1e-5
        assert checked > 100

    def test_expand_matches_pointwise(self):
        rng = np.random.default_rng(1)
        base = QuadraticGoalCost([2.0, 1.0, 0.5, 1.0], [0.5, 0.5],
                                 [3.0, 3.0, 1.0, 1.0], [1.0, -1.0, 0.0, 0.0])
        blocks = [
            BoxConstraint([-0.2, -0.2], [0.2, 0.2], target="control"),
            PairDistanceConstraint("collision", 0.4, slice(0, 2), slice(2, 4)),
        ]
        state = AlState(np.abs(rng.normal(size=(9, 5))), np.full((9, 5), 3.0))
        pc = penalized_cost(base, blocks, state)
        xs = rng.normal(size=(9, 4))
        us = rng.normal(size=(8, 2))
        e = pc.expand(xs, us)
        for k in (0, 3, 7):
            assert e.l[k] == pytest.approx(pc.running(xs[k], us[k], k))
            assert np.allclose(e.lx[k], pc.lx(xs[k], us[k], k), atol=1e-12)
            assert np.allclose(e.lu[k], pc.lu(xs[k], us[k], k), atol=1e-12)
            assert np.allclose(e.lxx[k], pc.lxx(xs[k], us[k], k), atol=1e-12)
            assert np.allclose(e.luu[k], pc.luu(xs[k], us[k], k), atol=1e-12)
        assert e.phi == pytest.approx(pc.terminal(xs[8]))
        assert np.allclose(e.phix, pc.phi_x(xs[8]), atol=1e-12)


class TestMultiplierUpdate:
    def test_zero_violation_leaves_state_unchanged(self):
        st = AlState.fresh(3, 2, beta_init=2.0)
        st2 = update_multipliers(st, np.zeros((4, 2)), AlSettings())
        assert np.array_equal(st2.multipliers, st.multipliers)
        assert np.array_equal(st2.penalties, st.penalties)

    def test_ascent_arithmetic(self):
        st = AlState(np.zeros((1, 1)), np.full((1, 1), 2.0))
        st2 = update_multipliers(st, np.array([[0.5]]), AlSettings())
        assert st2.multipliers[0, 0] == pytest.approx(1.0)

    def test_nonnegativity_clamp(self):
        st = AlState(np.full((1, 1), 3.0), np.full((1, 1), 2.0))
        st2 = update_multipliers(st, np.array([[-2.0]]), AlSettings())
        assert st2.multipliers[0, 0] == 0.0

    def test_penalty_growth_only_on_violated_rows(self):
        st = AlState(np.zeros((1, 2)), np.full((1, 2), 2.0))
        st2 = update_multipliers(st, np.array([[0.5, -0.5]]),
                                 AlSettings(beta_growth=10.0))
        assert st2.penalties[0, 0] == pytest.approx(20.0)
        assert st2.penalties[0, 1] == pytest.approx(2.0)

    def test_growth_capped_at_beta_max(self):
        st = AlState(np.zeros((1, 1)), np.full((1, 1), 5e7))
        st2 = update_multipliers(st, np.array([[1.0]]),
                                 AlSettings(beta_growth=10.0, beta_max=1e8))
        assert st2.penalties[0, 0] == pytest.approx(1e8)

    def test_multipliers_stay_nonnegative(self):
        rng = np.random.default_rng(5)
        st = AlState(np.abs(rng.normal(size=(6, 4))), np.full((6, 4), 2.0))
        for _ in range(20):
            st = update_multipliers(st, rng.normal(size=(6, 4)), AlSettings())
            assert np.all(st.multipliers >= 0)


class TestSolveConstrained:
    def test_empty_stack_equals_plain_solve_bit_exact(self):
        dyn = DubinsCar(dt=0.05)
        cost = QuadraticGoalCost([30, 30, 0, 6], [0.5, 0.5], [100, 100, 0, 100],
                                 [1.0, 1.0, 0.0, 0.0])
        initial = rollout(dyn, np.zeros(4), np.zeros((40, 2)))
        plain = solve(initial, cost, dyn, DdpSettings())
        wrapped = solve_constrained(initial, cost, dyn, [], DdpSettings())
        assert np.array_equal(plain.trajectory.states, wrapped.trajectory.states)
        assert np.array_equal(plain.trajectory.controls, wrapped.trajectory.controls)
        assert plain.cost == wrapped.cost

    def test_double_integrator_box_matches_qp_oracle(self):
        K, dtv = 8, 0.25
        A = np.array([[1.0, dtv], [0.0, 1.0]])
        B = np.array([[0.0], [dtv]])
        dyn = LinearDynamics(A, B)
        goal = np.array([3.0, 0.0])
        Q = np.diag([1.0, 0.2])
        R = np.diag([0.05])
        Qf = np.diag([20.0, 5.0])
        cost = QuadraticGoalCost(Q, R, Qf, goal)
        box = BoxConstraint([-1.0], [1.0], target="control")
        initial = rollout(dyn, np.zeros(2), np.zeros((K, 1)))
        res = solve_constrained(
            initial, cost, dyn, [box],
            DdpSettings(max_iterations=100, tol_abs=1e-12, tol_rel=1e-14),
            AlSettings(outer_iterations=25, tol=1e-8, beta_init=10.0))
        u = res.trajectory.controls.ravel()
        assert np.max(np.abs(u)) <= 1.0 + 1e-3

        # dense QP in the stacked controls: X = Phi x0 + Gamma U
        phi = np.zeros((K + 1, 2, 2))
        phi[0] = np.eye(2)
        for k in range(K):
            phi[k + 1] = A @ phi[k]
        gamma = np.zeros((K + 1, 2, K))
        for k in range(K):
            for j in range(k + 1):
                gamma[k + 1][:, j] = (np.linalg.matrix_power(A, k - j) @ B).ravel()
        H = 2 * R[0, 0] * np.eye(K)
        g = np.zeros(K)
        x0 = np.zeros(2)
        for k in range(1, K + 1):
            W = Qf if k == K else Q
            d = phi[k] @ x0 - goal
            H += 2 * gamma[k].T @ W @ gamma[k]
            g += 2 * gamma[k].T @ W @ d
        u_opt = brute_force_box_qp(H, g, -np.ones(K), np.ones(K))
        assert u_opt is not None
        assert np.max(np.abs(u - u_opt)) < 1e-3
        assert np.any(np.abs(u_opt) > 0.999)  # cost indeed pulls into the box

    def test_two_car_swap_respects_collision_distance(self):
        dt, K = 0.05, 70
        car = DubinsCar(dt)
        dyn = BlockDynamics([car, car])
        start = [np.array([-1.0, 0.0, 0.0, 0.0]), np.array([1.0, 0.015, np.pi, 0.0])]
        goal = [np.array([1.0, 0.0, 0.0, 0.0]), np.array([-1.0, 0.015, np.pi, 0.0])]
        q, r, qf = [30, 30, 0, 6], [0.5, 0.5], [100, 100, 0, 100]
        cost = SumCost([
            BlockCost(QuadraticGoalCost(q, r, qf, goal[i]),
                      slice(4 * i, 4 * i + 4), slice(2 * i, 2 * i + 2), 8, 4)
            for i in range(2)
        ])
        coll = PairDistanceConstraint("collision", 0.3, slice(0, 2), slice(4, 6))
        initial = rollout(dyn, np.concatenate(start), np.zeros((K, 4)))
        res = solve_constrained(initial, cost, dyn, [coll],
                                DdpSettings(max_iterations=60),
                                AlSettings(outer_iterations=12, tol=1e-4))
        xs = res.trajectory.states
        dmin = np.min(np.linalg.norm(xs[:, 0:2] - xs[:, 4:6], axis=1))
        assert dmin >= 0.3 - 1e-3
        # both cars actually made it across
        assert np.linalg.norm(xs[-1, 0:2] - goal[0][:2]) < 0.2
        assert np.linalg.norm(xs[-1, 4:6] - goal[1][:2]) < 0.2

    def test_exit_violation_below_tolerance_when_broke_early(self):
        dyn = DubinsCar(dt=0.05)
        cost = QuadraticGoalCost([30, 30, 0, 6], [0.5, 0.5], [100, 100, 0, 100],
                                 [1.5, 0.0, 0.0, 0.0])
        box = BoxConstraint([-2.0, -0.6], [2.0, 0.6], target="control")
        initial = rollout(dyn, np.zeros(4), np.zeros((50, 2)))
        res = solve_constrained(initial, cost, dyn, [box],
                                DdpSettings(max_iterations=60),
                                AlSettings(outer_iterations=15, tol=1e-5))
        if res.outer_iterations < 15:
            assert res.violation <= 1e-5
        assert np.all(res.al_state.multipliers >= 0)
        assert np.all(res.al_state.penalties > 0)
        assert violation_norm([box], res.trajectory) == pytest.approx(res.violation)


class TestStateValidation:
    def test_negative_multiplier_rejected(self):
        st = AlState(np.array([[-1.0]]), np.array([[1.0]]))
        with pytest.raises(ValueError):
            penalized_cost(QuadraticGoalCost([1], [1], [1], [0]), [], st)

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            AlSettings(beta_growth=0.5)
