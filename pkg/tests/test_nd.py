"""Nested consensus solver: augmented assembly, global/dual updates,
and small end-to-end runs."""
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from admmddp import central
from admmddp.md import combine_copies
from admmddp.nd import NdOptions, assemble_augmented, run
from admmddp.alcon import AlSettings
from admmddp.network import Phase, build_graph, expected_phase_count
from admmddp.problem import DdpSettings, Trajectory
from admmddp.team import TeamProblem

from teams import car_agent, single_car, two_car_swap


def small_opts(iterations=20, L=2):
    return NdOptions(iterations=iterations,
                     ddp=DdpSettings(max_iterations=6),
                     al=AlSettings(outer_iterations=L))


class TestAssembly:
    def test_singleton_neighborhood_is_single_agent_problem(self):
        team = single_car(K=10)
        prob = assemble_augmented(team, 0)
        assert prob.p_total == 4 and prob.q_total == 2
        assert prob.base_cost.parts[0].weight == pytest.approx(1.0)

    def test_two_mutual_neighbors_dims_and_weights(self):
        team = two_car_swap(K=10)
        prob = assemble_augmented(team, 0)
        assert prob.p_total == 8 and prob.q_total == 4
        # both agents are watched by both: every weight is 1/2
        assert [p.weight for p in prob.base_cost.parts] == [0.5, 0.5]
        assert prob.members == [0, 1]

    def test_asymmetric_graph_weights(self):
        dt = 0.05
        agents = [car_agent([0, 0, 0, 0], [1, 0, 0, 0], dt),
                  car_agent([2, 0, 0, 0], [3, 0, 0, 0], dt)]
        adj = np.zeros((2, 2), dtype=bool)
        adj[0, 1] = True  # 0 watches 1; 1 watches only itself
        team = TeamProblem(agents, build_graph(adjacency=adj), 10, dt, 2,
                           collision=0.3)
        prob0 = assemble_augmented(team, 0)
        # |P_0| = 1 (only 0 watches 0), |P_1| = 2 (0 and 1 watch 1)
        assert prob0.base_cost.parts[0].weight == pytest.approx(1.0)
        assert prob0.base_cost.parts[1].weight == pytest.approx(0.5)
        prob1 = assemble_augmented(team, 1)
        assert prob1.p_total == 4  # singleton neighborhood
        assert prob1.base_cost.parts[0].weight == pytest.approx(0.5)

    def test_weights_telescope_to_global_cost(self):
        team = two_car_swap(K=12)
        rng = np.random.default_rng(0)
        # consensus-consistent trajectories: one per agent, shared by copies
        trajs = [Trajectory(rng.normal(size=(13, 4)), rng.normal(size=(12, 2)))
                 for _ in range(2)]
        total_aug = 0.0
        for i in range(2):
            prob = assemble_augmented(team, i)
            xa = np.concatenate([trajs[j].states for j in prob.members], axis=1)
            ua = np.concatenate([trajs[j].controls for j in prob.members], axis=1)
            total_aug += prob.base_cost.total(Trajectory(xa, ua))
        total_plain = sum(team.agents[j].cost.total(trajs[j]) for j in range(2))
        assert abs(total_aug - total_plain) <= 1e-10 * max(1.0, abs(total_plain))

    def test_interagent_rows_wired_between_blocks(self):
        team = two_car_swap(K=10)
        prob = assemble_augmented(team, 0)
        pair_rows = [b for b in prob.blocks
                     if type(b).__name__ == "PairDistanceConstraint"]
        assert len(pair_rows) == 1
        x = np.zeros(8)
        x[4] = 0.25  # neighbor copy offset by 0.25 m
        assert pair_rows[0].value(x, None, 0)[0] == pytest.approx(0.05)

    def test_block_dynamics_jacobians_block_diagonal(self):
        team = two_car_swap(K=10)
        prob = assemble_augmented(team, 0)
        x = np.concatenate([team.agents[0].start, team.agents[1].start])
        u = np.full(4, 0.3)
        jx = prob.dynamics.jacobian_x(x, u)
        assert np.all(jx[:4, 4:] == 0)
        assert np.all(jx[4:, :4] == 0)


class TestGlobalAndDual:
    def test_single_holder(self):
        c = np.full((3, 2), 2.0)
        dual = np.full((3, 2), 1.0)
        z = combine_copies([(0, c, dual, np.full(2, 4.0))], "scalar")
        assert np.allclose(z, 2.25)

    def test_mean_of_two_copies(self):
        c1, c2 = np.full((2, 4), 1.0), np.full((2, 4), 3.0)
        z = combine_copies([(0, c1, np.zeros((2, 4)), np.ones(4)),
                            (1, c2, np.zeros((2, 4)), np.ones(4))], "scalar")
        assert np.allclose(z, 2.0)

    def test_dual_sum_vanishes_after_first_global_update(self):
        team = two_car_swap(K=30)
        from admmddp.penalties import PenaltySettings
        opts = NdOptions(iterations=3, ddp=DdpSettings(max_iterations=4),
                         al=AlSettings(outer_iterations=1),
                         penalties=PenaltySettings(mode="scalar", tau=2.0,
                                                   rho=8.0, mu=2.0))
        res = run(team, opts)
        # reconstruct the dual sums from the last exchange is internal; use
        # the printed property instead: per-agent duals of copies of agent i
        # must cancel. With mutual 2-agent graph they are lam_0[own 0 block]
        # + lam_1[copy-of-0 block]; reproduce by rerunning internals
        from admmddp import nd as nd_mod
        agents = []
        mailbox_runs = []
        # direct check through a fresh short run with instrumented state
        # (duals live on the agents): rerun and inspect
        opts2 = NdOptions(iterations=2, ddp=DdpSettings(max_iterations=4),
                          al=AlSettings(outer_iterations=1),
                          penalties=PenaltySettings(mode="scalar", tau=2.0,
                                                    rho=8.0, mu=2.0))
        # use the module internals for a white-box assertion
        team2 = two_car_swap(K=20)
        sts = [nd_mod._Agent(team2, i, opts2) for i in range(2)]
        rng = np.random.default_rng(1)
        for st in sts:
            st.xa = rng.normal(size=st.xa.shape)
            st.ua = rng.normal(size=st.ua.shape)
        # one global + dual round in scalar mode
        for i in range(2):
            own = sts[i].own_x
            other = sts[1 - i]
            copy_slice = other.prob.state_slices[i]
            xc = [(i, sts[i].xa[:, own], sts[i].lam[:, own], sts[i].pen.p[own]),
                  (1 - i, other.xa[:, copy_slice], other.lam[:, copy_slice],
                   other.pen.p[copy_slice])]
            z = combine_copies(xc, "scalar")
            for st, sl in ((sts[i], own), (other, copy_slice)):
                st.za[:, sl] = z
        for st in sts:
            st.lam = st.lam + st.pen.p * (st.xa - st.za)
        for i in range(2):
            own = sts[i].own_x
            copy_slice = sts[1 - i].prob.state_slices[i]
            dual_sum = sts[i].lam[:, own] + sts[1 - i].lam[:, copy_slice]
            assert np.max(np.abs(dual_sum)) <= 1e-8

    def test_dual_update_arithmetic(self):
        team = single_car(K=5)
        from admmddp import nd as nd_mod
        st = nd_mod._Agent(team, 0, small_opts())
        st.xa = np.full_like(st.xa, 1.0)
        st.za = np.full_like(st.za, 0.5)
        st.pen = type(st.pen)(st.pen.t_base, np.full_like(st.pen.p_base, 2.0),
                              st.pen.m_base, np.ones(3))
        lam = st.lam + st.pen.p * (st.xa - st.za)
        assert np.allclose(lam, 1.0)  # rho = 2, gap 0.5 -> increment 1.0


class TestRuns:
    def test_single_agent_matches_central(self):
        from admmddp.penalties import PenaltySettings
        team = single_car(K=30, boxed=True)
        tight = DdpSettings(max_iterations=20, tol_abs=1e-12, tol_rel=1e-14)
        res = run(team, NdOptions(
            iterations=30, ddp=tight,
            al=AlSettings(outer_iterations=3, tol=1e-8),
            penalties=PenaltySettings(c1=0.5, c2=0.5, c3=0.5)))
        base = central.run(team, tight, AlSettings(outer_iterations=10, tol=1e-8))
        err = np.max(np.abs(res.trajectories[0].states
                            - base.trajectories[0].states))
        assert err < 1e-6

    def test_two_car_swap_consensus_and_separation(self):
        team = two_car_swap(K=60)
        res = run(team, small_opts(iterations=25, L=2))
        gaps = [row["state_gap"] for row in res.gap_log if row["iteration"]
                == res.iterations]
        assert max(gaps) <= 1e-2
        xs = [t.states for t in res.trajectories]
        dmin = np.min(np.linalg.norm(xs[0][:, :2] - xs[1][:, :2], axis=1))
        assert dmin >= 0.3 - 1e-3
        for traj, spec in zip(res.trajectories, team.agents):
            assert np.linalg.norm(traj.states[-1, :2] - spec.goal[:2]) < 0.2

    def test_gap_trend_nonincreasing_late(self):
        team = two_car_swap(K=50)
        res = run(team, small_opts(iterations=20, L=2))
        per_iter = {}
        for row in res.gap_log:
            per_iter.setdefault(row["iteration"], 0.0)
            per_iter[row["iteration"]] += row["state_gap"] ** 2
        seq = np.sqrt([per_iter[n] for n in sorted(per_iter)])
        last = seq[-10:]
        med = np.median(last)
        assert last[-1] <= med * 1.5  # median-filtered non-increase

    def test_determinism_and_parallel_equivalence(self):
        team = two_car_swap(K=40)
        r1 = run(team, small_opts(iterations=6))
        r2 = run(team, small_opts(iterations=6))
        with ThreadPoolExecutor(max_workers=2) as pool:
            r3 = run(team, small_opts(iterations=6),
                     mapper=lambda fn, items: list(pool.map(fn, items)))
        for a, b, c in zip(r1.trajectories, r2.trajectories, r3.trajectories):
            assert np.array_equal(a.states, b.states)
            assert np.array_equal(a.states, c.states)

    def test_message_counts_and_edges(self):
        team = two_car_swap(K=30)
        res = run(team, small_opts(iterations=4))
        counts = res.mailbox.counts_by_phase()
        g = team.graph
        assert counts[(0, "warmstart")] == expected_phase_count(g, Phase.WARMSTART)
        for n in range(1, 5):
            assert counts[(n, "copies_to_owner")] == expected_phase_count(
                g, Phase.COPIES_TO_OWNER)
            assert counts[(n, "globals_to_neighbors")] == expected_phase_count(
                g, Phase.GLOBALS_TO_NEIGHBORS)
        assert all(g.is_edge(r.sender, r.receiver) for r in res.mailbox.log)
