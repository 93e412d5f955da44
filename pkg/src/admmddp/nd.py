"""Three-level consensus solver: each agent optimizes an augmented copy
of its whole neighborhood with a constrained (penalty-multiplier) DDP
solve, then neighborhood copies are averaged into global variables and
dual ascent enforces consensus.

Per iteration: local constrained solves on the augmented subproblems,
copies-to-owner exchange, global averaging, globals-to-neighbors
exchange, dual update. Termination is a fixed iteration budget; gap
norms are logged for offline analysis rather than used for stopping,
which would need global information.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ddp
from .alcon import AlSettings, solve_constrained
from .constraints import eval_stack
from .md import combine_copies
from .network import Mailbox, Phase
from .penalties import (AdaptationSettings, PenaltySettings, adapt_scale,
                        nd_penalties)
from .problem import (BlockCost, BlockDynamics, ControlLaw, DdpSettings,
                      SumCost, TrackingProxCost, Trajectory, rollout)
from .team import TeamProblem, member_layout, pair_blocks, shift_block


@dataclass
class NdOptions:
    iterations: int = 50
    ddp: DdpSettings = field(default_factory=lambda: DdpSettings(max_iterations=8))
    al: AlSettings = field(default_factory=lambda: AlSettings(outer_iterations=2))
    penalties: PenaltySettings = field(default_factory=PenaltySettings)
    adaptation: AdaptationSettings = field(default_factory=AdaptationSettings)


@dataclass
class NdResult:
    trajectories: list          # own-block trajectories per agent
    laws: list                  # own-block control laws per agent
    gap_log: list               # per iteration per agent dict rows
    iterations: int
    mailbox: Mailbox

    def residual_rows(self):
        return self.gap_log


@dataclass
class AugmentedProblem:
    """One agent's neighborhood subproblem: block dynamics over the
    members, their goal costs weighted by 1/|P_j|, and every member's
    local constraint rows plus the owner's inter-agent rows."""

    owner: int
    members: list
    state_slices: dict
    control_slices: dict
    dynamics: BlockDynamics
    base_cost: SumCost
    blocks: list
    start: np.ndarray
    p_total: int
    q_total: int


def assemble_augmented(team: TeamProblem, owner: int) -> AugmentedProblem:
    members, sx, su, pt, qt = member_layout(team, owner)
    dyn = BlockDynamics([team.agents[j].model for j in members])
    parts = []
    for j in members:
        weight = 1.0 / len(team.graph.neighbor_of[j])
        parts.append(BlockCost(team.agents[j].cost, sx[j], su[j], pt, qt, weight))
    blocks = []
    for j in members:
        for blk in team.agents[j].control_blocks:
            blocks.append(shift_block(blk, sx[j].start, su[j].start))
        for blk in team.agents[j].state_blocks:
            blocks.append(shift_block(blk, sx[j].start, su[j].start))
    blocks.extend(pair_blocks(team, owner, sx))
    start = np.concatenate([team.agents[j].start for j in members])
    return AugmentedProblem(owner, members, sx, su, dyn, SumCost(parts),
                            blocks, start, pt, qt)


class _Agent:
    def __init__(self, team: TeamProblem, i: int, opts: NdOptions):
        self.i = i
        self.prob = assemble_augmented(team, i)
        self.pen = nd_penalties(
            [team.agents[j].q_diag for j in self.prob.members],
            [team.agents[j].r_diag for j in self.prob.members], opts.penalties)
        K = team.horizon
        pt, qt = self.prob.p_total, self.prob.q_total
        self.xa = np.zeros((K + 1, pt))
        self.ua = np.zeros((K, qt))
        self.law = None
        self.za = np.zeros((K + 1, pt))
        self.wa = np.zeros((K, qt))
        self.za_prev = np.zeros((K + 1, pt))
        self.wa_prev = np.zeros((K, qt))
        self.lam = np.zeros((K + 1, pt))
        self.y = np.zeros((K, qt))
        self.al_state = None

    @property
    def own_x(self):
        return self.prob.state_slices[self.i]

    @property
    def own_u(self):
        return self.prob.control_slices[self.i]


def local_step(team, st: _Agent, opts: NdOptions):
    """Constrained solve of the augmented subproblem with the consensus
    proximal terms folded into the cost."""
    prox = TrackingProxCost(
        state_weights=st.pen.p, state_refs=st.za - st.lam / st.pen.p,
        control_weights=st.pen.m, control_refs=st.wa - st.y / st.pen.m)
    cost = SumCost([st.prob.base_cost, prox])
    initial = Trajectory(st.xa, st.ua, team.dt)
    return solve_constrained(initial, cost, st.prob.dynamics, st.prob.blocks,
                             opts.ddp, opts.al, st.al_state)


def max_violation(st: _Agent) -> float:
    vals = np.concatenate([
        blk.values_along(st.xa, st.ua) for blk in st.prob.blocks], axis=1) \
        if st.prob.blocks else np.zeros((1, 1))
    return float(np.max(np.maximum(vals, 0.0)))


def run(team: TeamProblem, opts: NdOptions | None = None, mapper=None,
        mailbox: Mailbox | None = None) -> NdResult:
    opts = opts or NdOptions()
    mapper = mapper or (lambda fn, items: [fn(it) for it in items])
    mailbox = mailbox or Mailbox(team.graph)
    M = team.size
    agents = [_Agent(team, i, opts) for i in range(M)]

    # warmstart: single-agent unconstrained solves, shared to neighbors
    mailbox.set_iteration(0)

    def _single(i):
        spec = team.agents[i]
        initial = rollout(spec.model, spec.start,
                          np.zeros((team.horizon, spec.q)), team.dt)
        return ddp.solve(initial, spec.cost, spec.model, opts.ddp)

    warm = mapper(_single, list(range(M)))
    outgoing = {j: {i: {"x": warm[j].trajectory.states,
                        "u": warm[j].trajectory.controls}
                    for i in team.graph.neighbor_of[j] if i != j}
                for j in range(M)}
    inbound = mailbox.exchange(Phase.WARMSTART, "trajectory", outgoing,
                               expected_senders={i: agents[i].prob.members
                                                 for i in range(M)})
    for i in range(M):
        st = agents[i]
        shared = {i: (warm[i].trajectory.states, warm[i].trajectory.controls)}
        for j, payload in inbound[i]:
            shared[j] = (payload["x"], payload["u"])
        for j in st.prob.members:
            st.xa[:, st.prob.state_slices[j]] = shared[j][0]
            st.ua[:, st.prob.control_slices[j]] = shared[j][1]
        st.za = st.xa.copy()
        st.wa = st.ua.copy()
        st.za_prev = st.za.copy()
        st.wa_prev = st.wa.copy()

    gap_log = []
    for n in range(1, opts.iterations + 1):
        mailbox.set_iteration(n)

        results = mapper(lambda i: local_step(team, agents[i], opts),
                         list(range(M)))
        for i, res in enumerate(results):
            agents[i].xa = res.trajectory.states.copy()
            agents[i].ua = res.trajectory.controls.copy()
            agents[i].law = res.law
            agents[i].al_state = res.al_state

        # copies-to-owner: each holder j sends its copy of owner i's block
        outgoing = {}
        for j in range(M):
            st = agents[j]
            outgoing[j] = {}
            for i in st.prob.members:
                if i == j:
                    continue
                sxi, sui = st.prob.state_slices[i], st.prob.control_slices[i]
                outgoing[j][i] = {"x_copy": st.xa[:, sxi],
                                  "u_copy": st.ua[:, sui],
                                  "x_dual": st.lam[:, sxi],
                                  "u_dual": st.y[:, sui],
                                  "x_weight": st.pen.p[sxi],
                                  "u_weight": st.pen.m[sui]}
        inbound = mailbox.exchange(Phase.COPIES_TO_OWNER, "copy", outgoing,
                                   expected_senders={
                                       i: team.graph.neighbor_of[i]
                                       for i in range(M)})

        # global averaging of every copy referring to agent i
        z_new, w_new = {}, {}
        for i in range(M):
            st = agents[i]
            xc = [(i, st.xa[:, st.own_x], st.lam[:, st.own_x],
                   st.pen.p[st.own_x])]
            uc = [(i, st.ua[:, st.own_u], st.y[:, st.own_u],
                   st.pen.m[st.own_u])]
            for j, payload in inbound[i]:
                xc.append((j, payload["x_copy"], payload["x_dual"],
                           payload["x_weight"]))
                uc.append((j, payload["u_copy"], payload["u_dual"],
                           payload["u_weight"]))
            z_new[i] = combine_copies(xc, opts.penalties.mode)
            w_new[i] = combine_copies(uc, opts.penalties.mode)

        outgoing = {j: {i: {"z": z_new[j], "w": w_new[j]}
                        for i in team.graph.neighbor_of[j] if i != j}
                    for j in range(M)}
        inbound = mailbox.exchange(Phase.GLOBALS_TO_NEIGHBORS, "global", outgoing,
                                   expected_senders={i: agents[i].prob.members
                                                     for i in range(M)})
        for i in range(M):
            st = agents[i]
            st.za_prev = st.za.copy()
            st.wa_prev = st.wa.copy()
            zs = {i: (z_new[i], w_new[i])}
            for j, payload in inbound[i]:
                zs[j] = (payload["z"], payload["w"])
            for j in st.prob.members:
                st.za[:, st.prob.state_slices[j]] = zs[j][0]
                st.wa[:, st.prob.control_slices[j]] = zs[j][1]

        # dual ascent
        for st in agents:
            st.lam = st.lam + st.pen.p * (st.xa - st.za)
            st.y = st.y + st.pen.m * (st.ua - st.wa)

        for i, st in enumerate(agents):
            gap_log.append({
                "iteration": n, "agent": i,
                "state_gap": float(np.linalg.norm(st.xa - st.za)),
                "control_gap": float(np.linalg.norm(st.ua - st.wa)),
                "max_violation": max_violation(st),
                "a_state": float(st.pen.a[1]), "a_control": float(st.pen.a[2]),
            })

        if opts.adaptation.enabled and n % opts.adaptation.every == 0:
            for st in agents:
                # consensus blocks only: state (P role) and control (M role),
                # both judged with the global-consensus thresholds
                pri_x = float(np.linalg.norm(st.xa - st.za))
                dual_x = float(np.linalg.norm(st.pen.p * (st.za - st.za_prev)))
                pri_u = float(np.linalg.norm(st.ua - st.wa))
                dual_u = float(np.linalg.norm(st.pen.m * (st.wa - st.wa_prev)))
                a = st.pen.a.copy()
                a[1] = adapt_scale(a[1], pri_x, dual_x, 2, opts.adaptation)
                a[2] = adapt_scale(a[2], pri_u, dual_u, 2, opts.adaptation)
                st.pen = type(st.pen)(st.pen.t_base, st.pen.p_base,
                                      st.pen.m_base, a)

    trajectories = []
    laws = []
    for st in agents:
        sx, su = st.own_x, st.own_u
        trajectories.append(Trajectory(st.xa[:, sx].copy(),
                                       st.ua[:, su].copy(), team.dt))
        if st.law is not None:
            laws.append(ControlLaw(st.law.feedforward[:, su].copy(),
                                   st.law.feedback[:, su, sx].copy(),
                                   st.law.d1, st.law.d2))
        else:
            laws.append(None)
    return NdResult(trajectories, laws, gap_log, opts.iterations, mailbox)
