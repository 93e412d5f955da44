"""Two-level consensus solver: per-agent DDP against proximal targets,
per-timestep safety projections onto linearized constraint sets, global
averaging and dual ascent, with optional momentum extrapolation and
decentralized penalty adaptation.

Per iteration, in order: reference-trajectory share (for linearization,
previous iterate's local solutions), local DDP (Step 1), safety
projections (Step 2), copies-to-owner exchange, global update (Step 3),
globals-to-neighbors exchange, dual updates, momentum advance, optional
adaptation. All cross-agent data moves through the mailbox.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ddp
from .constraints import BoxConstraint, ObstacleConstraint, tangent_directions
from .network import Mailbox, Phase
from .penalties import (AdaptationSettings, NesterovState, PenaltyMatrices,
                        PenaltySettings, ResidualReport, extrapolate,
                        md_penalties, total_residual_norms)
from .problem import DdpSettings, SumCost, TrackingProxCost, Trajectory, rollout
from .qp import solve_diag_qp
from .team import TeamProblem, member_layout

_DEGENERATE = 1e-9


@dataclass
class MdOptions:
    iterations: int = 200
    ddp: DdpSettings = field(default_factory=lambda: DdpSettings(max_iterations=8))
    penalties: PenaltySettings = field(default_factory=PenaltySettings)
    nesterov_eta: float = 0.0
    nesterov_restart: bool = False
    adaptation: AdaptationSettings = field(default_factory=AdaptationSettings)
    stop_mode: str = "iterations"          # "iterations" | "thresholds"
    eps_pri: tuple = (5.0, 10.0, 10.0)
    eps_dual: tuple = (50.0, 1e3, 1e3)
    tangents_2d: int = 8

    def __post_init__(self):
        if self.stop_mode not in ("iterations", "thresholds"):
            raise ValueError("stop_mode must be 'iterations' or 'thresholds'")


@dataclass
class MdResult:
    trajectories: list
    laws: list
    reports: list              # per iteration: list of ResidualReport per agent
    scale_log: list            # per iteration: (M, 3) penalty scale factors
    iterations: int
    stopped_early: bool
    flagged: list              # (iteration, agent, timestep) relaxed projections
    mailbox: Mailbox

    def residual_rows(self):
        """Flat log rows: iteration, agent, six norms, three scale factors."""
        rows = []
        for n, (reps, scales) in enumerate(zip(self.reports, self.scale_log), 1):
            for i, rep in enumerate(reps):
                rows.append({"iteration": n, "agent": i,
                             "pri_control": rep.pri[0], "pri_state": rep.pri[1],
                             "pri_consensus": rep.pri[2],
                             "dual_control": rep.dual[0], "dual_state": rep.dual[1],
                             "dual_consensus": rep.dual[2],
                             "a_control": scales[i][0], "a_state": scales[i][1],
                             "a_consensus": scales[i][2]})
        return rows


class _Agent:
    """Mutable per-agent solver state (owned by the orchestrator)."""

    def __init__(self, team: TeamProblem, i: int, opts: MdOptions):
        self.i = i
        spec = team.agents[i]
        self.spec = spec
        self.members, self.sx, self.su, self.pt, self.qt = member_layout(team, i)
        self.own = self.sx[i]
        self.pen = md_penalties(spec, [team.agents[j].q_diag for j in self.members],
                                opts.penalties)
        K = team.horizon
        self.x = np.zeros((K + 1, spec.p))
        self.u = np.zeros((K, spec.q))
        self.law = None
        self.xta = np.zeros((K + 1, self.pt))
        self.ut = np.zeros((K, spec.q))
        self.xi = np.zeros((K, spec.q))
        self.lam = np.zeros((K + 1, spec.p))
        self.y = np.zeros((K + 1, self.pt))
        self.z = np.zeros((K + 1, spec.p))
        self.z_prev = np.zeros((K + 1, spec.p))
        self.za = np.zeros((K + 1, self.pt))
        self.za_bar = np.zeros((K + 1, self.pt))
        self.refs = {}
        self.bars = {}
        self.ut_prev = None
        self.xta_prev = None
        self.za_prev = None

    @property
    def xt(self):
        return self.xta[:, self.own]

    def init_bars(self):
        self.bars = {"xta": self.xta.copy(), "ut": self.ut.copy(),
                     "xi": self.xi.copy(), "lam": self.lam.copy(),
                     "y": self.y.copy()}
        self.za_bar = self.za.copy()


def _warmstart(team, i, opts):
    spec = team.agents[i]
    initial = rollout(spec.model, spec.start,
                      np.zeros((team.horizon, spec.q)), team.dt)
    res = ddp.solve(initial, spec.cost, spec.model, opts.ddp)
    return res


def _step1(team, st: _Agent, opts):
    spec = st.spec
    prox = TrackingProxCost(
        state_weights=st.pen.p,
        state_refs=st.bars["xta"][:, st.own] - st.bars["lam"] / st.pen.p,
        control_weights=st.pen.t,
        control_refs=st.bars["ut"] - st.bars["xi"] / st.pen.t)
    cost = SumCost([spec.cost, prox])
    res = ddp.solve(Trajectory(st.x, st.u, team.dt), cost, spec.model, opts.ddp)
    return res


def _control_projection(st: _Agent, opts):
    """Clamp (plain boxes) or tiny QPs (transformed boxes) on u + xi/T."""
    tgt = st.u + st.bars["xi"] / st.pen.t
    ut = tgt.copy()
    flagged = []
    K, q = ut.shape
    plain = [b for b in st.spec.control_blocks if b.transform is None]
    transformed = [b for b in st.spec.control_blocks if b.transform is not None]
    for box in plain:
        idx = box.indices if box.indices is not None else np.arange(box.lower.size)
        ks = np.arange(K)
        act = (ks >= box.window[0]) & (ks <= box.window[1])
        ut[np.ix_(act, idx)] = np.clip(ut[np.ix_(act, idx)], box.lower, box.upper)
    if transformed:
        rows = [b.linear_rows(q, q) for b in transformed
                if b.window[0] <= 0]  # control windows cover the horizon here
        A = np.vstack([r[0] for r in rows])
        bvec = np.concatenate([r[1] for r in rows])
        viol = np.max(ut @ A.T - bvec, axis=1) > 1e-12
        for k in np.nonzero(viol)[0]:
            v, clean = solve_diag_qp(st.pen.t, tgt[k], A, bvec)
            ut[k] = v
            if not clean:
                flagged.append(int(k))
        if len(transformed) == 1:
            # exact box satisfaction in the transformed coordinates
            box = transformed[0]
            wvals = ut @ box.transform.T
            wvals = np.clip(wvals, box.lower, box.upper)
            ut = wvals @ np.linalg.inv(box.transform).T
    return ut, flagged


def _state_projection(team, st: _Agent, opts):
    """Per-timestep QPs on the augmented safe copy; vectorized fast path
    for timesteps whose unconstrained minimizer is already feasible."""
    K = team.horizon
    pd = team.pos_dim
    own = st.own
    weights = st.pen.m.copy()
    weights[own] += st.pen.p
    tgt = st.za_bar * st.pen.m - st.bars["y"]
    tgt[:, own] += st.pen.p * st.x + st.bars["lam"]
    tgt /= weights

    own_pos = slice(own.start, own.start + pd)
    boxes = [b for b in st.spec.state_blocks if isinstance(b, BoxConstraint)]
    obstacles = [b for b in st.spec.state_blocks if isinstance(b, ObstacleConstraint)]
    neighbors = [j for j in st.members if j != st.i]

    # linearization normals from the shared reference trajectories
    ref_own = st.refs[st.i][:, :pd]
    obs_normals = []
    for obs in obstacles:
        diff = ref_own - obs.center
        nrm = np.linalg.norm(diff, axis=1)
        bad = nrm < _DEGENERATE
        if np.any(bad):
            diff[bad] = np.eye(pd)[0]
            nrm[bad] = 1.0
        obs_normals.append(diff / nrm[:, None])
    pair_normals = {}
    for j in neighbors:
        diff = ref_own - st.refs[j][:, :pd]
        nrm = np.linalg.norm(diff, axis=1)
        bad = nrm < _DEGENERATE
        if np.any(bad):
            diff[bad] = np.eye(pd)[0]
            nrm[bad] = 1.0
        pair_normals[j] = diff / nrm[:, None]

    # vectorized feasibility of the unconstrained minimizer
    viol = np.zeros(K + 1, dtype=bool)
    for box in boxes:
        vals = box.values_along(tgt[:, own], np.zeros((K, st.spec.q)))
        viol |= np.any(vals > 1e-12, axis=1)
    for obs, normals in zip(obstacles, obs_normals):
        ks = np.arange(K + 1)
        act = (ks >= obs.window[0]) & (ks <= obs.window[1])
        resid = obs.keepout - np.einsum("kd,kd->k", normals,
                                        tgt[:, own_pos] - obs.center)
        viol |= act & (resid > 1e-12)
    tangents = {}
    for j in neighbors:
        jpos = slice(st.sx[j].start, st.sx[j].start + pd)
        dtgt = tgt[:, own_pos] - tgt[:, jpos]
        if team.collision is not None:
            resid = team.collision - np.einsum("kd,kd->k", pair_normals[j], dtgt)
            viol |= resid > 1e-12
        if team.connectivity is not None:
            if pd == 2:
                base = np.arctan2(pair_normals[j][:, 1], pair_normals[j][:, 0])
                ang = base[:, None] + 2 * np.pi * np.arange(opts.tangents_2d) / opts.tangents_2d
                fans = np.stack([np.cos(ang), np.sin(ang)], axis=2)
            else:
                fans = np.stack([tangent_directions(n) for n in pair_normals[j]])
            tangents[j] = fans
            resid = np.einsum("ktd,kd->kt", fans, dtgt) - team.connectivity
            viol |= np.any(resid > 1e-12, axis=1)

    xta = tgt.copy()
    flagged = []
    for k in np.nonzero(viol)[0]:
        rows_a, rows_b = [], []
        for box in boxes:
            if box.window[0] <= k <= box.window[1]:
                a, b = box.linear_rows(st.spec.p, st.pt, own.start)
                rows_a.append(a)
                rows_b.append(b)
        for obs, normals in zip(obstacles, obs_normals):
            if obs.window[0] <= k <= obs.window[1]:
                a = np.zeros((1, st.pt))
                a[0, own_pos] = -normals[k]
                rows_a.append(a)
                rows_b.append(np.array([-(obs.keepout + normals[k] @ obs.center)]))
        for j in neighbors:
            jpos = slice(st.sx[j].start, st.sx[j].start + pd)
            if team.collision is not None:
                a = np.zeros((1, st.pt))
                a[0, own_pos] = -pair_normals[j][k]
                a[0, jpos] = pair_normals[j][k]
                rows_a.append(a)
                rows_b.append(np.array([-team.collision]))
            if team.connectivity is not None:
                fans = tangents[j][k]
                a = np.zeros((fans.shape[0], st.pt))
                a[:, own_pos] = fans
                a[:, jpos] = -fans
                rows_a.append(a)
                rows_b.append(np.full(fans.shape[0], team.connectivity))
        A = np.vstack(rows_a)
        bvec = np.concatenate(rows_b)
        v, clean = solve_diag_qp(weights, tgt[k], A, bvec)
        xta[k] = v
        if not clean:
            flagged.append(int(k))

    # exact box satisfaction on the own block
    for box in boxes:
        if box.transform is not None:
            continue
        idx = (box.indices if box.indices is not None
               else np.arange(box.lower.size)) + own.start
        ks = np.arange(K + 1)
        act = (ks >= box.window[0]) & (ks <= box.window[1])
        xta[np.ix_(act, idx)] = np.clip(xta[np.ix_(act, idx)], box.lower, box.upper)
    return xta, flagged


def run(team: TeamProblem, opts: MdOptions | None = None, mapper=None,
        mailbox: Mailbox | None = None) -> MdResult:
    """Execute the merged consensus algorithm for the configured number
    of iterations (or until the residual thresholds fire)."""
    opts = opts or MdOptions()
    mapper = mapper or (lambda fn, items: [fn(it) for it in items])
    mailbox = mailbox or Mailbox(team.graph)
    M = team.size
    K = team.horizon
    momentum = NesterovState(opts.nesterov_eta)

    agents = [_Agent(team, i, opts) for i in range(M)]

    # warmstart: unconstrained single-agent solves, then share states
    mailbox.set_iteration(0)
    warm = mapper(lambda i: _warmstart(team, i, opts), list(range(M)))
    for i, res in enumerate(warm):
        st = agents[i]
        st.x = res.trajectory.states.copy()
        st.u = res.trajectory.controls.copy()
        st.law = res.law
    outgoing = {j: {i: {"x": agents[j].x}
                    for i in team.graph.neighbor_of[j] if i != j}
                for j in range(M)}
    inbound = mailbox.exchange(Phase.WARMSTART, "trajectory", outgoing,
                               expected_senders={i: agents[i].members
                                                 for i in range(M)})
    for i in range(M):
        st = agents[i]
        st.refs = {i: st.x.copy()}
        for j, payload in inbound[i]:
            st.refs[j] = payload["x"]
        for j in st.members:
            st.xta[:, st.sx[j]] = st.refs[j]
        st.ut = st.u.copy()
        st.z = st.x.copy()
        st.z_prev = st.z.copy()
        st.za = st.xta.copy()
        st.ut_prev = st.ut.copy()
        st.xta_prev = st.xta.copy()
        st.za_prev = st.za.copy()
        st.init_bars()

    reports_log = []
    scale_log = []
    flagged = []
    total_pri_hist = []
    stopped_early = False
    iterations_done = 0

    for n in range(1, opts.iterations + 1):
        mailbox.set_iteration(n)

        # Step 1: local DDP against the proximal targets
        step1 = mapper(lambda i: _step1(team, agents[i], opts), list(range(M)))
        for i, res in enumerate(step1):
            agents[i].x = res.trajectory.states.copy()
            agents[i].u = res.trajectory.controls.copy()
            agents[i].law = res.law

        # reference share between the local solves and the projections, so
        # the constraint linearizations use this iteration's solutions
        outgoing = {j: {i: {"x": agents[j].x}
                        for i in team.graph.neighbor_of[j] if i != j}
                    for j in range(M)}
        inbound = mailbox.exchange(Phase.REFERENCE_SHARE, "trajectory", outgoing,
                                   expected_senders={i: agents[i].members
                                                     for i in range(M)})
        for i in range(M):
            agents[i].refs = {i: agents[i].x.copy()}
            for j, payload in inbound[i]:
                agents[i].refs[j] = payload["x"]

        # Step 2: safety projections
        for st in agents:
            st.ut_prev = st.ut.copy()
            st.xta_prev = st.xta.copy()
            st.za_prev = st.za.copy()

        def _project(i):
            ut, f1 = _control_projection(agents[i], opts)
            xta, f2 = _state_projection(team, agents[i], opts)
            return ut, xta, f1 + f2

        step2 = mapper(_project, list(range(M)))
        for i, (ut, xta, flags) in enumerate(step2):
            agents[i].ut = ut
            agents[i].xta = xta
            flagged.extend((n, i, k) for k in flags)

        # copies-to-owner: each holder sends its copy of the owner block
        outgoing = {}
        for j in range(M):
            st = agents[j]
            outgoing[j] = {}
            for i in st.members:
                if i == j:
                    continue
                sl = st.sx[i]
                outgoing[j][i] = {"copy": st.xta[:, sl],
                                  "dual": st.bars["y"][:, sl],
                                  "weight": st.pen.m[sl]}
        inbound = mailbox.exchange(Phase.COPIES_TO_OWNER, "copy", outgoing,
                                   expected_senders={
                                       i: team.graph.neighbor_of[i]
                                       for i in range(M)})

        # Step 3: global update of each agent's own block
        for i in range(M):
            st = agents[i]
            st.z_prev = st.z.copy()
            copies = [(i, st.xta[:, st.own], st.bars["y"][:, st.own],
                       st.pen.m[st.own])]
            for j, payload in inbound[i]:
                copies.append((j, payload["copy"], payload["dual"],
                               payload["weight"]))
            st.z = combine_copies(copies, opts.penalties.mode)

        gamma = momentum.advance()

        # globals-to-neighbors: current and previous own globals
        outgoing = {j: {i: {"z": agents[j].z, "z_prev": agents[j].z_prev}
                        for i in team.graph.neighbor_of[j] if i != j}
                    for j in range(M)}
        inbound = mailbox.exchange(Phase.GLOBALS_TO_NEIGHBORS, "global", outgoing,
                                   expected_senders={i: agents[i].members
                                                     for i in range(M)})
        for i in range(M):
            st = agents[i]
            zs = {i: (st.z, st.z_prev)}
            for j, payload in inbound[i]:
                zs[j] = (payload["z"], payload["z_prev"])
            for j in st.members:
                znew, zold = zs[j]
                st.za[:, st.sx[j]] = znew
                st.za_bar[:, st.sx[j]] = extrapolate(znew, zold, gamma)

        # dual ascent from the extrapolated duals
        for st in agents:
            xi_old, lam_old, y_old = st.xi, st.lam, st.y
            st.xi = st.bars["xi"] + st.pen.t * (st.u - st.ut)
            st.lam = st.bars["lam"] + st.pen.p * (st.x - st.xt)
            st.y = st.bars["y"] + st.pen.m * (st.xta - st.za)
            st.bars["xta"] = extrapolate(st.xta, st.xta_prev, gamma)
            st.bars["ut"] = extrapolate(st.ut, st.ut_prev, gamma)
            st.bars["xi"] = extrapolate(st.xi, xi_old, gamma)
            st.bars["lam"] = extrapolate(st.lam, lam_old, gamma)
            st.bars["y"] = extrapolate(st.y, y_old, gamma)

        reports = [compute_residuals(st) for st in agents]
        reports_log.append(reports)

        if opts.adaptation.enabled and n % opts.adaptation.every == 0:
            for st, rep in zip(agents, reports):
                st.pen = st.pen.adapted(rep.pri, rep.dual, opts.adaptation)
        scale_log.append([st.pen.a.copy() for st in agents])

        iterations_done = n
        pri_tot, dual_tot = total_residual_norms(reports)
        total_pri_hist.append(float(np.linalg.norm(pri_tot)))
        if opts.nesterov_restart and len(total_pri_hist) > 5:
            if total_pri_hist[-1] > 10.0 * total_pri_hist[-6]:
                momentum.reset()
                for st in agents:
                    st.bars = {"xta": st.xta.copy(), "ut": st.ut.copy(),
                               "xi": st.xi.copy(), "lam": st.lam.copy(),
                               "y": st.y.copy()}
                    st.za_bar = st.za.copy()
        if opts.stop_mode == "thresholds":
            if (np.all(pri_tot <= np.asarray(opts.eps_pri))
                    and np.all(dual_tot <= np.asarray(opts.eps_dual))):
                stopped_early = True
                break

    return MdResult(
        trajectories=[Trajectory(st.x.copy(), st.u.copy(), team.dt)
                      for st in agents],
        laws=[st.law for st in agents],
        reports=reports_log,
        scale_log=scale_log,
        iterations=iterations_done,
        stopped_early=stopped_early,
        flagged=flagged,
        mailbox=mailbox,
    )


def combine_copies(copies, mode: str) -> np.ndarray:
    """Global update from all copies of one agent's block.

    Uniform mode keeps the printed dual correction terms (their sum
    telescopes to zero after the first update); matrix mode uses the
    penalty-weighted average without dual terms.
    """
    if mode == "scalar":
        acc = None
        for _, copy_traj, dual, weight in copies:
            term = copy_traj + dual / weight
            acc = term if acc is None else acc + term
        return acc / len(copies)
    wsum = None
    acc = None
    for _, copy_traj, _, weight in copies:
        term = copy_traj * weight
        acc = term if acc is None else acc + term
        wsum = weight.copy() if wsum is None else wsum + weight
    return acc / wsum


def compute_residuals(st: _Agent) -> ResidualReport:
    """The six per-agent residual norms from consecutive iterates."""
    r1p = np.linalg.norm(st.u - st.ut)
    r1d = np.linalg.norm(st.pen.t * (st.ut - st.ut_prev))
    r2p = np.linalg.norm(st.x - st.xt)
    r2d = np.linalg.norm(st.pen.p * (st.xta[:, st.own] - st.xta_prev[:, st.own]))
    r3p = np.linalg.norm(st.xta - st.za)
    r3d = np.linalg.norm(st.pen.m * (st.za - st.za_prev))
    return ResidualReport(np.array([r1p, r2p, r3p]), np.array([r1d, r2d, r3d]))
