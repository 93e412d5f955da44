"""Centralized constrained baseline: the whole team stacked into one
problem and solved with the penalty-multiplier DDP wrapper."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alcon import AlSettings, solve_constrained
from .constraints import PairDistanceConstraint
from .problem import (BlockCost, BlockDynamics, ControlLaw, DdpSettings,
                      SumCost, Trajectory, rollout)
from .team import TeamProblem, block_offsets, shift_block


@dataclass
class CentralResult:
    trajectories: list
    laws: list
    cost: float
    violation: float
    outer_iterations: int


def assemble_central(team: TeamProblem):
    """Stack every agent into one block system with all local rows and
    one distance row per (unordered) constrained pair."""
    sx, pt = block_offsets([a.p for a in team.agents])
    su, qt = block_offsets([a.q for a in team.agents])
    dyn = BlockDynamics([a.model for a in team.agents])
    cost = SumCost([BlockCost(a.cost, sx[i], su[i], pt, qt)
                    for i, a in enumerate(team.agents)])
    blocks = []
    for i, a in enumerate(team.agents):
        for blk in a.control_blocks:
            blocks.append(shift_block(blk, sx[i].start, su[i].start))
        for blk in a.state_blocks:
            blocks.append(shift_block(blk, sx[i].start, su[i].start))
    pairs = sorted({(min(i, j), max(i, j))
                    for i in range(team.size)
                    for j in team.graph.neighbors[i] if j != i})
    pd = team.pos_dim
    for i, j in pairs:
        pi = slice(sx[i].start, sx[i].start + pd)
        pj = slice(sx[j].start, sx[j].start + pd)
        if team.collision is not None:
            blocks.append(PairDistanceConstraint("collision", team.collision,
                                                 pi, pj))
        if team.connectivity is not None:
            blocks.append(PairDistanceConstraint("connectivity",
                                                 team.connectivity, pi, pj))
    start = np.concatenate([a.start for a in team.agents])
    return dyn, cost, blocks, start, sx, su


def run(team: TeamProblem, ddp_settings: DdpSettings | None = None,
        al_settings: AlSettings | None = None) -> CentralResult:
    dyn, cost, blocks, start, sx, su = assemble_central(team)
    initial = rollout(dyn, start, np.zeros((team.horizon, dyn.control_dim)),
                      team.dt)
    res = solve_constrained(initial, cost, dyn, blocks,
                            ddp_settings or DdpSettings(),
                            al_settings or AlSettings())
    trajectories = []
    laws = []
    for i in range(team.size):
        trajectories.append(Trajectory(res.trajectory.states[:, sx[i]].copy(),
                                       res.trajectory.controls[:, su[i]].copy(),
                                       team.dt))
        # per-agent execution uses the diagonal feedback block
        laws.append(ControlLaw(res.law.feedforward[:, su[i]].copy(),
                               res.law.feedback[:, su[i], sx[i]].copy(),
                               res.law.d1, res.law.d2))
    return CentralResult(trajectories, laws, res.cost, res.violation,
                         res.outer_iterations)
