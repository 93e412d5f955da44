"""Multi-agent problem container shared by all solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import (BoxConstraint, ObstacleConstraint,
                          PairDistanceConstraint)
from .network import NeighborhoodGraph
from .problem import Dynamics, QuadraticGoalCost


@dataclass
class AgentSpec:
    """One agent's model, quadratic cost and local constraint blocks."""

    model: Dynamics
    cost: QuadraticGoalCost
    start: np.ndarray
    goal: np.ndarray
    control_blocks: list = field(default_factory=list)  # rows on u
    state_blocks: list = field(default_factory=list)    # rows on x

    @property
    def p(self) -> int:
        return self.model.state_dim

    @property
    def q(self) -> int:
        return self.model.control_dim

    @property
    def q_diag(self) -> np.ndarray:
        return np.diag(self.cost.Q).copy()

    @property
    def r_diag(self) -> np.ndarray:
        return np.diag(self.cost.R).copy()


@dataclass
class TeamProblem:
    """Agents, their interaction graph and the inter-agent constraint
    parameters applied along every graph edge."""

    agents: list
    graph: NeighborhoodGraph
    horizon: int
    dt: float
    pos_dim: int
    collision: float | None = None
    connectivity: float | None = None

    def __post_init__(self):
        if len(self.agents) != self.graph.size:
            raise ValueError("agent count does not match graph size")
        if (self.collision is not None and self.connectivity is not None
                and self.collision >= self.connectivity):
            raise ValueError("collision distance must be below connectivity distance")

    @property
    def size(self) -> int:
        return len(self.agents)


def block_offsets(dims):
    """Slices for stacking blocks of the given sizes."""
    out = []
    off = 0
    for d in dims:
        out.append(slice(off, off + d))
        off += d
    return out, off


def member_layout(team: TeamProblem, owner: int):
    """Canonical augmented layout for an owner's neighborhood: member ids
    (self first, ascending), state slices, control slices, total dims."""
    members = list(team.graph.neighbors[owner])
    sx, ptot = block_offsets([team.agents[j].p for j in members])
    su, qtot = block_offsets([team.agents[j].q for j in members])
    return members, dict(zip(members, sx)), dict(zip(members, su)), ptot, qtot


def shift_block(blk, x_off: int, u_off: int):
    """Re-home a single-agent constraint block inside a stacked space."""
    if isinstance(blk, BoxConstraint):
        n = blk.lower.size
        base = blk.indices if blk.indices is not None else np.arange(n)
        off = x_off if blk.target == "state" else u_off
        return BoxConstraint(blk.lower, blk.upper, target=blk.target,
                             indices=base + off, transform=blk.transform,
                             window=blk.window)
    if isinstance(blk, ObstacleConstraint):
        s = blk.pos_slice
        return ObstacleConstraint(blk.center, blk.radius, blk.clearance,
                                  pos_slice=slice(s.start + x_off, s.stop + x_off),
                                  window=blk.window)
    if isinstance(blk, PairDistanceConstraint):
        si, sj = blk.slice_i, blk.slice_j
        return PairDistanceConstraint(
            blk.kind, blk.threshold,
            slice(si.start + x_off, si.stop + x_off),
            slice(sj.start + x_off, sj.stop + x_off), window=blk.window)
    raise TypeError(f"cannot shift constraint block of type {type(blk)!r}")


def pair_blocks(team: TeamProblem, owner: int, state_slices: dict):
    """Collision / connectivity rows between the owner's block and each
    neighbor copy block, in neighbor id order."""
    out = []
    own = state_slices[owner]
    own_pos = slice(own.start, own.start + team.pos_dim)
    for j in team.graph.neighbors[owner]:
        if j == owner:
            continue
        s = state_slices[j]
        jpos = slice(s.start, s.start + team.pos_dim)
        if team.collision is not None:
            out.append(PairDistanceConstraint("collision", team.collision,
                                              own_pos, jpos))
        if team.connectivity is not None:
            out.append(PairDistanceConstraint("connectivity", team.connectivity,
                                              own_pos, jpos))
    return out
