"""Augmented-Lagrangian wrapper around the DDP solver.

Inequality rows are folded into the running/terminal cost with the
standard quadratic penalty-plus-multiplier form

    P(w, beta, s) = (beta/2) max(0, s + w/beta)^2 - w^2 / (2 beta),

which vanishes exactly at w = 0 for satisfied rows and is once
continuously differentiable everywhere. Second derivatives use a
Gauss-Newton approximation (no constraint curvature) on active rows.
Used standalone as the centralized constrained baseline and inside the
consensus orchestrators' local updates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ddp
from .constraints import eval_stack, stack_rows
from .problem import Cost, CostExpansion, DdpSettings, Trajectory


@dataclass
class AlSettings:
    """Outer-loop settings: iteration budget L, exit threshold, and the
    penalty growth schedule (growth applies per violated row)."""

    outer_iterations: int = 10
    tol: float = 1e-3
    beta_init: float = 10.0
    beta_growth: float = 10.0
    beta_max: float = 1e8
    growth_tol: float = 1e-4
    reset_multipliers: bool = False

    def __post_init__(self):
        if self.beta_init <= 0 or self.beta_growth <= 1 or self.beta_max < self.beta_init:
            raise ValueError("invalid penalty schedule")


@dataclass
class AlState:
    """Per-timestep, per-row multipliers (>= 0) and penalties (> 0)."""

    multipliers: np.ndarray  # (K+1, nrows)
    penalties: np.ndarray    # (K+1, nrows)
    outer_iteration: int = 0

    @classmethod
    def fresh(cls, horizon: int, nrows: int, beta_init: float) -> "AlState":
        return cls(np.zeros((horizon + 1, nrows)),
                   np.full((horizon + 1, nrows), float(beta_init)))

    def validate(self):
        if np.any(self.multipliers < 0):
            raise ValueError("multipliers must be nonnegative")
        if np.any(self.penalties <= 0):
            raise ValueError("penalties must be positive")


class PenalizedCost(Cost):
    """Base cost plus the penalty terms of every constraint row."""

    def __init__(self, base: Cost, blocks, state: AlState):
        self.base = base
        self.blocks = list(blocks)
        self.state = state
        self._offsets = np.cumsum([0] + [b.nrows for b in self.blocks])

    def _penalty(self, s, w, beta):
        act = s + w / beta
        return float(np.sum(np.where(act > 0, 0.5 * beta * act * act, 0.0)
                            - w * w / (2 * beta)))

    def running(self, x, u, k):
        c = self.base.running(x, u, k)
        for i, blk in enumerate(self.blocks):
            sl = slice(self._offsets[i], self._offsets[i + 1])
            c += self._penalty(blk.value(x, u, k), self.state.multipliers[k, sl],
                               self.state.penalties[k, sl])
        return c

    def terminal(self, x):
        K = self.state.multipliers.shape[0] - 1
        c = self.base.terminal(x)
        for i, blk in enumerate(self.blocks):
            sl = slice(self._offsets[i], self._offsets[i + 1])
            c += self._penalty(blk.value(x, None, K), self.state.multipliers[K, sl],
                               self.state.penalties[K, sl])
        return c

    def _point_derivs(self, x, u, k):
        """(grad_x, grad_u, gn_xx, gn_xu, gn_uu) of the penalty terms."""
        p = x.shape[0]
        q = 0 if u is None else u.shape[0]
        gx, gu = np.zeros(p), np.zeros(q)
        hxx, hxu, huu = np.zeros((p, p)), np.zeros((p, q)), np.zeros((q, q))
        for i, blk in enumerate(self.blocks):
            sl = slice(self._offsets[i], self._offsets[i + 1])
            s = blk.value(x, u, k)
            w = self.state.multipliers[k, sl]
            beta = self.state.penalties[k, sl]
            act = (s + w / beta) > 0
            if not np.any(act):
                continue
            jx, ju = blk.jacobian(x, u, k)
            coef = np.where(act, beta * s + w, 0.0)
            gx += coef @ jx
            hxx += (jx * (beta * act)[:, None]).T @ jx
            if q:
                gu += coef @ ju
                hxu += (jx * (beta * act)[:, None]).T @ ju
                huu += (ju * (beta * act)[:, None]).T @ ju
        return gx, gu, hxx, hxu, huu

    def lx(self, x, u, k):
        return self.base.lx(x, u, k) + self._point_derivs(x, u, k)[0]

    def lu(self, x, u, k):
        return self.base.lu(x, u, k) + self._point_derivs(x, u, k)[1]

    def lxx(self, x, u, k):
        return self.base.lxx(x, u, k) + self._point_derivs(x, u, k)[2]

    def lxu(self, x, u, k):
        return self.base.lxu(x, u, k) + self._point_derivs(x, u, k)[3]

    def luu(self, x, u, k):
        return self.base.luu(x, u, k) + self._point_derivs(x, u, k)[4]

    def phi_x(self, x):
        K = self.state.multipliers.shape[0] - 1
        return self.base.phi_x(x) + self._point_derivs(x, None, K)[0]

    def phi_xx(self, x):
        K = self.state.multipliers.shape[0] - 1
        return self.base.phi_xx(x) + self._point_derivs(x, None, K)[2]

    def expand(self, xs, us):
        e = self.base.expand(xs, us)
        K = us.shape[0]
        for i, blk in enumerate(self.blocks):
            sl = slice(self._offsets[i], self._offsets[i + 1])
            s = blk.values_along(xs, us)          # (K+1, r)
            jx, ju = blk.jacobians_along(xs, us)  # (K+1, r, p), (K+1, r, q)
            w = self.state.multipliers[:, sl]
            beta = self.state.penalties[:, sl]
            shift = s + w / beta
            act = shift > 0
            pen = np.where(act, 0.5 * beta * shift * shift, 0.0) - w * w / (2 * beta)
            coef = np.where(act, beta * s + w, 0.0)
            gn = beta * act
            e.l += pen[:K].sum(axis=1)
            e.lx += np.einsum("kr,krp->kp", coef[:K], jx[:K])
            e.lu += np.einsum("kr,krq->kq", coef[:K], ju[:K])
            e.lxx += np.einsum("kr,krp,krs->kps", gn[:K], jx[:K], jx[:K])
            e.lxu += np.einsum("kr,krp,krq->kpq", gn[:K], jx[:K], ju[:K])
            e.luu += np.einsum("kr,krq,krs->kqs", gn[:K], ju[:K], ju[:K])
            e.phi += pen[K].sum()
            e.phix += coef[K] @ jx[K]
            e.phixx += (jx[K] * gn[K][:, None]).T @ jx[K]
        return e

    def total(self, traj):
        c = self.base.total(traj)
        K = traj.horizon
        for i, blk in enumerate(self.blocks):
            sl = slice(self._offsets[i], self._offsets[i + 1])
            s = blk.values_along(traj.states, traj.controls)
            w = self.state.multipliers[:, sl]
            beta = self.state.penalties[:, sl]
            shift = s + w / beta
            c += float(np.sum(np.where(shift > 0, 0.5 * beta * shift * shift, 0.0)
                              - w * w / (2 * beta)))
        return c


def penalized_cost(base: Cost, blocks, state: AlState) -> PenalizedCost:
    state.validate()
    return PenalizedCost(base, blocks, state)


def update_multipliers(state: AlState, achieved: np.ndarray,
                       settings: AlSettings) -> AlState:
    """Multiplier ascent w <- max(0, w + beta s); penalties grow on rows
    still violated beyond the growth tolerance."""
    w = np.maximum(0.0, state.multipliers + state.penalties * achieved)
    beta = np.where(achieved > settings.growth_tol,
                    np.minimum(state.penalties * settings.beta_growth,
                               settings.beta_max),
                    state.penalties)
    return AlState(w, beta, state.outer_iteration + 1)


def violation_norm(blocks, traj: Trajectory) -> float:
    """max over timesteps of || max(0, s_k) ||_2."""
    if not blocks:
        return 0.0
    vals = np.concatenate(
        [blk.values_along(traj.states, traj.controls) for blk in blocks], axis=1)
    return float(np.max(np.linalg.norm(np.maximum(vals, 0.0), axis=1)))


@dataclass
class ConstrainedResult:
    trajectory: Trajectory
    law: object
    al_state: AlState
    outer_iterations: int
    ddp_iterations: int
    cost: float
    violation: float


def solve_constrained(initial: Trajectory, base_cost: Cost, dyn, blocks,
                      ddp_settings: DdpSettings | None = None,
                      al_settings: AlSettings | None = None,
                      al_state: AlState | None = None) -> ConstrainedResult:
    """Alternate penalized DDP solves and multiplier updates (at most L
    outer loops), breaking once the worst per-timestep violation norm
    drops below the threshold.

    With an empty constraint stack this is exactly one plain DDP solve.
    An existing AlState may be passed in to persist multipliers across
    outer invocations (consensus iterations); it is not mutated.
    """
    ddp_settings = ddp_settings or DdpSettings()
    al_settings = al_settings or AlSettings()
    blocks = list(blocks)
    nrows = stack_rows(blocks)

    if nrows == 0:
        res = ddp.solve(initial, base_cost, dyn, ddp_settings)
        state = al_state or AlState.fresh(initial.horizon, 0, al_settings.beta_init)
        return ConstrainedResult(res.trajectory, res.law, state, 0,
                                 res.iterations, res.cost, 0.0)

    if al_state is None or al_settings.reset_multipliers:
        state = AlState.fresh(initial.horizon, nrows, al_settings.beta_init)
    else:
        state = AlState(al_state.multipliers.copy(), al_state.penalties.copy(),
                        al_state.outer_iteration)

    traj = initial
    law = None
    total_ddp = 0
    outer = 0
    for outer in range(1, al_settings.outer_iterations + 1):
        res = ddp.solve(traj, penalized_cost(base_cost, blocks, state), dyn,
                        ddp_settings)
        traj, law = res.trajectory, res.law
        total_ddp += res.iterations
        achieved = np.concatenate(
            [blk.values_along(traj.states, traj.controls) for blk in blocks], axis=1)
        state = update_multipliers(state, achieved, al_settings)
        viol = float(np.max(np.linalg.norm(np.maximum(achieved, 0.0), axis=1)))
        if viol <= al_settings.tol:
            break

    return ConstrainedResult(traj, law, state, outer, total_ddp,
                             base_cost.total(traj), violation_norm(blocks, traj))
