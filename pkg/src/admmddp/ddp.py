"""Single-problem DDP/iLQR solver: backward pass, forward pass, solve loop.

Only first-order dynamics expansions are used, so the backward pass is the
iLQR variant. The control Hessian is damped with reg * I whenever its
Cholesky factorization fails, and the solve loop escalates the damping
multiplicatively when the backward pass or the line search gets stuck.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .problem import (ControlLaw, Cost, DdpSettings, Dynamics, Trajectory,
                      ValueExpansion, rollout)


class SolverError(RuntimeError):
    """Base class for trajectory-solver failures."""


class NotPositiveDefiniteError(SolverError):
    """Control Hessian stayed indefinite after damping."""

    def __init__(self, k):
        super().__init__(f"control Hessian not positive definite at step {k}")
        self.k = k


class DivergedError(SolverError):
    """A rollout produced non-finite states."""


def backward_pass(nominal: Trajectory, cost: Cost, dyn: Dynamics,
                  reg: float = 0.0):
    """Run the backward value recursion around a nominal trajectory.

    Returns (ControlLaw, ValueExpansion). The nominal trajectory is used
    purely as an expansion point. Raises NotPositiveDefiniteError if some
    control Hessian is indefinite even after adding reg * I.
    """
    xs, us = nominal.states, nominal.controls
    fx, fu = dyn.jacobians_along(xs[:-1], us)
    e = cost.expand(xs, us)
    kff, kfb, v, vx, vxx, d1, d2, fail_k, _ = _kernels.ilqr_backward(
        np.ascontiguousarray(fx), np.ascontiguousarray(fu),
        np.ascontiguousarray(e.l), np.ascontiguousarray(e.lx),
        np.ascontiguousarray(e.lu), np.ascontiguousarray(e.lxx),
        np.ascontiguousarray(e.lxu), np.ascontiguousarray(e.luu),
        float(e.phi), np.ascontiguousarray(e.phix),
        np.ascontiguousarray(e.phixx), float(reg))
    if fail_k >= 0:
        raise NotPositiveDefiniteError(fail_k)
    return ControlLaw(kff, kfb, float(d1), float(d2)), ValueExpansion(v, vx, vxx)


def forward_pass(nominal: Trajectory, law: ControlLaw, dyn: Dynamics,
                 alpha: float) -> Trajectory:
    """Roll out u = u_bar + alpha * k + K (x - x_bar) from the nominal start.

    Raises DivergedError on non-finite states so the caller can shrink alpha.
    """
    if law.horizon != nominal.horizon:
        raise ValueError("control-law horizon does not match the nominal trajectory")
    K = nominal.horizon
    xs = np.empty_like(nominal.states)
    us = np.empty_like(nominal.controls)
    xs[0] = nominal.states[0]
    for k in range(K):
        us[k] = (nominal.controls[k] + alpha * law.feedforward[k]
                 + law.feedback[k] @ (xs[k] - nominal.states[k]))
        xs[k + 1] = dyn.step(xs[k], us[k])
        if not np.all(np.isfinite(xs[k + 1])):
            raise DivergedError(f"rollout diverged at step {k}")
    return Trajectory(xs, us, nominal.dt)


@dataclass
class DdpResult:
    trajectory: Trajectory
    law: ControlLaw
    iterations: int
    cost: float
    converged: bool
    cost_history: list = field(default_factory=list)
    reg: float = 0.0


def solve(initial: Trajectory, cost: Cost, dyn: Dynamics,
          settings: DdpSettings | None = None) -> DdpResult:
    """Iterate backward and line-searched forward passes until converged.

    The line search accepts the first candidate step size with a positive
    actual cost reduction; the returned trajectory never costs more than
    the (re-rolled) initial one.
    """
    settings = settings or DdpSettings()
    controls = initial.controls
    if not settings.warmstart:
        controls = np.zeros_like(controls)
    traj = rollout(dyn, initial.states[0], controls, initial.dt)
    cost_now = cost.total(traj)
    if not np.isfinite(cost_now):
        raise DivergedError("initial trajectory has non-finite cost")

    reg = settings.reg_init
    history = [cost_now]
    law = None
    iterations = 0
    converged = False

    while iterations < settings.max_iterations:
        try:
            law, _ = backward_pass(traj, cost, dyn, reg)
        except NotPositiveDefiniteError:
            if reg >= settings.reg_max:
                raise
            reg = min(max(reg * settings.reg_up, settings.reg_min), settings.reg_max)
            continue
        iterations += 1

        expected = max(law.expected_reduction(a) for a in settings.alphas)
        if expected < settings.tol_abs and expected < settings.tol_rel * max(1.0, abs(cost_now)):
            converged = True
            break

        accepted = False
        finite_seen = False
        for alpha in settings.alphas:
            try:
                cand = forward_pass(traj, law, dyn, alpha)
            except DivergedError:
                continue
            finite_seen = True
            c = cost.total(cand)
            if np.isfinite(c) and c < cost_now:
                drop = cost_now - c
                traj, cost_now = cand, c
                history.append(cost_now)
                accepted = True
                reg = max(reg / settings.reg_down, settings.reg_min)
                if drop < settings.tol_abs or drop < settings.tol_rel * max(1.0, abs(cost_now)):
                    converged = True
                break

        if converged:
            break
        if not accepted:
            if reg >= settings.reg_max:
                if not finite_seen:
                    raise DivergedError("all step sizes diverged at maximum damping")
                converged = True  # no improving step exists at max damping
                break
            reg = min(max(reg * settings.reg_up, settings.reg_min), settings.reg_max)

    if law is None:
        law, _ = backward_pass(traj, cost, dyn, reg)
    return DdpResult(traj, law, iterations, cost_now, converged, history, reg)
